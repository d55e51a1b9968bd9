#include "cfdebias/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace cfd::dsp {

namespace {

// FFTW's planner is not thread-safe; execution with a finished plan is.
std::mutex g_planner_mutex;

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    std::lock_guard lock(g_planner_mutex);
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(g_planner_mutex);
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void execute() { fftw_execute(plan_); }
  double magnitude(int k) const { return std::hypot(out_[k][0], out_[k][1]); }
  double power(int k) const { return out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1]; }

 private:
  int n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

std::vector<double> periodic_hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

// Frames a signal with centered zero padding and calls `emit(frame, fft)`
// after each transform. The window is centered inside the n_fft buffer.
template <typename Emit>
void frame_signal(std::span<const double> audio, int n_fft, int win, int hop, Emit emit) {
  const auto window = periodic_hann(win);
  const long len = static_cast<long>(audio.size());
  const long frames = 1 + len / hop;
  const int win_offset = (n_fft - win) / 2;
  RealFft fft(n_fft);
  for (long t = 0; t < frames; ++t) {
    const long start = t * hop - n_fft / 2;
    double* buf = fft.input();
    std::fill(buf, buf + n_fft, 0.0);
    for (int i = 0; i < win; ++i) {
      const long s = start + win_offset + i;
      if (s >= 0 && s < len) buf[win_offset + i] = audio[static_cast<std::size_t>(s)] * window[i];
    }
    fft.execute();
    emit(t, fft);
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::string trim(std::string s) {
  const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

int MelConfig::win_length() const { return static_cast<int>(std::lround(win_ms * sample_rate / 1000.0)); }
int MelConfig::hop_length() const { return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0)); }

void to_json(Json& j, const StftConfig& c) {
  j = Json{{"sample_rate", c.sample_rate}, {"n_fft", c.n_fft}, {"hop", c.hop}};
}

void from_json(const Json& j, StftConfig& c) {
  c = StftConfig{};
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.n_fft = j.value("n_fft", c.n_fft);
  c.hop = j.value("hop", c.hop);
}

void to_json(Json& j, const MelConfig& c) {
  j = Json{{"sample_rate", c.sample_rate}, {"n_mels", c.n_mels}, {"win_ms", c.win_ms},
           {"hop_ms", c.hop_ms},           {"n_fft", c.n_fft},   {"log_floor", c.log_floor}};
}

void from_json(const Json& j, MelConfig& c) {
  c = MelConfig{};
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.win_ms = j.value("win_ms", c.win_ms);
  c.hop_ms = j.value("hop_ms", c.hop_ms);
  c.n_fft = j.value("n_fft", c.n_fft);
  c.log_floor = j.value("log_floor", c.log_floor);
}

std::vector<double> resample(std::span<const double> audio, int src_rate, int dst_rate) {
  if (src_rate <= 0 || dst_rate <= 0) throw std::invalid_argument("resample: rates must be positive");
  if (audio.empty()) throw std::invalid_argument("resample: empty audio");
  if (src_rate == dst_rate) return {audio.begin(), audio.end()};

  const double ratio = static_cast<double>(dst_rate) / src_rate;
  const auto out_len = static_cast<std::size_t>(std::llround(audio.size() * ratio));
  const double cutoff = std::min(1.0, ratio);
  constexpr double kZeroCrossings = 16.0;
  const double half_width = kZeroCrossings / cutoff;
  const long len = static_cast<long>(audio.size());

  std::vector<double> out(out_len, 0.0);
  for (std::size_t n = 0; n < out_len; ++n) {
    const double x = static_cast<double>(n) / ratio;
    const long lo = std::max(0L, static_cast<long>(std::ceil(x - half_width)));
    const long hi = std::min(len - 1, static_cast<long>(std::floor(x + half_width)));
    double acc = 0.0;
    for (long k = lo; k <= hi; ++k) {
      const double d = x - static_cast<double>(k);
      const double arg = cutoff * d;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * d / half_width);
      acc += audio[static_cast<std::size_t>(k)] * cutoff * sinc * win;
    }
    out[n] = acc;
  }
  return out;
}

Spectrogram stft_spectrogram(std::span<const double> audio, const StftConfig& cfg) {
  if (audio.empty()) throw std::invalid_argument("stft_spectrogram: empty audio");
  if (cfg.n_fft < 2 || cfg.hop < 1) throw std::invalid_argument("stft_spectrogram: bad n_fft or hop");
  const int bins = cfg.n_fft / 2 + 1;
  const long frames = 1 + static_cast<long>(audio.size()) / cfg.hop;
  Spectrogram spec;
  spec.sample_rate = cfg.sample_rate;
  spec.hop = cfg.hop;
  spec.data.resize(bins, frames);
  frame_signal(audio, cfg.n_fft, cfg.n_fft, cfg.hop, [&](long t, const RealFft& fft) {
    for (int k = 0; k < bins; ++k) spec.data(k, t) = fft.magnitude(k);
  });
  return spec;
}

SpectrogramStats SpectrogramStats::from(std::span<const Spectrogram> training_set) {
  if (training_set.empty()) throw std::invalid_argument("SpectrogramStats: empty training set");
  const Eigen::Index bins = training_set.front().bins();
  Vector sum = Vector::Zero(bins), sq = Vector::Zero(bins);
  double count = 0.0;
  for (const Spectrogram& s : training_set) {
    if (s.bins() != bins) throw std::invalid_argument("SpectrogramStats: bin count mismatch");
    sum += s.data.rowwise().sum();
    sq += s.data.array().square().matrix().rowwise().sum();
    count += static_cast<double>(s.frames());
  }
  SpectrogramStats stats;
  stats.mean = sum / count;
  stats.stddev = (sq / count - stats.mean.cwiseProduct(stats.mean)).cwiseMax(0.0).cwiseSqrt();
  stats.stddev = stats.stddev.cwiseMax(kStdFloor);
  return stats;
}

void to_json(Json& j, const SpectrogramStats& s) {
  j = Json{{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
           {"stddev", std::vector<double>(s.stddev.data(), s.stddev.data() + s.stddev.size())}};
}

void from_json(const Json& j, SpectrogramStats& s) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto stddev = j.at("stddev").get<std::vector<double>>();
  s.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.stddev = Eigen::Map<const Vector>(stddev.data(), static_cast<Eigen::Index>(stddev.size()));
}

Spectrogram normalize_spectrogram(const Spectrogram& spec, const SpectrogramStats& stats) {
  if (stats.mean.size() != spec.bins() || stats.stddev.size() != spec.bins()) {
    throw std::invalid_argument("normalize_spectrogram: statistics do not match the bin count");
  }
  Spectrogram out = spec;
  const Vector inv = stats.stddev.cwiseMax(SpectrogramStats::kStdFloor).cwiseInverse();
  out.data = ((spec.data.colwise() - stats.mean).array().colwise() * inv.array()).matrix();
  return out;
}

std::size_t clip_count(Eigen::Index frames, int length, int stride) {
  if (frames < length) return 1;
  return 1 + static_cast<std::size_t>((frames - length) / stride);
}

ClipBatch segment_clips(const Spectrogram& spec, int length, int stride) {
  if (length < 1 || stride < 1) throw std::invalid_argument("segment_clips: length and stride must be >= 1");
  if (spec.frames() < 1) throw std::invalid_argument("segment_clips: empty spectrogram");
  ClipBatch batch;
  batch.length = length;
  batch.stride = stride;
  const Eigen::Index frames = spec.frames();
  if (frames < length) {
    Matrix clip = Matrix::Zero(spec.bins(), length);
    clip.leftCols(frames) = spec.data;
    batch.clips.push_back(std::move(clip));
    return batch;
  }
  for (Eigen::Index off = 0; off + length <= frames; off += stride) {
    batch.clips.emplace_back(spec.data.middleCols(off, length));
  }
  return batch;
}

std::vector<TranscriptRow> read_transcript(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) return {};
  const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
  std::vector<TranscriptRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (int f = 0; f < 3; ++f) {
      const std::size_t end = line.find(sep, start);
      if (end == std::string::npos) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": too few columns");
      }
      fields.push_back(trim(line.substr(start, end - start)));
      start = end + 1;
    }
    TranscriptRow row;
    try {
      row.start_s = std::stod(fields[0]);
      row.stop_s = std::stod(fields[1]);
    } catch (const std::logic_error&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": non-numeric time");
    }
    row.speaker = fields[2];
    row.value = trim(line.substr(start));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::vector<double>> segment_by_transcript(std::span<const double> audio, int sample_rate,
                                                       std::span<const TranscriptRow> transcript,
                                                       const std::string& participant) {
  if (sample_rate <= 0) throw std::invalid_argument("segment_by_transcript: sample rate must be positive");
  const long len = static_cast<long>(audio.size());
  std::vector<std::vector<double>> clips;
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    const TranscriptRow& row = transcript[i];
    if (row.speaker != participant) continue;
    const long start = std::lround(row.start_s * sample_rate);
    const long stop = std::lround(row.stop_s * sample_rate);
    if (!(row.start_s >= 0.0) || start > len || stop > len || stop < start) {
      throw std::out_of_range("transcript row " + std::to_string(i) + " (" + std::to_string(row.start_s) +
                              "s-" + std::to_string(row.stop_s) + "s) is outside the audio or not monotone");
    }
    if (stop == start) continue;
    clips.emplace_back(audio.begin() + start, audio.begin() + stop);
  }
  return clips;
}

Matrix mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  const int bins = n_fft / 2 + 1;
  Matrix fb = Matrix::Zero(n_mels, bins);
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int m = 0; m < n_mels + 2; ++m) edges[m] = mel_to_hz(mel_max * m / (n_mels + 1));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      if (f > lo && f < hi) fb(m, k) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

Spectrogram mel_spectrogram(std::span<const double> audio, const MelConfig& cfg) {
  if (audio.empty()) throw std::invalid_argument("mel_spectrogram: empty audio");
  const int win = cfg.win_length();
  const int hop = cfg.hop_length();
  if (win < 1 || hop < 1 || cfg.n_fft < win || cfg.n_mels < 1) {
    throw std::invalid_argument("mel_spectrogram: inconsistent window, hop, n_fft or n_mels");
  }
  const int bins = cfg.n_fft / 2 + 1;
  const long frames = 1 + static_cast<long>(audio.size()) / hop;
  Matrix power(bins, frames);
  frame_signal(audio, cfg.n_fft, win, hop, [&](long t, const RealFft& fft) {
    for (int k = 0; k < bins; ++k) power(k, t) = fft.power(k);
  });
  Spectrogram spec;
  spec.sample_rate = cfg.sample_rate;
  spec.hop = hop;
  spec.data = (mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate) * power)
                  .cwiseMax(cfg.log_floor)
                  .array()
                  .log()
                  .matrix();
  return spec;
}

}  // namespace cfd::dsp
