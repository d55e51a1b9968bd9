#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "cfdebias/dsp.hpp"
#include "doctest.h"

using namespace cfd;
using namespace cfd::dsp;
namespace fs = std::filesystem;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 0.3);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Direct DFT of one centered, Hann-windowed frame.
double dft_magnitude(const std::vector<double>& audio, int n_fft, int hop, long frame, int bin) {
  std::complex<double> acc = 0.0;
  const long start = frame * hop - n_fft / 2;
  for (int i = 0; i < n_fft; ++i) {
    const long s = start + i;
    if (s < 0 || s >= static_cast<long>(audio.size())) continue;
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n_fft);
    acc += audio[s] * w * std::polar(1.0, -2.0 * std::numbers::pi * bin * i / n_fft);
  }
  return std::abs(acc);
}

std::size_t enumerate_clips(long T, int length, int stride) {
  std::size_t n = 0;
  for (long off = 0; off + length <= T; off += stride) ++n;
  return std::max<std::size_t>(n, 1);
}

}  // namespace

TEST_CASE("STFT shape and values") {
  const auto audio = noise(8192, 1);
  const Spectrogram s = stft_spectrogram(audio);
  CHECK(s.bins() == 129);
  CHECK(s.frames() == 65);
  for (long t : {0L, 1L, 30L, 64L}) {
    for (int k : {0, 5, 64, 128}) {
      CHECK(s.data(k, t) == doctest::Approx(dft_magnitude(audio, 256, 128, t, k)).epsilon(1e-9));
    }
  }
  const std::vector<double> zeros(1000, 0.0);
  CHECK(stft_spectrogram(zeros).data.isZero());
  CHECK_THROWS(stft_spectrogram(std::vector<double>{}));
}

TEST_CASE("resample") {
  const auto audio = noise(16000, 2);
  CHECK(resample(audio, 16000, 8000).size() == 8000);
  CHECK(resample(audio, 16000, 16000) == audio);
  CHECK(resample(audio, 8000, 16000).size() == 32000);
  CHECK_THROWS(resample(audio, 0, 8000));
  // a low tone survives downsampling
  std::vector<double> tone(16000);
  for (int i = 0; i < 16000; ++i) tone[i] = std::sin(2.0 * std::numbers::pi * 440.0 * i / 16000.0);
  const auto down = resample(tone, 16000, 8000);
  double err = 0.0;
  for (int i = 200; i < 7800; ++i) {
    err = std::max(err, std::abs(down[i] - std::sin(2.0 * std::numbers::pi * 440.0 * i / 8000.0)));
  }
  CHECK(err < 1e-2);
}

TEST_CASE("normalization uses the supplied statistics") {
  std::vector<Spectrogram> train;
  for (unsigned s = 0; s < 3; ++s) train.push_back(stft_spectrogram(noise(2000 + 500 * s, 10 + s)));
  const SpectrogramStats stats = SpectrogramStats::from(train);
  Matrix all(129, 0);
  for (const auto& sp : train) {
    Matrix n = normalize_spectrogram(sp, stats).data;
    Matrix joined(129, all.cols() + n.cols());
    joined << all, n;
    all = joined;
  }
  for (int k = 0; k < 129; ++k) {
    const double mean = all.row(k).mean();
    const double var = (all.row(k).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-6));
  }
  // a zero-variance bin stays finite
  Spectrogram flat{Matrix::Constant(3, 4, 2.0), 8000, 128};
  const SpectrogramStats fs = SpectrogramStats::from(std::span<const Spectrogram>(&flat, 1));
  CHECK(normalize_spectrogram(flat, fs).data.allFinite());
  // test data normalized with training statistics, not its own
  const Spectrogram test = stft_spectrogram(noise(3000, 99));
  const Matrix expected =
      ((test.data.colwise() - stats.mean).array().colwise() / stats.stddev.array()).matrix();
  CHECK(normalize_spectrogram(test, stats).data.isApprox(expected, 1e-12));
}

TEST_CASE("segment_clips") {
  const Spectrogram s64{Matrix::Ones(129, 64), 8000, 128};
  CHECK(segment_clips(s64).clips.size() == 1);
  Matrix m(129, 128);
  for (int t = 0; t < 128; ++t) m.col(t).setConstant(t);
  const ClipBatch b = segment_clips(Spectrogram{m, 8000, 128});
  REQUIRE(b.clips.size() == 3);
  CHECK(b.clips[1](0, 0) == 32);
  CHECK(b.clips[2](0, 63) == 127);
  const ClipBatch short_clip = segment_clips(Spectrogram{Matrix::Ones(129, 40), 8000, 128});
  REQUIRE(short_clip.clips.size() == 1);
  CHECK(short_clip.clips[0].cols() == 64);
  CHECK(short_clip.clips[0].col(39).isOnes());
  CHECK(short_clip.clips[0].col(40).isZero());
  for (long T = 1; T <= 300; ++T) CHECK(clip_count(T, 64, 32) == enumerate_clips(T, 64, 32));
}

TEST_CASE("transcript segmentation") {
  const auto audio = noise(8000 * 5, 3);
  const std::vector<TranscriptRow> rows{{0.0, 0.5, "Ellie", "hi"},
                                        {1.0, 2.0, "Participant", "a"},
                                        {2.0, 2.5, "Ellie", "b"},
                                        {2.5, 3.0, "Participant", "c"},
                                        {3.5, 4.75, "Participant", "d"}};
  const auto clips = segment_by_transcript(audio, 8000, rows);
  REQUIRE(clips.size() == 3);
  CHECK(clips[0].size() == 8000);
  CHECK(clips[0][0] == audio[8000]);
  CHECK(segment_by_transcript(audio, 8000, std::span(rows).subspan(0, 1)).empty());
  const std::vector<TranscriptRow> bad{{4.0, 9.0, "Participant", "x"}};
  CHECK_THROWS_WITH_AS(segment_by_transcript(audio, 8000, bad), doctest::Contains("row 0"), std::out_of_range);

  const fs::path p = fs::temp_directory_path() / "cfdebias_transcript.csv";
  std::ofstream(p) << "start_time\tstop_time\tspeaker\tvalue\n36.588\t39.868\tEllie\thi i'm ellie\n"
                      "62.328\t63.178\tParticipant\tgood\n";
  const auto parsed = read_transcript(p);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[1].speaker == "Participant");
  CHECK(parsed[1].start_s == doctest::Approx(62.328));
  fs::remove(p);
}

TEST_CASE("Mel spectrogram") {
  const auto audio = noise(16000, 4);
  const Spectrogram s = mel_spectrogram(audio);
  CHECK(s.bins() == 64);
  CHECK(s.frames() == 101);
  const Spectrogram quiet = mel_spectrogram(std::vector<double>(1600, 0.0));
  CHECK((quiet.data.array() - std::log(1e-10)).abs().maxCoeff() < 1e-12);
  const Matrix fb = mel_filterbank(64, 512, 16000);
  CHECK(fb.rows() == 64);
  CHECK(fb.cols() == 257);
  CHECK(fb.minCoeff() >= 0.0);
  CHECK(fb.maxCoeff() <= 1.0);
  for (int m = 0; m < 64; ++m) CHECK(fb.row(m).sum() > 0.0);
}

TEST_CASE("WAV round trip") {
  const fs::path p = fs::temp_directory_path() / "cfdebias_roundtrip.wav";
  Audio a{noise(1234, 5), 8000};
  for (double& x : a.samples) x = std::clamp(x, -0.99, 0.99);
  write_wav(p, a);
  const Audio b = read_wav(p);
  CHECK(b.sample_rate == 8000);
  REQUIRE(b.samples.size() == a.samples.size());
  double err = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) err = std::max(err, std::abs(a.samples[i] - b.samples[i]));
  CHECK(err < 1.0 / 32767.0);
  std::ofstream(p) << "not audio";
  CHECK_THROWS(read_wav(p));
  fs::remove(p);
}
