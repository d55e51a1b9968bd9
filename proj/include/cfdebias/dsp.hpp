#pragma once

// Audio preprocessing for the two acoustic pipelines:
//  - STFT magnitude spectrograms cut into fixed-length clips (8 kHz input),
//  - transcript-segmented log-Mel spectrograms (16 kHz input).
// All functions are pure and deterministic.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cfdebias/autodiff.hpp"
#include "cfdebias/datamodel.hpp"

namespace cfd::dsp {

struct Audio {
  std::vector<double> samples;
  int sample_rate = 0;
};

// PCM 16/24/32-bit integer or 32/64-bit float WAV; channels are averaged.
Audio read_wav(const std::filesystem::path& path);
// Writes 16-bit PCM mono.
void write_wav(const std::filesystem::path& path, const Audio& audio);

/// F x T matrix, frequency bins by frames.
struct Spectrogram {
  Matrix data;
  int sample_rate = 0;
  int hop = 0;

  Eigen::Index bins() const { return data.rows(); }
  Eigen::Index frames() const { return data.cols(); }
};

struct ClipBatch {
  std::vector<Matrix> clips;  // each bins x length
  int length = 0;
  int stride = 0;
};

struct StftConfig {
  int sample_rate = 8000;
  int n_fft = 256;
  int hop = 128;
};

struct MelConfig {
  int sample_rate = 16000;
  int n_mels = 64;
  double win_ms = 25.0;
  double hop_ms = 10.0;
  int n_fft = 512;
  double log_floor = 1e-10;

  int win_length() const;
  int hop_length() const;
};

void to_json(Json& j, const StftConfig& c);
void from_json(const Json& j, StftConfig& c);
void to_json(Json& j, const MelConfig& c);
void from_json(const Json& j, MelConfig& c);

/// Band-limited (windowed-sinc) resampling. Output length is
/// round(len * dst_rate / src_rate).
std::vector<double> resample(std::span<const double> audio, int src_rate, int dst_rate);

/// Centered (zero-padded) Hann-windowed STFT magnitude;
/// n_fft/2 + 1 bins and 1 + floor(len / hop) frames.
Spectrogram stft_spectrogram(std::span<const double> audio, const StftConfig& cfg = {});

/// Per-bin statistics of a training set.
struct SpectrogramStats {
  Vector mean;
  Vector stddev;

  static constexpr double kStdFloor = 1e-8;
  static SpectrogramStats from(std::span<const Spectrogram> training_set);
};

void to_json(Json& j, const SpectrogramStats& s);
void from_json(const Json& j, SpectrogramStats& s);

/// Per-bin z-score with the supplied (training-set) statistics.
Spectrogram normalize_spectrogram(const Spectrogram& spec, const SpectrogramStats& stats);

/// Clips at offsets 0, stride, 2*stride, ... with offset + length <= T.
/// A spectrogram shorter than `length` yields one right-zero-padded clip.
ClipBatch segment_clips(const Spectrogram& spec, int length = 64, int stride = 32);
std::size_t clip_count(Eigen::Index frames, int length, int stride);

struct TranscriptRow {
  double start_s = 0.0;
  double stop_s = 0.0;
  std::string speaker;
  std::string value;
};

/// DAIC-WOZ transcript: start_time, stop_time, speaker, value; tab- or
/// comma-separated with a header row.
std::vector<TranscriptRow> read_transcript(const std::filesystem::path& path);

/// One clip per turn of `participant`, in transcript order.
std::vector<std::vector<double>> segment_by_transcript(std::span<const double> audio,
                                                       int sample_rate,
                                                       std::span<const TranscriptRow> transcript,
                                                       const std::string& participant = "Participant");

/// Log-Mel power spectrogram, n_mels x T with centered framing.
Spectrogram mel_spectrogram(std::span<const double> audio, const MelConfig& cfg = {});

/// Triangular HTK-scale filterbank, n_mels x (n_fft/2 + 1).
Matrix mel_filterbank(int n_mels, int n_fft, int sample_rate);

}  // namespace cfd::dsp
