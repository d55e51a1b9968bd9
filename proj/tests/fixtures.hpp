#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "cfdebias/harness.hpp"

namespace cfd::testing {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

struct ManifestPaths {
  fs::path train;
  fs::path test;
};

inline ManifestPaths write_synthetic(const fs::path& dir, const SynthConfig& config) {
  const SynthCorpus corpus = generate_synthetic(config);
  fs::create_directories(dir);
  save_manifest(corpus.train, dir / "train.json");
  save_manifest(corpus.test, dir / "test.json");
  return {dir / "train.json", dir / "test.json"};
}

// Short tone-plus-noise recordings whose pitch depends on gender and label,
// with a two-turn transcript per session.
inline CorpusManifest write_audio_corpus(const fs::path& dir, const std::string& split, int per_cell,
                                         double seconds, int sample_rate, std::uint64_t seed) {
  fs::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  CorpusManifest m;
  m.split_name = split;
  int k = 0;
  for (const Cell& cell : kCells) {
    for (int i = 0; i < per_cell; ++i, ++k) {
      const std::string id = split + std::to_string(k);
      dsp::Audio a;
      a.sample_rate = sample_rate;
      const double f0 = 180.0 + 90.0 * cell.first + 40.0 * cell.second + 5.0 * i;
      const auto n = static_cast<std::size_t>(seconds * sample_rate);
      for (std::size_t s = 0; s < n; ++s) {
        a.samples.push_back(0.3 * std::sin(2.0 * std::numbers::pi * f0 * static_cast<double>(s) / sample_rate) +
                            noise(rng));
      }
      dsp::write_wav(dir / (id + "_AUDIO.wav"), a);
      std::ofstream(dir / (id + "_TRANSCRIPT.csv"))
          << "start_time\tstop_time\tspeaker\tvalue\n0.0\t0.1\tEllie\thi\n0.1\t" << seconds / 2
          << "\tParticipant\tfine\n" << seconds / 2 << "\t" << seconds << "\tParticipant\tyes\n";
      SessionRecord r;
      r.session_id = id;
      r.gender = GenderCode{cell.first};
      r.label = DepressionLabel{cell.second};
      r.audio_path = id + "_AUDIO.wav";
      r.transcript_path = id + "_TRANSCRIPT.csv";
      m.records.push_back(r);
    }
  }
  save_manifest(m, dir / (split + ".json"));
  return m;
}

inline ExperimentConfig tabular_experiment(const ManifestPaths& paths, Method method, const fs::path& out,
                                           int epochs = 20, std::uint64_t seed = 0) {
  ExperimentConfig c;
  c.method = method;
  c.train_manifest = paths.train;
  c.test_manifest = paths.test;
  c.optimizer.epochs = epochs;
  c.seed = seed;
  c.output_dir = out;
  return c;
}

}  // namespace cfd::testing
