#pragma once

// Corpus manifests: DAIC-WOZ ingestion, label-distribution checks, and the
// synthetic spurious-correlation generator used for desk-scale experiments.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cfdebias/datamodel.hpp"

namespace cfd {

/// (gender, label) cell of the 2x2 distribution table.
using Cell = std::pair<int, int>;
using CellCounts = std::map<Cell, long>;
using CellFractions = std::map<Cell, double>;

inline constexpr std::array<Cell, 4> kCells{Cell{1, 0}, Cell{1, 1}, Cell{0, 0}, Cell{0, 1}};

/// Combined train+dev distribution of DAIC-WOZ.
CellCounts table1_counts();
/// DAIC-WOZ test distribution.
CellCounts table2_counts();
CellFractions fractions_of(const CellCounts& counts);

struct CorpusManifest {
  std::string split_name;
  std::vector<SessionRecord> records;

  CellCounts distribution() const;
  // Records that are not augmented; the only ones eligible for evaluation.
  std::vector<const SessionRecord*> real_records() const;
};

void to_json(Json& j, const CorpusManifest& m);
void from_json(const Json& j, CorpusManifest& m);

CorpusManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
// Stable 64-bit FNV-1a digest of the manifest's canonical JSON.
std::uint64_t manifest_hash(const CorpusManifest& manifest);

// Observer invoked with every manifest path that load_manifest opens.
using ManifestAccessObserver = std::function<void(const std::filesystem::path&)>;
void set_manifest_access_observer(ManifestAccessObserver observer);

struct CellDiff {
  Cell cell;
  long expected = 0;
  long actual = 0;
  long delta() const { return actual - expected; }
};

struct DistributionCheck {
  bool pass = true;
  std::vector<CellDiff> diff;
};

DistributionCheck validate_distribution(const CorpusManifest& manifest, const CellCounts& expected);

// ---------------------------------------------------------------------------
// DAIC-WOZ ingestion

struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> dev;
  std::vector<std::string> test;
};

struct IngestOptions {
  int phq_threshold = 10;
  // Code the score tables use for male participants (DAIC-WOZ uses 1).
  int source_male_code = 1;
  std::vector<std::string> exclude;
  // Score tables to read; empty means every *.csv in the root whose header
  // has a Participant_ID column.
  std::vector<std::filesystem::path> score_tables;
};

struct IngestResult {
  CorpusManifest train_combined;
  CorpusManifest test;
};

/// Builds the combined train split (train + dev ids) and the test split.
/// Labels are binarized as PHQ score >= phq_threshold.
IngestResult ingest_daicwoz(const std::filesystem::path& root, const SplitSpec& splits,
                            const IngestOptions& options = {});

/// Reads session ids from the AVEC-style split tables under root
/// (train_split*.csv, dev_split*.csv, *test_split*.csv).
SplitSpec discover_splits(const std::filesystem::path& root);

// ---------------------------------------------------------------------------
// Synthetic corpora

struct SynthConfig {
  long n_train = 142;
  long n_test = 47;
  CellFractions train_proportions = fractions_of(table1_counts());
  CellFractions test_proportions = fractions_of(table2_counts());
  int feature_dim = 16;
  std::pair<int, int> seq_len_range{4, 12};
  double signal_strength = 1.0;
  double gender_leakage = 1.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
};

void to_json(Json& j, const SynthConfig& c);
void from_json(const Json& j, SynthConfig& c);

/// Largest-remainder apportionment; counts sum to n exactly.
CellCounts apportion(const CellFractions& proportions, long n);

struct SynthCorpus {
  CorpusManifest train;
  CorpusManifest test;
  // Unit directions carrying the label signal and the gender shortcut.
  Vector label_direction;
  Vector gender_direction;
};

SynthCorpus generate_synthetic(const SynthConfig& config);

}  // namespace cfd
