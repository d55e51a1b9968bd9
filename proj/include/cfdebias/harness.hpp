#pragma once

// Experiment orchestration: configuration, feature preparation, the training
// loop for the four debiasing conditions, evaluation, and report rendering.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfdebias/baselines.hpp"
#include "cfdebias/corpus.hpp"
#include "cfdebias/dsp.hpp"
#include "cfdebias/fairness.hpp"
#include "cfdebias/model.hpp"

namespace cfd {

enum class Method { kNone, kSubsample, kMixfeat, kCounterfactual };

std::string to_string(Method m);
Method method_from_string(const std::string& name);
// Row label used in comparison tables.
std::string display_name(Method m);

struct OptimizerConfig {
  std::string name = "adam";
  // Unset means 1e-3 for the tabular backbone and 1e-4 for audio backbones.
  std::optional<double> learning_rate;
  int batch_size = 16;
  int epochs = 100;

  double resolved_learning_rate(BackboneKind backbone) const;
};

struct ExperimentConfig {
  Method method = Method::kNone;
  ModelConfig model;
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  Averaging averaging = Averaging::kMacro;
  std::filesystem::path output_dir = "runs/default";
  dsp::StftConfig stft;
  dsp::MelConfig mel;
  bool class_weighting = false;
  MixOptions mix;
  bool debug_log = false;

  void validate() const;
};

void to_json(Json& j, const ExperimentConfig& c);
void from_json(const Json& j, ExperimentConfig& c);

/// Reads a JSON config; relative manifest and output paths are resolved
/// against the config file's directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Hex digest of the settings that determine results (output location and
/// logging flags excluded).
std::string config_hash(const ExperimentConfig& c);

/// Turns session records into encoder inputs. For audio backbones the
/// per-bin normalization statistics are fitted on the training split and
/// stored with the checkpoint.
class FeaturePipeline {
 public:
  FeaturePipeline(const ModelConfig& model, const dsp::StftConfig& stft, const dsp::MelConfig& mel);

  // Fits statistics on `train` (audio backbones) and returns its inputs.
  std::vector<EncoderInput> fit_transform(const CorpusManifest& train, const std::filesystem::path& base_dir);
  EncoderInput transform(const SessionRecord& record, const std::filesystem::path& base_dir) const;

  Json stats_json() const;
  void load_stats(const Json& j);

 private:
  // Unnormalized STFT spectrogram or per-segment Mel spectrograms.
  std::vector<dsp::Spectrogram> raw_audio(const SessionRecord& record, const std::filesystem::path& base_dir) const;
  EncoderInput finish(const SessionRecord& record, std::vector<dsp::Spectrogram> raw) const;

  ModelConfig model_;
  dsp::StftConfig stft_;
  dsp::MelConfig mel_;
  std::optional<dsp::SpectrogramStats> stats_;
};

struct TrainingStats {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_loss = 0.0;
  std::vector<double> epoch_losses;
  std::size_t train_size = 0;
  std::size_t augmented = 0;
};

void to_json(Json& j, const TrainingStats& s);
void from_json(const Json& j, TrainingStats& s);

/// Files written by train(): <output_dir>/checkpoint.json and weights.bin.
struct Checkpoint {
  std::filesystem::path path;  // checkpoint.json
  ExperimentConfig config;
  std::uint64_t train_hash = 0;
  TrainingStats stats;
};

/// Trains one condition and writes the best-training-loss weights. Only the
/// training manifest is read.
Checkpoint train(const ExperimentConfig& config);

struct LoadedModel {
  ExperimentConfig config;
  std::unique_ptr<DebiasModel> model;
  std::unique_ptr<FeaturePipeline> pipeline;
  TrainingStats stats;
};

/// Accepts checkpoint.json or the directory holding it.
LoadedModel load_checkpoint(const std::filesystem::path& path);

struct RunResult {
  std::string config_hash;
  BackboneKind backbone = BackboneKind::kTabular;
  Method method = Method::kNone;
  std::string test_manifest_hash;
  FairnessReport report;
  std::vector<PredictionRecord> predictions;
  std::string checkpoint;
  double wall_clock_seconds = 0.0;

  bool operator==(const RunResult&) const = default;
};

void to_json(Json& j, const RunResult& r);
void from_json(const Json& j, RunResult& r);

struct EvalOptions {
  // Defaults to the checkpoint's directory.
  std::optional<std::filesystem::path> output_dir;
  bool debug_log = false;
};

/// Predicts every real test record (TIE for the counterfactual condition,
/// factual logits otherwise) and writes predictions.jsonl, report.json,
/// report.txt and run.json.
RunResult evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& test_manifest,
                   const EvalOptions& options = {});

/// Recomputes a report from a stored prediction log.
FairnessReport recompute_report(const RunResult& result);

/// Rows grouped by backbone (first-seen order) with methods in the order
/// None, Sub-sampling, Data Augmentation, Counterfactual. Throws when the
/// results were evaluated on different test manifests or the list is empty.
std::vector<RunResult> compare(std::vector<RunResult> results);

enum class ReportFormat { kText, kJson };
ReportFormat report_format_from_string(const std::string& name);

/// Deterministic rendering; throws on an empty list. JSON holds the full
/// results and parses back to equal RunResults.
std::string emit_report(const std::vector<RunResult>& results, ReportFormat format);
std::vector<RunResult> parse_report_json(const std::string& text);

/// Loads every run under `dir` (directories holding run.json and
/// predictions.jsonl) with reports recomputed from the prediction logs.
std::vector<RunResult> collect_runs(const std::filesystem::path& dir);

/// Grid file: {"output_dir": ..., "runs": [config path or inline config, ...]}.
/// Trains and evaluates each entry, then writes comparison.txt and
/// comparison.json into the grid output directory.
std::vector<RunResult> run_grid(const std::filesystem::path& grid_path);

}  // namespace cfd
