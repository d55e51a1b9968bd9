#include "cfdebias/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace cfd {

namespace fs = std::filesystem;
using nn::Flow;
using nn::Tape;
using nn::Var;

namespace {

constexpr const char* kCheckpointFormat = "cfdebias-checkpoint-1";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

int method_rank(Method m) { return static_cast<int>(m); }

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::kNone: return "none";
    case Method::kSubsample: return "subsample";
    case Method::kMixfeat: return "mixfeat";
    case Method::kCounterfactual: return "counterfactual";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "none") return Method::kNone;
  if (name == "subsample") return Method::kSubsample;
  if (name == "mixfeat") return Method::kMixfeat;
  if (name == "counterfactual") return Method::kCounterfactual;
  throw std::invalid_argument("unknown method '" + name + "' (expected none, subsample, mixfeat or counterfactual)");
}

std::string display_name(Method m) {
  switch (m) {
    case Method::kNone: return "None";
    case Method::kSubsample: return "Sub-sampling";
    case Method::kMixfeat: return "Data Augmentation";
    case Method::kCounterfactual: return "Counterfactual";
  }
  return "unknown";
}

double OptimizerConfig::resolved_learning_rate(BackboneKind backbone) const {
  if (learning_rate) return *learning_rate;
  return backbone == BackboneKind::kTabular ? 1e-3 : 1e-4;
}

void ExperimentConfig::validate() const {
  model.validate();
  if (optimizer.name != "adam") throw std::invalid_argument("config: only the adam optimizer is supported");
  if (optimizer.epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (optimizer.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (!(optimizer.resolved_learning_rate(model.backbone) > 0.0)) {
    throw std::invalid_argument("config: learning_rate must be positive");
  }
  if (train_manifest.empty()) throw std::invalid_argument("config: train_manifest is required");
}

void to_json(Json& j, const ExperimentConfig& c) {
  Json model = c.model;
  model.erase("backbone");
  model.erase("eps_mode");
  Json optimizer{{"name", c.optimizer.name}, {"batch_size", c.optimizer.batch_size}, {"epochs", c.optimizer.epochs}};
  optimizer["learning_rate"] = c.optimizer.learning_rate ? Json(*c.optimizer.learning_rate) : Json(nullptr);
  j = Json{{"backbone", to_string(c.model.backbone)},
           {"method", to_string(c.method)},
           {"train_manifest", c.train_manifest.string()},
           {"test_manifest", c.test_manifest.string()},
           {"optimizer", optimizer},
           {"seed", c.seed},
           {"metrics", Json{{"averaging", to_string(c.averaging)}}},
           {"output_dir", c.output_dir.string()},
           {"model", model},
           {"stft", c.stft},
           {"mel", c.mel},
           {"class_weighting", c.class_weighting},
           {"eps_mode", to_string(c.model.eps_mode)},
           {"mixfeat", c.mix},
           {"debug_log", c.debug_log}};
}

void from_json(const Json& j, ExperimentConfig& c) {
  static const std::set<std::string> known{"backbone", "method", "train_manifest", "test_manifest", "optimizer",
                                           "seed", "metrics", "output_dir", "model", "stft", "mel",
                                           "class_weighting", "eps_mode", "mixfeat", "debug_log"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  c = ExperimentConfig{};
  Json model = j.value("model", Json::object());
  model["backbone"] = j.value("backbone", std::string("tabular"));
  model["eps_mode"] = j.value("eps_mode", std::string("head"));
  c.model = model.get<ModelConfig>();
  c.method = method_from_string(j.value("method", std::string("none")));
  c.train_manifest = j.value("train_manifest", std::string());
  c.test_manifest = j.value("test_manifest", std::string());
  if (j.contains("optimizer")) {
    const Json& o = j.at("optimizer");
    c.optimizer.name = o.value("name", c.optimizer.name);
    if (o.contains("learning_rate") && !o.at("learning_rate").is_null()) {
      c.optimizer.learning_rate = o.at("learning_rate").get<double>();
    }
    c.optimizer.batch_size = o.value("batch_size", c.optimizer.batch_size);
    c.optimizer.epochs = o.value("epochs", c.optimizer.epochs);
  }
  c.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("metrics")) {
    c.averaging = averaging_from_string(j.at("metrics").value("averaging", std::string("macro")));
  }
  c.output_dir = j.value("output_dir", c.output_dir.string());
  if (j.contains("stft")) c.stft = j.at("stft").get<dsp::StftConfig>();
  if (j.contains("mel")) c.mel = j.at("mel").get<dsp::MelConfig>();
  c.class_weighting = j.value("class_weighting", false);
  if (j.contains("mixfeat")) c.mix = j.at("mixfeat").get<MixOptions>();
  c.debug_log = j.value("debug_log", false);
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  ExperimentConfig c;
  try {
    c = Json::parse(read_text_file(path)).get<ExperimentConfig>();
  } catch (const Json::exception& e) {
    throw std::runtime_error("config " + path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  c.train_manifest = resolve(base, c.train_manifest);
  c.test_manifest = resolve(base, c.test_manifest);
  c.output_dir = resolve(base, c.output_dir);
  return c;
}

std::string config_hash(const ExperimentConfig& c) {
  Json j = c;
  j.erase("output_dir");
  j.erase("debug_log");
  j.erase("train_manifest");
  j.erase("test_manifest");
  return hex64(fnv1a(j.dump()));
}

// ---------------------------------------------------------------------------

FeaturePipeline::FeaturePipeline(const ModelConfig& model, const dsp::StftConfig& stft, const dsp::MelConfig& mel)
    : model_(model), stft_(stft), mel_(mel) {}

std::vector<dsp::Spectrogram> FeaturePipeline::raw_audio(const SessionRecord& r, const fs::path& base) const {
  if (!r.audio_path) {
    throw std::invalid_argument("session " + r.session_id + ": the " + to_string(model_.backbone) +
                                " backbone needs audio_path");
  }
  const dsp::Audio audio = dsp::read_wav(resolve(base, *r.audio_path));
  std::vector<dsp::Spectrogram> out;
  if (model_.backbone == BackboneKind::kSta) {
    const auto samples = dsp::resample(audio.samples, audio.sample_rate, stft_.sample_rate);
    out.push_back(dsp::stft_spectrogram(samples, stft_));
    if (out.back().bins() != model_.sta.spectrogram_bins) {
      throw std::invalid_argument("session " + r.session_id + ": STFT gives " + std::to_string(out.back().bins()) +
                                  " bins, the STA backbone expects " + std::to_string(model_.sta.spectrogram_bins));
    }
    return out;
  }
  const auto samples = dsp::resample(audio.samples, audio.sample_rate, mel_.sample_rate);
  std::vector<std::vector<double>> pieces;
  if (r.transcript_path) {
    const auto rows = dsp::read_transcript(resolve(base, *r.transcript_path));
    pieces = dsp::segment_by_transcript(samples, mel_.sample_rate, rows);
  }
  if (pieces.empty()) pieces.push_back(samples);
  for (const auto& piece : pieces) {
    if (piece.empty()) continue;
    out.push_back(dsp::mel_spectrogram(piece, mel_));
    if (out.back().bins() != model_.netvlad.mel_bins) {
      throw std::invalid_argument("session " + r.session_id + ": Mel spectrogram has " +
                                  std::to_string(out.back().bins()) + " bands, the NetVLAD backbone expects " +
                                  std::to_string(model_.netvlad.mel_bins));
    }
  }
  if (out.empty()) throw std::invalid_argument("session " + r.session_id + ": audio is empty");
  return out;
}

EncoderInput FeaturePipeline::finish(const SessionRecord&, std::vector<dsp::Spectrogram> raw) const {
  if (model_.backbone == BackboneKind::kSta) {
    const dsp::Spectrogram norm = dsp::normalize_spectrogram(raw.front(), *stats_);
    return ClipInput{dsp::segment_clips(norm, model_.sta.clip_length, model_.sta.clip_stride).clips};
  }
  SegmentInput in;
  for (const dsp::Spectrogram& s : raw) in.segments.push_back(dsp::normalize_spectrogram(s, *stats_).data.transpose());
  return in;
}

EncoderInput FeaturePipeline::transform(const SessionRecord& r, const fs::path& base) const {
  if (model_.backbone == BackboneKind::kTabular) {
    if (!r.features) throw std::invalid_argument("session " + r.session_id + ": the tabular backbone needs features");
    if (r.features->dim() != model_.tabular_dim) {
      throw std::invalid_argument("session " + r.session_id + ": shape mismatch, features have " +
                                  std::to_string(r.features->dim()) + " dims but the model expects " +
                                  std::to_string(model_.tabular_dim));
    }
    return SequenceInput{r.features->data};
  }
  if (!stats_) throw std::logic_error("feature pipeline: normalization statistics were never fitted");
  return finish(r, raw_audio(r, base));
}

std::vector<EncoderInput> FeaturePipeline::fit_transform(const CorpusManifest& train, const fs::path& base) {
  std::vector<EncoderInput> out;
  out.reserve(train.records.size());
  if (model_.backbone == BackboneKind::kTabular) {
    for (const SessionRecord& r : train.records) out.push_back(transform(r, base));
    return out;
  }
  std::vector<std::vector<dsp::Spectrogram>> raws;
  std::vector<dsp::Spectrogram> all;
  for (const SessionRecord& r : train.records) {
    raws.push_back(raw_audio(r, base));
    all.insert(all.end(), raws.back().begin(), raws.back().end());
  }
  stats_ = dsp::SpectrogramStats::from(all);
  for (std::size_t i = 0; i < raws.size(); ++i) out.push_back(finish(train.records[i], std::move(raws[i])));
  return out;
}

Json FeaturePipeline::stats_json() const { return stats_ ? Json(*stats_) : Json(nullptr); }

void FeaturePipeline::load_stats(const Json& j) {
  if (j.is_null()) {
    stats_.reset();
  } else {
    stats_ = j.get<dsp::SpectrogramStats>();
  }
}

void to_json(Json& j, const TrainingStats& s) {
  j = Json{{"epochs_run", s.epochs_run}, {"best_epoch", s.best_epoch},   {"best_loss", s.best_loss},
           {"epoch_losses", s.epoch_losses}, {"train_size", s.train_size}, {"augmented", s.augmented}};
}

void from_json(const Json& j, TrainingStats& s) {
  s.epochs_run = j.at("epochs_run").get<int>();
  s.best_epoch = j.at("best_epoch").get<int>();
  s.best_loss = j.at("best_loss").get<double>();
  s.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
  s.train_size = j.at("train_size").get<std::size_t>();
  s.augmented = j.at("augmented").get<std::size_t>();
}

// ---------------------------------------------------------------------------
// Training

namespace {

// One training example: a real record, or a mix of two same-cell records.
struct Item {
  std::size_t a = 0;
  std::optional<std::size_t> b;
  double lambda = 1.0;
  int gender = 0;
  int label = 0;
};

Var batch_alf(Tape& tape, const DebiasModel& model, const std::vector<EncoderInput>& inputs,
              const std::vector<Item>& items, const std::vector<std::size_t>& batch, Flow flow) {
  std::map<std::size_t, Var> cache;
  auto alf_of = [&](std::size_t i) {
    auto it = cache.find(i);
    if (it != cache.end()) return it->second;
    return cache[i] = model.alf(tape, inputs[i], flow);
  };
  std::vector<Var> rows;
  rows.reserve(batch.size());
  for (std::size_t k : batch) {
    const Item& it = items[k];
    Var x = alf_of(it.a);
    if (it.b) x = ad::add(ad::scale(x, it.lambda), ad::scale(alf_of(*it.b), 1.0 - it.lambda));
    rows.push_back(x);
  }
  return ad::concat_rows(rows);
}

}  // namespace

Checkpoint train(const ExperimentConfig& config) {
  config.validate();
  CorpusManifest manifest = load_manifest(config.train_manifest);
  const fs::path base = config.train_manifest.parent_path();
  if (manifest.records.empty()) throw std::invalid_argument("train: training manifest has no records");
  for (const SessionRecord& r : manifest.records) {
    const ValidationResult v = validate_session(r);
    if (!v.ok()) throw std::invalid_argument("train: session " + r.session_id + ": " + v.violations.front());
  }
  const std::uint64_t train_hash = manifest_hash(manifest);

  const BackboneKind backbone = config.model.backbone;
  if (config.method == Method::kSubsample) manifest = sub_sample(manifest, config.seed);
  if (config.method == Method::kMixfeat && backbone == BackboneKind::kTabular) {
    manifest = balance_by_augmentation(manifest, config.seed, config.mix);
  }

  FeaturePipeline pipeline(config.model, config.stft, config.mel);
  const std::vector<EncoderInput> inputs = pipeline.fit_transform(manifest, base);

  std::vector<Item> items;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const SessionRecord& r = manifest.records[i];
    items.push_back(Item{i, std::nullopt, 1.0, r.gender.value, r.label.value});
  }
  TrainingStats stats;
  for (const SessionRecord& r : manifest.records) stats.augmented += r.augmented() ? 1 : 0;
  if (config.method == Method::kMixfeat && backbone != BackboneKind::kTabular) {
    // Audio ALFs depend on the encoder weights, so mixes are planned once and
    // interpolated live on every forward pass.
    const auto members = cell_members(manifest);
    const CellCounts need = plan_balance(manifest.distribution());
    for (const auto& [cell, idx] : members) {
      const auto plans = plan_mixes(idx.size(), static_cast<std::size_t>(need.at(cell)),
                                    mix_seed(config.seed, static_cast<std::uint64_t>(2 * cell.first + cell.second)),
                                    config.mix);
      for (const MixPlan& p : plans) items.push_back(Item{idx[p.i], idx[p.j], p.lambda, cell.first, cell.second});
      stats.augmented += plans.size();
    }
  }
  stats.train_size = items.size();

  std::array<double, 2> class_weight{1.0, 1.0};
  if (config.class_weighting) {
    std::array<double, 2> n{0.0, 0.0};
    for (const Item& it : items) n[static_cast<std::size_t>(it.label)] += 1.0;
    for (std::size_t k = 0; k < 2; ++k) {
      class_weight[k] = n[k] > 0.0 ? static_cast<double>(items.size()) / (2.0 * n[k]) : 0.0;
    }
  }

  DebiasModel model(config.model, config.seed);
  const bool counterfactual = config.method == Method::kCounterfactual;
  std::vector<ad::Parameter*> trained = model.factual_parameters();
  if (counterfactual) {
    for (ad::Parameter* p : model.gender_parameters()) trained.push_back(p);
    for (ad::Parameter* p : model.epsilon_parameters()) trained.push_back(p);
  }
  nn::Adam adam(config.optimizer.resolved_learning_rate(backbone));

  std::mt19937_64 order_rng(mix_seed(config.seed, 0xA5));
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch_size = static_cast<std::size_t>(config.optimizer.batch_size);
  double best = std::numeric_limits<double>::infinity();
  nn::ParameterStore::Snapshot best_weights = model.store().snapshot();

  for (int epoch = 1; epoch <= config.optimizer.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
      const auto n = static_cast<Eigen::Index>(batch.size());
      Matrix genders(n, 1);
      std::vector<int> labels(batch.size());
      std::vector<double> weights(batch.size());
      for (std::size_t k = 0; k < batch.size(); ++k) {
        genders(static_cast<Eigen::Index>(k), 0) = items[batch[k]].gender;
        labels[k] = items[batch[k]].label;
        weights[k] = class_weight[static_cast<std::size_t>(labels[k])];
      }
      const std::span<const double> w =
          config.class_weighting ? std::span<const double>(weights) : std::span<const double>();

      model.store().zero_grad();
      Tape tape;
      Var alf = batch_alf(tape, model, inputs, items, batch, Flow::kTrain);
      Var loss;
      if (counterfactual) {
        loss = counterfactual_losses(tape, model, alf, genders, labels, w).total;
      } else {
        loss = ad::cross_entropy(model.factual_logits(tape, alf, genders, Flow::kTrain), labels, w);
      }
      tape.backward(loss);
      adam.step(trained);
      loss_sum += loss.scalar() * static_cast<double>(n);
    }
    const double epoch_loss = loss_sum / static_cast<double>(items.size());
    stats.epoch_losses.push_back(epoch_loss);
    stats.epochs_run = epoch;
    if (epoch_loss < best) {
      best = epoch_loss;
      stats.best_epoch = epoch;
      best_weights = model.store().snapshot();
    }
  }
  stats.best_loss = best;
  model.store().restore(best_weights);

  fs::create_directories(config.output_dir);
  model.store().save(config.output_dir / "weights.bin");
  Json ckpt{{"format", kCheckpointFormat},
            {"config", config},
            {"config_hash", config_hash(config)},
            {"train_manifest_hash", hex64(train_hash)},
            {"training", stats},
            {"pipeline", pipeline.stats_json()},
            {"weights", "weights.bin"}};
  const fs::path path = config.output_dir / "checkpoint.json";
  write_text_file(path, ckpt.dump(2) + "\n");
  return Checkpoint{path, config, train_hash, stats};
}

LoadedModel load_checkpoint(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "checkpoint.json" : path;
  if (!fs::exists(file)) throw std::runtime_error("checkpoint not found: " + file.string());
  const Json j = Json::parse(read_text_file(file));
  if (j.value("format", std::string()) != kCheckpointFormat) {
    throw std::runtime_error(file.string() + " is not a checkpoint file");
  }
  LoadedModel out;
  out.config = j.at("config").get<ExperimentConfig>();
  out.stats = j.at("training").get<TrainingStats>();
  out.model = std::make_unique<DebiasModel>(out.config.model, out.config.seed);
  out.model->store().load(file.parent_path() / j.value("weights", std::string("weights.bin")));
  out.pipeline = std::make_unique<FeaturePipeline>(out.config.model, out.config.stft, out.config.mel);
  out.pipeline->load_stats(j.at("pipeline"));
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation and reports

void to_json(Json& j, const RunResult& r) {
  j = Json{{"config_hash", r.config_hash},
           {"backbone", to_string(r.backbone)},
           {"method", to_string(r.method)},
           {"test_manifest_hash", r.test_manifest_hash},
           {"report", r.report},
           {"checkpoint", r.checkpoint},
           {"wall_clock_seconds", r.wall_clock_seconds},
           {"predictions", r.predictions}};
}

void from_json(const Json& j, RunResult& r) {
  r.config_hash = j.at("config_hash").get<std::string>();
  r.backbone = backbone_from_string(j.at("backbone").get<std::string>());
  r.method = method_from_string(j.at("method").get<std::string>());
  r.test_manifest_hash = j.at("test_manifest_hash").get<std::string>();
  r.report = j.at("report").get<FairnessReport>();
  r.checkpoint = j.value("checkpoint", std::string());
  r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  r.predictions = j.value("predictions", std::vector<PredictionRecord>{});
}

namespace {

// Deterministic part of a run: everything except timing and locations.
Json report_json(const RunResult& r) {
  return Json{{"config_hash", r.config_hash},
              {"backbone", to_string(r.backbone)},
              {"method", to_string(r.method)},
              {"test_manifest_hash", r.test_manifest_hash},
              {"report", r.report}};
}

std::string pad(const std::string& s, std::size_t width, bool right) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

std::string text_table(const std::vector<RunResult>& results) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Backbone", "Method"};
  for (const char* c : kReportColumns) header.emplace_back(c);
  rows.push_back(header);
  for (const RunResult& r : results) {
    std::vector<std::string> row{to_string(r.backbone), display_name(r.method)};
    for (const std::string& cell : report_cells(r.report)) row.push_back(cell);
    rows.push_back(row);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) line += "  ";
      line += pad(row[c], width[c], c >= 2);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace

RunResult evaluate(const fs::path& checkpoint, const fs::path& test_manifest, const EvalOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedModel loaded = load_checkpoint(checkpoint);
  const CorpusManifest manifest = load_manifest(test_manifest);
  const fs::path base = test_manifest.parent_path();
  if (manifest.records.empty()) throw std::invalid_argument("evaluate: test manifest has no records");

  const bool counterfactual = loaded.config.method == Method::kCounterfactual;
  const DebiasModel& model = *loaded.model;
  RunResult result;
  result.config_hash = config_hash(loaded.config);
  result.backbone = loaded.config.model.backbone;
  result.method = loaded.config.method;
  result.test_manifest_hash = hex64(manifest_hash(manifest));
  std::string debug;
  for (const SessionRecord& r : manifest.records) {
    if (r.augmented()) throw std::invalid_argument("evaluate: test record " + r.session_id + " is augmented");
    const ValidationResult v = validate_session(r);
    if (!v.ok()) throw std::invalid_argument("evaluate: session " + r.session_id + ": " + v.violations.front());
    const Vector alf = model.alf_value(loaded.pipeline->transform(r, base));
    const TotalEffect te = model.total_effect(alf, r.gender);
    PredictionRecord p{r.session_id, r.gender, r.label, DepressionLabel{}, std::nullopt};
    if (counterfactual) {
      p.tie_scores = te.tie();
      p.predicted_label = predict_tie(*p.tie_scores);
    } else {
      p.predicted_label = predict_factual(te.branches.d_f_factual);
    }
    if (options.debug_log || loaded.config.debug_log) {
      debug += Json{{"session_id", r.session_id},
                    {"d_g", te.branches.d_g},
                    {"d_f", te.branches.d_f_factual},
                    {"d_eps", te.branches.d_f_counterfactual},
                    {"fused_factual", te.fused_factual},
                    {"fused_counterfactual", te.fused_counterfactual},
                    {"tie", te.tie()},
                    {"prediction", p.predicted_label.value}}
                   .dump() +
               "\n";
    }
    result.predictions.push_back(std::move(p));
  }
  result.report = fairness_report(result.predictions, loaded.config.averaging);

  const fs::path ckpt_file = fs::is_directory(checkpoint) ? checkpoint / "checkpoint.json" : checkpoint;
  const fs::path out = options.output_dir ? *options.output_dir : ckpt_file.parent_path();
  result.checkpoint = ckpt_file.string();
  write_text_file(out / "predictions.jsonl", to_jsonl(result.predictions));
  write_text_file(out / "report.json", report_json(result).dump(2) + "\n");
  write_text_file(out / "report.txt", text_table({result}));
  if (!debug.empty()) write_text_file(out / "debug.jsonl", debug);
  result.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Json run = result;
  run.erase("predictions");
  write_text_file(out / "run.json", run.dump(2) + "\n");
  return result;
}

FairnessReport recompute_report(const RunResult& result) {
  return fairness_report(result.predictions, result.report.averaging);
}

std::vector<RunResult> compare(std::vector<RunResult> results) {
  if (results.empty()) throw std::invalid_argument("compare: no results");
  for (const RunResult& r : results) {
    if (r.test_manifest_hash != results.front().test_manifest_hash) {
      throw std::invalid_argument("compare: runs were evaluated on different test manifests");
    }
  }
  std::vector<BackboneKind> seen;
  for (const RunResult& r : results) {
    if (std::find(seen.begin(), seen.end(), r.backbone) == seen.end()) seen.push_back(r.backbone);
  }
  auto rank = [&](const RunResult& r) {
    return std::pair(std::find(seen.begin(), seen.end(), r.backbone) - seen.begin(), method_rank(r.method));
  };
  std::stable_sort(results.begin(), results.end(),
                   [&](const RunResult& a, const RunResult& b) { return rank(a) < rank(b); });
  return results;
}

ReportFormat report_format_from_string(const std::string& name) {
  if (name == "text") return ReportFormat::kText;
  if (name == "json") return ReportFormat::kJson;
  throw std::invalid_argument("unknown report format '" + name + "' (expected text or json)");
}

std::string emit_report(const std::vector<RunResult>& results, ReportFormat format) {
  if (results.empty()) throw std::invalid_argument("emit_report: no results");
  if (format == ReportFormat::kText) return text_table(results);
  return Json{{"results", results}}.dump(2) + "\n";
}

std::vector<RunResult> parse_report_json(const std::string& text) {
  return Json::parse(text).at("results").get<std::vector<RunResult>>();
}

std::vector<RunResult> collect_runs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> found;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "run.json" &&
        fs::exists(entry.path().parent_path() / "predictions.jsonl")) {
      found.push_back(entry.path().parent_path());
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<RunResult> runs;
  for (const fs::path& d : found) {
    RunResult r = Json::parse(read_text_file(d / "run.json")).get<RunResult>();
    r.predictions = from_jsonl<PredictionRecord>(read_text_file(d / "predictions.jsonl"));
    r.report = recompute_report(r);
    runs.push_back(std::move(r));
  }
  if (runs.empty()) throw std::runtime_error("no evaluated runs under " + dir.string());
  return runs;
}

std::vector<RunResult> run_grid(const fs::path& grid_path) {
  const Json grid = Json::parse(read_text_file(grid_path));
  const fs::path base = grid_path.parent_path();
  const fs::path out = resolve(base, grid.value("output_dir", std::string("grid")));
  const Json& runs = grid.at("runs");
  if (!runs.is_array() || runs.empty()) throw std::invalid_argument("grid: 'runs' must be a nonempty list");

  std::vector<ExperimentConfig> configs;
  for (const Json& entry : runs) {
    if (entry.is_string()) {
      configs.push_back(load_experiment_config(resolve(base, entry.get<std::string>())));
    } else {
      ExperimentConfig c = entry.get<ExperimentConfig>();
      c.train_manifest = resolve(base, c.train_manifest);
      c.test_manifest = resolve(base, c.test_manifest);
      configs.push_back(std::move(c));
    }
  }
  for (const ExperimentConfig& c : configs) {
    c.validate();
    if (c.test_manifest.empty()) throw std::invalid_argument("grid: every run needs a test_manifest");
    if (fs::weakly_canonical(c.test_manifest) != fs::weakly_canonical(configs.front().test_manifest)) {
      throw std::invalid_argument("grid: runs use different test manifests");
    }
  }
  std::vector<RunResult> results;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    ExperimentConfig c = configs[i];
    char prefix[24];
    std::snprintf(prefix, sizeof prefix, "%02zu", i);
    c.output_dir = out / (std::string(prefix) + "_" + to_string(c.model.backbone) + "_" + to_string(c.method));
    const Checkpoint ckpt = train(c);
    results.push_back(evaluate(ckpt.path, c.test_manifest));
  }
  results = compare(std::move(results));
  write_text_file(out / "comparison.txt", emit_report(results, ReportFormat::kText));
  write_text_file(out / "comparison.json", emit_report(results, ReportFormat::kJson));
  return results;
}

}  // namespace cfd
