// Command-line front end: corpus preparation, training, evaluation and
// report rendering.

#include <cstdio>
#include <exception>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cfdebias/harness.hpp"

namespace fs = std::filesystem;

namespace {

void print_distribution(const std::string& name, const cfd::CorpusManifest& m, const cfd::CellCounts& expected) {
  const cfd::DistributionCheck check = cfd::validate_distribution(m, expected);
  std::cout << name << ": " << m.records.size() << " sessions\n";
  for (const cfd::CellDiff& d : check.diff) {
    std::cout << "  " << (d.cell.first == 1 ? "female" : "male  ") << " label " << d.cell.second << ": "
              << d.actual << " (reference " << d.expected << ")\n";
  }
  if (!check.pass) std::cout << "  note: distribution differs from the reference table\n";
}

int run_synth(const fs::path& config_path, const fs::path& out) {
  cfd::SynthConfig config;
  if (!config_path.empty()) config = cfd::Json::parse(cfd::read_text_file(config_path)).get<cfd::SynthConfig>();
  const cfd::SynthCorpus corpus = cfd::generate_synthetic(config);
  cfd::save_manifest(corpus.train, out / "train.json");
  cfd::save_manifest(corpus.test, out / "test.json");
  cfd::write_text_file(out / "synth_config.json", cfd::Json(config).dump(2) + "\n");
  std::cout << "wrote " << (out / "train.json").string() << " (" << corpus.train.records.size() << " sessions) and "
            << (out / "test.json").string() << " (" << corpus.test.records.size() << " sessions)\n";
  return 0;
}

int run_ingest(const fs::path& root, int threshold, int male_code, const std::vector<std::string>& exclude,
               const fs::path& out) {
  cfd::IngestOptions options;
  options.phq_threshold = threshold;
  options.source_male_code = male_code;
  options.exclude = exclude;
  const cfd::SplitSpec splits = cfd::discover_splits(root);
  if (splits.train.empty() && splits.dev.empty() && splits.test.empty()) {
    throw std::runtime_error("no train/dev/test split tables found under " + root.string());
  }
  const cfd::IngestResult result = cfd::ingest_daicwoz(root, splits, options);
  cfd::save_manifest(result.train_combined, out / "train.json");
  cfd::save_manifest(result.test, out / "test.json");
  print_distribution("train_combined", result.train_combined, cfd::table1_counts());
  print_distribution("test", result.test, cfd::table2_counts());
  return 0;
}

int run_train(const fs::path& config_path) {
  const cfd::ExperimentConfig config = cfd::load_experiment_config(config_path);
  const cfd::Checkpoint ckpt = cfd::train(config);
  std::printf("trained %s/%s for %d epochs on %zu samples; best loss %.6f at epoch %d\n",
              cfd::to_string(config.model.backbone).c_str(), cfd::to_string(config.method).c_str(),
              ckpt.stats.epochs_run, ckpt.stats.train_size, ckpt.stats.best_loss, ckpt.stats.best_epoch);
  std::cout << "checkpoint: " << ckpt.path.string() << "\n";
  return 0;
}

int run_eval(const fs::path& checkpoint, const fs::path& test, const fs::path& out, bool debug) {
  cfd::EvalOptions options;
  if (!out.empty()) options.output_dir = out;
  options.debug_log = debug;
  const cfd::RunResult result = cfd::evaluate(checkpoint, test, options);
  std::cout << cfd::emit_report({result}, cfd::ReportFormat::kText);
  return 0;
}

int run_compare(const fs::path& grid) {
  std::cout << cfd::emit_report(cfd::run_grid(grid), cfd::ReportFormat::kText);
  return 0;
}

int run_report(const fs::path& in, const std::string& format, const fs::path& out) {
  const auto runs = cfd::compare(cfd::collect_runs(in));
  const std::string text = cfd::emit_report(runs, cfd::report_format_from_string(format));
  if (out.empty()) {
    std::cout << text;
  } else {
    cfd::write_text_file(out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual gender debiasing for speech-based depression detection"};
  app.require_subcommand(1);

  fs::path synth_config, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic spurious-correlation corpus");
  synth->add_option("--config", synth_config, "Synthetic corpus settings (JSON)")->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output directory")->required();

  fs::path ingest_root, ingest_out;
  int threshold = 10;
  int male_code = 1;
  std::vector<std::string> exclude;
  auto* ingest = app.add_subcommand("ingest", "Build manifests from a DAIC-WOZ directory tree");
  ingest->add_option("--root", ingest_root, "Corpus root")->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--threshold", threshold, "PHQ score at or above which a session is Depressed");
  ingest->add_option("--male-code", male_code, "Gender value the score tables use for male participants");
  ingest->add_option("--exclude", exclude, "Session ids to drop");
  ingest->add_option("--out", ingest_out, "Output directory")->required();

  fs::path train_config;
  auto* train = app.add_subcommand("train", "Train one experiment configuration");
  train->add_option("--config", train_config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  fs::path checkpoint, test_manifest, eval_out;
  bool debug = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a test manifest");
  eval->add_option("--checkpoint", checkpoint, "checkpoint.json or its directory")->required()->check(CLI::ExistingPath);
  eval->add_option("--test", test_manifest, "Test manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "Output directory (default: the checkpoint's)");
  eval->add_flag("--debug", debug, "Write per-sample branch logits to debug.jsonl");

  fs::path grid;
  auto* cmp = app.add_subcommand("compare", "Train and evaluate a grid of configurations");
  cmp->add_option("--grid", grid, "Grid file (JSON)")->required()->check(CLI::ExistingFile);

  fs::path report_in, report_out;
  std::string format = "text";
  auto* report = app.add_subcommand("report", "Render reports recomputed from stored prediction logs");
  report->add_option("--in", report_in, "Directory of evaluated runs")->required()->check(CLI::ExistingDirectory);
  report->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));
  report->add_option("--out", report_out, "Write to a file instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(synth_config, synth_out);
    if (*ingest) return run_ingest(ingest_root, threshold, male_code, exclude, ingest_out);
    if (*train) return run_train(train_config);
    if (*eval) return run_eval(checkpoint, test_manifest, eval_out, debug);
    if (*cmp) return run_compare(grid);
    if (*report) return run_report(report_in, format, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
