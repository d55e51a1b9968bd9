// Runs the acceptance criteria end to end and prints one line per criterion.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "cfdebias/harness.hpp"
#include "fairness_oracle.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace cfd;
using nn::Flow;
using nn::Tape;
using nn::Var;
using testing::check_gradients;
using testing::random_matrix;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kPass;
  std::string detail;
};

std::string fmt(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

Outcome verdict(bool ok, const std::string& detail) { return {ok ? Status::kPass : Status::kFail, detail}; }

// ---------------------------------------------------------------------------

Outcome metric_oracle() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> size(10, 200), bit(0, 1);
  double worst = 0.0;
  int na = 0, na_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<PredictionRecord> rs;
    const int n = size(rng);
    for (int i = 0; i < n; ++i) {
      rs.push_back({"s" + std::to_string(i), GenderCode{bit(rng)}, DepressionLabel{bit(rng)}, DepressionLabel{bit(rng)},
                    std::nullopt});
    }
    const auto o = testing::oracle_metrics(rs);
    const FairnessReport r = fairness_report(rs);
    const double ea = equal_accuracy(rs);
    const auto di = disparate_impact(rs);
    for (double d : {std::abs(r.accuracy - o.accuracy), std::abs(r.f1 - o.macro_f1), std::abs(r.recall - o.macro_recall),
                     std::abs(ea - o.ea), std::abs(r.ea - o.ea)}) {
      worst = std::max(worst, d);
    }
    long male_positive = 0;
    for (const auto& x : rs) male_positive += (x.gender.value == 0 && x.predicted_label.value == 1) ? 1 : 0;
    if (di.has_value() != (male_positive > 0) || di.has_value() != o.di.has_value()) ++na_mismatch;
    if (!di) ++na;
    if (di && o.di) worst = std::max(worst, std::abs(*di - *o.di));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return verdict(worst <= 1e-12 && na_mismatch == 0 && secs < 10.0,
                 "max |diff| " + fmt(worst) + ", NA sets " + std::to_string(na) + ", NA mismatches " +
                     std::to_string(na_mismatch) + ", " + fmt(secs, 3) + " s");
}

Outcome fusion_values() {
  const LogitVector z = fuse(LogitVector{{0, 0}}, LogitVector{{0, 0}});
  const LogitVector t = tie(fuse(LogitVector{{2, -1}}, LogitVector{{1, 0}}), fuse(LogitVector{{2, -1}}, LogitVector{{0, 0}}));
  bool ok = std::abs(z[0] + 0.693147) <= 1e-6 && std::abs(z[1] + 0.693147) <= 1e-6;
  ok = ok && std::abs(t[0] - 0.078341) <= 1e-6 && std::abs(t[1]) <= 1e-6;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 10.0);
  int nonzero = 0;
  for (int i = 0; i < 100; ++i) {
    const LogitVector x{{n(rng), n(rng)}};
    if (tie(x, x) != LogitVector{{0, 0}}) ++nonzero;
  }
  return verdict(ok && nonzero == 0, "fuse (" + fmt(z[0]) + ", " + fmt(z[1]) + "), TIE (" + fmt(t[0]) + ", " +
                                         fmt(t[1]) + "), nonzero tie(x,x) " + std::to_string(nonzero));
}

ModelConfig tabular_model(int dim) {
  ModelConfig c;
  c.tabular_dim = dim;
  return c;
}

Outcome gradient_routing() {
  const auto start = std::chrono::steady_clock::now();
  SynthConfig sc;
  sc.n_train = 32;
  const SynthCorpus corpus = generate_synthetic(sc);
  DebiasModel model(tabular_model(sc.feature_dim), 3);
  const auto n = static_cast<Eigen::Index>(corpus.train.records.size());
  Matrix alf(n, sc.feature_dim), g(n, 1);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = corpus.train.records[static_cast<std::size_t>(i)];
    alf.row(i) = r.features->data.colwise().mean();
    g(i, 0) = r.gender.value;
    y.push_back(r.label.value);
  }
  auto kl = [&](Tape& t) { return counterfactual_losses(t, model, t.constant(alf), g, y).kl; };

  model.store().zero_grad();
  {
    Tape t;
    t.backward(kl(t));
  }
  double routed = 0.0;
  std::size_t weights = 0;
  for (auto* p : model.gender_parameters()) routed = std::max(routed, p->grad.cwiseAbs().maxCoeff()), weights += p->value.size();
  for (auto* p : model.factual_parameters()) routed = std::max(routed, p->grad.cwiseAbs().maxCoeff()), weights += p->value.size();
  const double eps_norm = model.epsilon().grad.norm();

  const auto eps_check = check_gradients(model.epsilon_parameters(), kl);

  // Without the stop-gradient the loss does move with M_G and the head;
  // this is what the contract removes from the update.
  double raw_fd = 0.0;
  for (auto* p : model.gender_parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + 1e-6;
      Tape a;
      const double up = kl(a).scalar();
      p->value.data()[i] = saved - 1e-6;
      Tape b;
      const double down = kl(b).scalar();
      p->value.data()[i] = saved;
      raw_fd = std::max(raw_fd, std::abs(up - down) / 2e-6);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return verdict(routed < 1e-8 && eps_norm > 0.0 && eps_check.max_rel < 1e-3 && secs < 30.0,
                 "max |dL_kl/dw| over " + std::to_string(weights) + " M_G/M_F weights " + fmt(routed) +
                     ", eps FD rel " + fmt(eps_check.max_rel) + " (" + std::to_string(eps_check.checked) +
                     " entries); raw M_G sensitivity without stop-gradient " + fmt(raw_fd) + ", " + fmt(secs, 3) + " s");
}

RowVector softmax(const LogitVector& l) {
  RowVector p(2);
  const double m = std::max(l[0], l[1]);
  p << std::exp(l[0] - m), std::exp(l[1] - m);
  return p / p.sum();
}

double tv(const RowVector& a, const RowVector& b) { return 0.5 * (a - b).cwiseAbs().sum(); }

Outcome epsilon_convergence() {
  testing::TempDir tmp("cfdebias_accept_eps");
  const auto paths = testing::write_synthetic(tmp.path / "data", SynthConfig{});
  ExperimentConfig cfg = testing::tabular_experiment(paths, Method::kCounterfactual, tmp.path / "run", ExperimentConfig{}.optimizer.epochs, 1);
  const Checkpoint ck = train(cfg);
  LoadedModel loaded = load_checkpoint(ck.path);
  DebiasModel& model = *loaded.model;
  model.epsilon().value = DebiasModel(cfg.model, 99).epsilon().value;  // fresh U(+-0.01) start

  const CorpusManifest manifest = load_manifest(paths.train);
  const auto n = static_cast<Eigen::Index>(manifest.records.size());
  Matrix alf(n, cfg.model.tabular_dim), g(n, 1);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = manifest.records[static_cast<std::size_t>(i)];
    alf.row(i) = r.features->data.colwise().mean();
    g(i, 0) = r.gender.value;
    y.push_back(r.label.value);
  }
  auto kl_value = [&] {
    Tape t;
    return counterfactual_losses(t, model, t.constant(alf), g, y).kl.scalar();
  };
  const nn::ParameterStore::Snapshot frozen = model.store().snapshot();
  const double initial = kl_value();
  nn::Adam adam(1e-2);
  const auto eps = model.epsilon_parameters();
  for (int step = 0; step < 500; ++step) {
    model.store().zero_grad();
    Tape t;
    t.backward(counterfactual_losses(t, model, t.constant(alf), g, y).kl);
    adam.step(eps);
  }
  const double final_loss = kl_value();
  bool others_unchanged = true;
  const nn::ParameterStore::Snapshot after = model.store().snapshot();
  for (const auto& [name, value] : frozen) {
    if (name != "cf.epsilon" && after.at(name) != value) others_unchanged = false;
  }

  RowVector mean_factual = RowVector::Zero(2), mean_cf = RowVector::Zero(2), mean_df = RowVector::Zero(2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TotalEffect te = model.total_effect(alf.row(i).transpose(), GenderCode{static_cast<int>(g(i, 0))});
    mean_factual += softmax(te.fused_factual) / static_cast<double>(n);
    mean_cf += softmax(te.fused_counterfactual) / static_cast<double>(n);
    mean_df += softmax(te.branches.d_f_factual) / static_cast<double>(n);
  }
  const RowVector head_eps = softmax(counterfactual_branch(model.counterfactual_param(), model.head()));
  const double tv_fused = tv(mean_cf, mean_factual);
  const double tv_head = tv(head_eps, mean_df);
  const double tv_head_fused = tv(head_eps, mean_factual);
  return verdict(tv_fused <= 0.05 && final_loss < initial && others_unchanged,
                 "TV(mean softmax fused_cf, mean softmax fused_f) " + fmt(tv_fused, 4) + "; loss_kl " + fmt(initial) +
                     " -> " + fmt(final_loss) + "; M_G/M_F unchanged " + (others_unchanged ? "yes" : "no") +
                     "; diagnostics: TV(softmax head(eps), mean softmax d_f) " + fmt(tv_head, 4) +
                     ", TV(softmax head(eps), mean softmax fused_f) " + fmt(tv_head_fused, 4));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

Outcome synthetic_debiasing() {
  const auto start = std::chrono::steady_clock::now();
  testing::TempDir tmp("cfdebias_accept_synth");
  std::vector<double> di_gap_none, di_gap_cf, ea_none, ea_cf, f1_none, f1_cf;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig sc;
    sc.n_train = 568;
    sc.n_test = 188;
    sc.signal_strength = 0.5;
    sc.gender_leakage = 1.0;
    sc.noise_sigma = 1.0;
    sc.seed = seed;
    const auto paths = testing::write_synthetic(tmp.path / ("data" + std::to_string(seed)), sc);
    for (Method m : {Method::kNone, Method::kCounterfactual}) {
      ExperimentConfig cfg = testing::tabular_experiment(
          paths, m, tmp.path / (to_string(m) + std::to_string(seed)), ExperimentConfig{}.optimizer.epochs, seed);
      const RunResult r = evaluate(train(cfg).path, paths.test);
      const double gap = r.report.di ? std::abs(*r.report.di - 1.0) : INFINITY;
      const bool cf = m == Method::kCounterfactual;
      (cf ? di_gap_cf : di_gap_none).push_back(gap);
      (cf ? ea_cf : ea_none).push_back(r.report.ea);
      (cf ? f1_cf : f1_none).push_back(r.report.f1);
      per_seed << (seed || cf ? " " : "") << to_string(m)[0] << seed << ":DI=" << (r.report.di ? fmt(*r.report.di, 3) : "NA")
               << ",EA=" << fmt(r.report.ea, 3) << ",F1=" << fmt(r.report.f1, 3);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool di_ok = median(di_gap_cf) < median(di_gap_none);
  const bool ea_ok = median(ea_cf) <= median(ea_none);
  const bool f1_ok = median(f1_cf) >= median(f1_none) - 0.02;
  std::cout << "    per-seed:" << per_seed.str() << "\n";
  return verdict(di_ok && ea_ok && f1_ok && secs < 300.0,
                 "median |DI-1| none " + fmt(median(di_gap_none), 4) + " vs cf " + fmt(median(di_gap_cf), 4) +
                     (di_ok ? " ok" : " FAIL") + "; median EA none " + fmt(median(ea_none), 4) + " vs cf " +
                     fmt(median(ea_cf), 4) + (ea_ok ? " ok" : " FAIL") + "; median F1 none " +
                     fmt(median(f1_none), 4) + " vs cf " + fmt(median(f1_cf), 4) + (f1_ok ? " ok" : " FAIL") + "; " +
                     fmt(secs, 3) + " s");
}

Outcome baseline_contracts() {
  SynthConfig sc;
  sc.n_train = 142;
  const CorpusManifest train_m = generate_synthetic(sc).train;
  const CorpusManifest sub = sub_sample(train_m, 0);
  bool ok = sub.records.size() == 76;
  for (const auto& [cell, n] : sub.distribution()) ok = ok && n == 19;

  std::map<std::string, const SessionRecord*> by_id;
  for (const auto& r : train_m.records) by_id[r.session_id] = &r;
  const CorpusManifest bal = balance_by_augmentation(train_m, 0);
  long largest = 0;
  for (const auto& [cell, n] : train_m.distribution()) largest = std::max(largest, n);
  for (const auto& [cell, n] : bal.distribution()) ok = ok && n == largest;
  std::size_t mixes = 0;
  double worst = 0.0;
  for (const auto& r : bal.records) {
    if (!r.augmented()) continue;
    ++mixes;
    const auto& a = *r.augmentation;
    const SessionRecord* pa = by_id.at(a.parent_a);
    const SessionRecord* pb = by_id.at(a.parent_b);
    ok = ok && a.parent_a != a.parent_b && a.lambda >= 0.0 && a.lambda <= 1.0;
    for (const SessionRecord* parent : {pa, pb}) {
      ok = ok && parent->gender == r.gender && parent->label == r.label && !parent->augmented();
    }
    const RowVector expect = a.lambda * pa->features->data.colwise().mean() +
                             (1.0 - a.lambda) * pb->features->data.colwise().mean();
    worst = std::max(worst, (r.features->data.colwise().mean() - expect).cwiseAbs().maxCoeff());
  }
  ok = ok && worst < 1e-12;
  return verdict(ok, "sub_sample " + std::to_string(sub.records.size()) + " records; " + std::to_string(mixes) +
                         " mixes checked, max deviation " + fmt(worst) + "; balanced cells at " +
                         std::to_string(largest));
}

Outcome shape_pipeline() {
  testing::TempDir tmp("cfdebias_accept_shapes");
  testing::write_audio_corpus(tmp.path, "train", 1, 2.5, 16000, 1);
  const CorpusManifest m = load_manifest(tmp.path / "train.json");
  bool ok = true;
  std::ostringstream d;

  ModelConfig sta;
  sta.backbone = BackboneKind::kSta;
  FeaturePipeline sp(sta, dsp::StftConfig{}, dsp::MelConfig{});
  const auto clip_in = std::get<ClipInput>(sp.fit_transform(m, tmp.path).front());
  for (const Matrix& c : clip_in.clips) ok = ok && c.rows() == 129 && c.cols() == 64;
  // 2.5 s at 8 kHz, hop 128: 157 frames, clips at 0, 32, 64 (stride 32)
  ok = ok && clip_in.clips.size() == 3;
  DebiasModel sm(sta, 0);
  Tape t;
  const long sta_alf = sm.alf(t, EncoderInput{clip_in}, Flow::kFrozen).cols();
  ok = ok && sta_alf == 64 && sm.head().config().input_dim == 65;
  d << "STA " << clip_in.clips.size() << " clips of " << clip_in.clips[0].rows() << "x" << clip_in.clips[0].cols()
    << ", ALF " << sta_alf << ", fused " << sm.head().config().input_dim;

  ModelConfig nv;
  nv.backbone = BackboneKind::kNetvlad;
  FeaturePipeline np(nv, dsp::StftConfig{}, dsp::MelConfig{});
  const auto seg_in = std::get<SegmentInput>(np.fit_transform(m, tmp.path).front());
  DebiasModel nm(nv, 0);
  const long aslf = static_cast<const NetvladEncoder&>(nm.encoder()).aslf(t, seg_in.segments[0], Flow::kFrozen).cols();
  const long nv_alf = nm.alf(t, EncoderInput{seg_in}, Flow::kFrozen).cols();
  ok = ok && aslf == 256 && nv_alf == 256 && nm.head().config().input_dim == 257;
  d << "; NetVLAD ASLF " << aslf << ", ALF " << nv_alf << ", fused " << nm.head().config().input_dim;

  int mismatches = 0;
  for (long T = 1; T <= 300; ++T) {
    std::size_t brute = 0;
    for (long off = 0; off + 64 <= T; off += 32) ++brute;
    brute = std::max<std::size_t>(brute, 1);
    const dsp::Spectrogram s{Matrix::Zero(4, T), 8000, 128};
    if (dsp::clip_count(T, 64, 32) != brute || dsp::segment_clips(s, 64, 32).clips.size() != brute) ++mismatches;
  }
  ok = ok && mismatches == 0;
  d << "; clip count mismatches for T in 1..300: " << mismatches;
  return verdict(ok, d.str());
}

Outcome aggregator_invariants() {
  std::mt19937_64 rng(8);
  double eep_err = 0.0, hull_err = 0.0, vlad_max = 0.0;
  bool weights_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + trial % 7, T = 1 + trial % 9;
    const RowVector row = random_matrix(rng, 1, d, 3.0);
    Matrix same(T, d);
    same.rowwise() = row;
    eep_err = std::max(eep_err, (eep_aggregate(same).transpose() - row).cwiseAbs().maxCoeff());

    nn::ParameterStore store(static_cast<std::uint64_t>(trial));
    nn::AttentionPool pool(store, "att", d, 4);
    const Matrix x = random_matrix(rng, T, d);
    Tape t;
    const Matrix w = pool.weights(t, t.constant(x), Flow::kFrozen).value();
    weights_ok = weights_ok && w.minCoeff() >= 0.0 && std::abs(w.sum() - 1.0) < 1e-12;
    hull_err = std::max(hull_err, (attention_pool(x, pool).transpose() - w * x).cwiseAbs().maxCoeff());

    const int k = 2 + trial % 3;
    nn::NetVlad vlad(store, "vlad", d, k);
    const Matrix centers = random_matrix(rng, k, d, 3.0);
    const double alpha = 200.0;
    vlad.centers().value = centers;
    vlad.assign_weight().value = alpha * centers.transpose();
    vlad.assign_bias().value = -0.5 * alpha * centers.rowwise().squaredNorm().transpose();
    Matrix pts(2 * k, d);
    for (int i = 0; i < 2 * k; ++i) pts.row(i) = centers.row(i % k);
    vlad_max = std::max(vlad_max, vlad.residuals(t, t.constant(pts), Flow::kFrozen).value().cwiseAbs().maxCoeff());
  }
  return verdict(eep_err <= 1e-9 && weights_ok && hull_err < 1e-12 && vlad_max < 1e-9,
                 "EEP constant-row error " + fmt(eep_err) + "; attention weights convex " + (weights_ok ? "yes" : "no") +
                     ", output vs weighted rows " + fmt(hull_err) + "; NetVLAD residual at centers " + fmt(vlad_max));
}

Outcome gradient_correctness() {
  std::mt19937_64 rng(13);
  std::map<std::string, double> worst{{"M_G", 0.0}, {"head", 0.0}, {"attention", 0.0}, {"GRU", 0.0}, {"NetVLAD", 0.0}};
  std::map<std::string, double> worst_abs = worst;
  auto record = [&](const std::string& name, const testing::GradCheck& c) {
    worst[name] = std::max(worst[name], c.max_rel);
    worst_abs[name] = std::max(worst_abs[name], c.max_abs);
  };
  for (int trial = 0; trial < 20; ++trial) {
    nn::ParameterStore store(500 + static_cast<std::uint64_t>(trial));
    GenderBranch mg(store, "mg", {4});
    FusionHead head(store, "head", MlpConfig{5, {4, 3}, 2});
    nn::AttentionPool pool(store, "att", 3, 4);
    nn::GruCell gru(store, "gru", 3, 4);
    nn::NetVlad vlad(store, "vlad", 3, 2);
    Matrix g(4, 1);
    g << 0, 1, 1, 0;
    const Matrix x5 = random_matrix(rng, 4, 5);
    const Matrix x3 = random_matrix(rng, 6, 3);
    const Matrix r3 = random_matrix(rng, 1, 3), r4 = random_matrix(rng, 1, 4), r6 = random_matrix(rng, 1, 6);
    const std::vector<int> y{0, 1, 1, 0};
    record("M_G", check_gradients(store.with_prefix("mg."),
                                  [&](Tape& t) { return ad::cross_entropy(mg(t, t.constant(g), Flow::kTrain), y); }));
    record("head", check_gradients(store.with_prefix("head."), [&](Tape& t) {
      return ad::cross_entropy(head(t, t.constant(x5), Flow::kTrain), y);
    }));
    record("attention", check_gradients(store.with_prefix("att."), [&](Tape& t) {
      return ad::sum(ad::mul(pool(t, t.constant(x3), Flow::kTrain), t.constant(r3)));
    }));
    record("GRU", check_gradients(store.with_prefix("gru."), [&](Tape& t) {
      Var h = t.constant(Matrix::Zero(1, 4));
      for (int s = 0; s < 3; ++s) h = gru(t, t.constant(Matrix(x3.row(s))), h, Flow::kTrain);
      return ad::sum(ad::mul(h, t.constant(r4)));
    }));
    record("NetVLAD", check_gradients(store.with_prefix("vlad."), [&](Tape& t) {
      return ad::sum(ad::mul(vlad(t, t.constant(x3), Flow::kTrain), t.constant(r6)));
    }));
  }
  bool ok = true;
  std::string d = "20 instances each, max rel:";
  for (const auto& [name, rel] : worst) {
    ok = ok && rel < 1e-3 && worst_abs[name] < 1e-6;
    d += " " + name + " " + fmt(rel, 3);
  }
  return verdict(ok, d);
}

Outcome ingestion_fidelity() {
  const char* root = std::getenv("DAICWOZ_ROOT");
  if (root == nullptr || *root == '\0') {
    return {Status::kSkip, "DAICWOZ_ROOT is not set; no licensed corpus available, ingestion check skipped"};
  }
  const IngestResult r = ingest_daicwoz(root, discover_splits(root));
  const bool ok = r.train_combined.distribution() == table1_counts() && r.test.distribution() == table2_counts();
  auto show = [](const CellCounts& c) {
    std::string s;
    for (const Cell& cell : kCells) s += (s.empty() ? "" : "/") + std::to_string(c.count(cell) ? c.at(cell) : 0);
    return s;
  };
  return verdict(ok, "train " + show(r.train_combined.distribution()) + " (" +
                         std::to_string(r.train_combined.records.size()) + "), test " + show(r.test.distribution()) +
                         " (" + std::to_string(r.test.records.size()) + ")");
}

Outcome determinism() {
  testing::TempDir tmp("cfdebias_accept_det");
  const auto paths = testing::write_synthetic(tmp.path / "data", SynthConfig{});
  bool ok = true;
  std::size_t compared = 0;
  for (Method m : {Method::kCounterfactual, Method::kMixfeat}) {
    std::array<std::filesystem::path, 2> dirs;
    for (int rep = 0; rep < 2; ++rep) {
      dirs[rep] = tmp.path / (to_string(m) + std::to_string(rep));
      evaluate(train(testing::tabular_experiment(paths, m, dirs[rep], 10, 4)).path, paths.test);
    }
    for (const char* f : {"predictions.jsonl", "report.json", "report.txt", "weights.bin"}) {
      ok = ok && read_text_file(dirs[0] / f) == read_text_file(dirs[1] / f);
      ++compared;
    }
  }
  return verdict(ok, std::to_string(compared) + " artifact pairs compared byte for byte");
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "metric oracle equivalence", metric_oracle},
      {2, "fusion and TIE values", fusion_values},
      {3, "gradient routing", gradient_routing},
      {4, "epsilon convergence", epsilon_convergence},
      {5, "synthetic debiasing experiment", synthetic_debiasing},
      {6, "baseline contracts", baseline_contracts},
      {7, "shape pipeline", shape_pipeline},
      {8, "aggregator invariants", aggregator_invariants},
      {9, "gradient correctness", gradient_correctness},
      {10, "ingestion fidelity", ingestion_fidelity},
      {11, "determinism", determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    if (o.status == Status::kFail) ++failed;
    std::cout << tag << "  [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << "\n";
  return failed ? 1 : 0;
}
