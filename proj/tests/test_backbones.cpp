#include <cmath>
#include <random>

#include "cfdebias/backbones.hpp"
#include "cfdebias/corpus.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cfd;
using nn::Flow;
using nn::Tape;
using nn::Var;
using testing::check_gradients;
using testing::random_matrix;

namespace {

StaConfig small_sta() {
  StaConfig c;
  c.cnn_channels = {2};
  c.lstm_hidden = 3;
  c.attention_dim = 4;
  c.spectrogram_bins = 5;
  c.clip_length = 4;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  StaConfig sta;
  CHECK_NOTHROW(sta.validate());
  sta.aslf_dim = 32;
  CHECK_THROWS(sta.validate());
  NetvladConfig nv;
  CHECK_NOTHROW(nv.validate());
  nv.n_clusters = 3;
  CHECK_THROWS(nv.validate());
  MlpConfig mlp;
  mlp.output_dim = 3;
  CHECK_THROWS(mlp.validate());
  CHECK(backbone_from_string(to_string(BackboneKind::kNetvlad)) == BackboneKind::kNetvlad);
  CHECK_THROWS(backbone_from_string("resnet"));
  const StaConfig back = Json(StaConfig{}).get<StaConfig>();
  CHECK(back.cnn_channels == StaConfig{}.cnn_channels);
  CHECK(back.max_clips == StaConfig{}.max_clips);
}

TEST_CASE("STA encoder shapes and purity") {
  nn::ParameterStore store(1);
  StaEncoder enc(store, "sta", StaConfig{});
  std::mt19937_64 rng(2);
  const Matrix clip = random_matrix(rng, 129, 64);
  const Vector a = sta_forward(clip, enc);
  CHECK(a.size() == 64);
  CHECK(sta_forward(clip, enc) == a);
  const Vector zeros = sta_forward(Matrix::Zero(129, 64), enc);
  const Vector ones = sta_forward(Matrix::Ones(129, 64), enc);
  CHECK((zeros - ones).norm() > 1e-6);
  CHECK_THROWS(sta_forward(Matrix::Zero(128, 64), enc));

  Tape t;
  ClipInput in;
  for (int i = 0; i < 3; ++i) in.clips.push_back(random_matrix(rng, 129, 64));
  const Matrix batch = enc.aslf(t, in.clips, Flow::kFrozen).value();
  CHECK(batch.rows() == 3);
  CHECK(batch.cols() == 64);
  // batched segments agree with one-at-a-time evaluation
  CHECK(batch.row(1).transpose().isApprox(sta_forward(in.clips[1], enc), 1e-12));
  const Matrix alf = enc.alf(t, in, Flow::kFrozen).value();
  CHECK(alf.cols() == 64);
  CHECK(alf.transpose().isApprox(eep_aggregate(batch), 1e-12));
  CHECK_THROWS(enc.alf(t, SequenceInput{Matrix::Zero(2, 64)}, Flow::kFrozen));
}

TEST_CASE("STA encoder gradient through CNN, LSTM, fusion, attention and EEP") {
  nn::ParameterStore store(3);
  StaEncoder enc(store, "sta", small_sta());
  std::mt19937_64 rng(4);
  ClipInput in;
  for (int i = 0; i < 3; ++i) in.clips.push_back(random_matrix(rng, 5, 4));
  const Matrix r = random_matrix(rng, 1, 64);
  const auto res = check_gradients(store.with_prefix("sta."), [&](Tape& t) {
    return ad::sum(ad::mul(enc.alf(t, in, Flow::kTrain), t.constant(r)));
  });
  CHECK(res.checked == store.scalar_count());
  CHECK(res.max_rel < 1e-4);
}

TEST_CASE("attention pooling examples") {
  nn::ParameterStore store(5);
  nn::AttentionPool pool(store, "a", 3, 4);
  RowVector v(3);
  v << 0.5, -1.0, 2.0;
  Matrix same(4, 3);
  same.rowwise() = v;
  CHECK(attention_pool(same, pool).transpose().isApprox(v, 1e-12));
  CHECK(attention_pool(Matrix(v), pool).transpose().isApprox(v, 1e-12));
  // zero context vector gives equal scores
  pool.context().value.setZero();
  Matrix e = Matrix::Identity(2, 3);
  const Vector out = attention_pool(e, pool);
  CHECK(out(0) == doctest::Approx(0.5));
  CHECK(out(1) == doctest::Approx(0.5));
  CHECK(out(2) == doctest::Approx(0.0));
}

TEST_CASE("EEP examples") {
  RowVector v(4);
  v << 1.0, -2.0, 0.5, 3.0;
  Matrix same(6, 4);
  same.rowwise() = v;
  CHECK((eep_aggregate(same).transpose() - v).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((eep_aggregate(Matrix(v)).transpose() - v).cwiseAbs().maxCoeff() < 1e-9);
  const Matrix e = Matrix::Identity(2, 2);
  const Vector out = eep_aggregate(e);
  CHECK(out(0) == doctest::Approx(0.5));
  CHECK(out(1) == doctest::Approx(0.5));
  CHECK_THROWS(eep_aggregate(Matrix::Constant(2, 2, INFINITY)));
  // affine combination of the rows with weights summing to one
  std::mt19937_64 rng(6);
  for (int i = 0; i < 10; ++i) {
    const Matrix x = random_matrix(rng, 5, 3);
    const nn::EepWeights w = nn::eep_weights(x);
    CHECK(w.weights.sum() == doctest::Approx(1.0));
    CHECK(eep_aggregate(x).isApprox(x.transpose() * w.weights, 1e-12));
  }
}

TEST_CASE("NetVLAD encoder and aggregation") {
  nn::ParameterStore store(7);
  NetvladEncoder enc(store, "nv", NetvladConfig{});
  std::mt19937_64 rng(8);
  SegmentInput in;
  for (int i = 0; i < 3; ++i) in.segments.push_back(random_matrix(rng, 10 + i, 64));
  Tape t;
  CHECK(enc.aslf(t, in.segments[0], Flow::kFrozen).cols() == 256);
  const Matrix alf = enc.alf(t, in, Flow::kFrozen).value();
  CHECK(alf.cols() == 256);
  CHECK(enc.alf(t, in, Flow::kFrozen).value() == alf);
  CHECK_THROWS(enc.alf(t, SegmentInput{}, Flow::kFrozen));
  CHECK_THROWS(enc.aslf(t, Matrix::Zero(4, 63), Flow::kFrozen));

  // the ALF is the GRU run over per-segment ASLFs
  Matrix seq(3, 256);
  for (int i = 0; i < 3; ++i) seq.row(i) = enc.aslf(t, in.segments[i], Flow::kFrozen).value();
  CHECK(gru_aggregate(seq, enc.gru()).transpose().isApprox(alf, 1e-12));
  CHECK_THROWS(gru_aggregate(Matrix(0, 256), enc.gru()));
  // one segment is one GRU step from zero
  Tape t1;
  const Matrix one = enc.gru()(t1, t1.constant(Matrix(seq.row(0))), t1.constant(Matrix::Zero(1, 256))).value();
  CHECK(gru_aggregate(seq.topRows(1), enc.gru()).transpose().isApprox(one, 1e-12));
}

TEST_CASE("NetVLAD zero residual at the assigned center") {
  nn::ParameterStore store(9);
  nn::NetVlad vlad(store, "v", 3, 2);
  vlad.assign_weight().value.setZero();
  vlad.assign_bias().value << 40.0, -40.0;
  Matrix x(4, 3);
  x.rowwise() = vlad.centers().value.row(0);
  Tape t;
  CHECK(vlad.residuals(t, t.constant(x)).value().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(netvlad_aggregate(x, vlad).isZero());
  std::mt19937_64 rng(1);
  CHECK(netvlad_aggregate(random_matrix(rng, 5, 3), vlad).size() == 6);
}

TEST_CASE("gender branch and fusion head") {
  nn::ParameterStore store(10);
  GenderBranch mg(store, "mg", {8});
  const LogitVector a = gender_branch(GenderCode::male(), mg);
  const LogitVector b = gender_branch(GenderCode::female(), mg);
  CHECK(a.finite());
  CHECK(a != b);
  store.at("mg.out.weight").value.setZero();
  store.at("mg.out.bias").value << 0.3, -0.7;
  CHECK(gender_branch(GenderCode::male(), mg) == LogitVector{{0.3, -0.7}});
  CHECK(gender_branch(GenderCode::female(), mg) == LogitVector{{0.3, -0.7}});

  FusionHead sta_head(store, "h65", MlpConfig{65, {8}, 2});
  FusionHead nv_head(store, "h257", MlpConfig{257, {8}, 2});
  CHECK(fusion_head(Vector::Zero(64), GenderCode::female(), sta_head).finite());
  CHECK(fusion_head(Vector::Zero(256), GenderCode::female(), nv_head).finite());
  CHECK_THROWS(fusion_head(Vector::Zero(63), GenderCode::female(), sta_head));
  // concatenation order: ALF first, gender last
  Tape t;
  Var f = sta_head.fused_input(t, t.constant(Matrix::Ones(1, 64)), t.constant(Matrix::Zero(1, 1)));
  CHECK(f.cols() == 65);
  CHECK(f.value()(0, 64) == 0.0);
  CHECK(f.value()(0, 0) == 1.0);
}

TEST_CASE("tabular backbone mean-pools rows") {
  nn::ParameterStore store(11);
  FusionHead head(store, "h", MlpConfig{3, {4}, 2});
  Matrix rows(2, 2);
  rows << 0, 2, 2, 0;
  Vector pooled(2);
  pooled << 1, 1;
  CHECK(tabular_backbone(rows, GenderCode::male(), head) == fusion_head(pooled, GenderCode::male(), head));
  TabularEncoder enc(2);
  Tape t;
  CHECK(enc.alf(t, SequenceInput{rows}, Flow::kFrozen).value() == Matrix(pooled.transpose()));
  CHECK_THROWS(enc.alf(t, SequenceInput{Matrix::Zero(2, 3)}, Flow::kFrozen));
  CHECK_THROWS(tabular_backbone(Matrix::Zero(2, 3), GenderCode::male(), head));
}

TEST_CASE("gender branch fitted to the reference marginals ranks females higher") {
  nn::ParameterStore store(12);
  GenderBranch mg(store, "mg", {8});
  Matrix g(142, 1);
  std::vector<int> y;
  int row = 0;
  for (const auto& [cell, n] : table1_counts()) {
    for (long i = 0; i < n; ++i) {
      g(row++, 0) = cell.first;
      y.push_back(cell.second);
    }
  }
  nn::Adam adam(1e-2);
  const auto params = store.with_prefix("mg.");
  for (int step = 0; step < 500; ++step) {
    store.zero_grad();
    Tape t;
    t.backward(ad::cross_entropy(mg(t, t.constant(g), Flow::kTrain), y));
    adam.step(params);
  }
  auto p_dep = [&](GenderCode c) {
    const LogitVector l = gender_branch(c, mg);
    return 1.0 / (1.0 + std::exp(l[0] - l[1]));
  };
  CHECK(p_dep(GenderCode::female()) > p_dep(GenderCode::male()));
  CHECK(p_dep(GenderCode::female()) == doctest::Approx(24.0 / 63.0).epsilon(0.02));
  CHECK(p_dep(GenderCode::male()) == doctest::Approx(19.0 / 79.0).epsilon(0.02));
}

TEST_CASE("block gradients on random small instances") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    nn::ParameterStore store(100 + trial);
    GenderBranch mg(store, "mg", {4});
    FusionHead head(store, "head", MlpConfig{5, {4, 3}, 2});
    nn::AttentionPool pool(store, "att", 3, 4);
    nn::GruCell gru(store, "gru", 3, 4);
    nn::NetVlad vlad(store, "vlad", 3, 2);
    const Matrix g = (random_matrix(rng, 4, 1).array() > 0).cast<double>();
    const Matrix x5 = random_matrix(rng, 4, 5);
    const Matrix x3 = random_matrix(rng, 6, 3);
    const Matrix r4 = random_matrix(rng, 1, 4);
    const Matrix r3 = random_matrix(rng, 1, 3);
    const Matrix r6 = random_matrix(rng, 1, 6);
    const std::vector<int> y{0, 1, 1, 0};
    auto ok = [&](const testing::GradCheck& c) {
      if (c.max_rel >= 1e-3) MESSAGE("trial " << trial << " rel " << c.max_rel << " abs " << c.max_abs);
      return c.max_rel < 1e-3 && c.max_abs < 1e-6;
    };
    CHECK(ok(check_gradients(store.with_prefix("mg."),
                             [&](Tape& t) { return ad::cross_entropy(mg(t, t.constant(g), Flow::kTrain), y); })));
    CHECK(ok(check_gradients(store.with_prefix("head."), [&](Tape& t) {
      return ad::cross_entropy(head(t, t.constant(x5), Flow::kTrain), y);
    })));
    CHECK(ok(check_gradients(store.with_prefix("att."), [&](Tape& t) {
      return ad::sum(ad::mul(pool(t, t.constant(x3), Flow::kTrain), t.constant(r3)));
    })));
    CHECK(ok(check_gradients(store.with_prefix("gru."), [&](Tape& t) {
      Var h = t.constant(Matrix::Zero(1, 4));
      for (int s = 0; s < 3; ++s) h = gru(t, t.constant(Matrix(x3.row(s))), h, Flow::kTrain);
      return ad::sum(ad::mul(h, t.constant(r4)));
    })));
    CHECK(ok(check_gradients(store.with_prefix("vlad."), [&](Tape& t) {
      return ad::sum(ad::mul(vlad(t, t.constant(x3), Flow::kTrain), t.constant(r6)));
    })));
  }
}
