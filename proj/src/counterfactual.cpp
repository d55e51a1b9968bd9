#include "cfdebias/counterfactual.hpp"

#include <cmath>
#include <stdexcept>

namespace cfd {

namespace {

double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

// log softmax of a two-component vector.
std::array<double, 2> log_softmax(const LogitVector& v) {
  const double m = std::max(v[0], v[1]);
  const double lse = m + std::log(std::exp(v[0] - m) + std::exp(v[1] - m));
  return {v[0] - lse, v[1] - lse};
}

}  // namespace

std::string to_string(EpsilonMode mode) { return mode == EpsilonMode::kHead ? "head" : "logit"; }

EpsilonMode epsilon_mode_from_string(const std::string& name) {
  if (name == "head") return EpsilonMode::kHead;
  if (name == "logit") return EpsilonMode::kLogit;
  throw std::invalid_argument("unknown eps_mode '" + name + "' (expected head or logit)");
}

LogitVector TotalEffect::tie() const { return cfd::tie(fused_factual, fused_counterfactual); }

LogitVector fuse(const LogitVector& d_g, const LogitVector& d_f) {
  return LogitVector{{log_sigmoid(d_g[0] + d_f[0]), log_sigmoid(d_g[1] + d_f[1])}};
}

LogitVector tie(const LogitVector& fused_factual, const LogitVector& fused_counterfactual) {
  return LogitVector{{fused_factual[0] - fused_counterfactual[0], fused_factual[1] - fused_counterfactual[1]}};
}

double loss_cls(const LogitVector& d_g, const LogitVector& fused_factual, DepressionLabel label) {
  if (!label.valid()) throw std::invalid_argument("loss_cls: label must be 0 or 1");
  const auto k = static_cast<std::size_t>(label.value);
  return -log_softmax(d_g)[k] - log_softmax(fused_factual)[k];
}

double loss_kl(const LogitVector& fused_factual, const LogitVector& fused_counterfactual) {
  const auto lp = log_softmax(fused_factual);
  const auto lq = log_softmax(fused_counterfactual);
  double total = 0.0;
  for (std::size_t d = 0; d < 2; ++d) total -= std::exp(lp[d]) * lq[d];
  return 0.5 * total;
}

double loss_total(double l_cls, double l_kl) { return l_cls + l_kl; }

DepressionLabel predict_tie(const LogitVector& tie_scores) { return DepressionLabel{tie_scores.argmax()}; }

DepressionLabel predict_tie(const TotalEffect& effect) { return predict_tie(effect.tie()); }

DepressionLabel predict_factual(const LogitVector& factual_scores) {
  return DepressionLabel{factual_scores.argmax()};
}

LogitVector counterfactual_branch(const CounterfactualParam& eps, const FusionHead& head, EpsilonMode mode) {
  if (mode == EpsilonMode::kLogit) {
    if (eps.epsilon.size() != 2) throw std::invalid_argument("counterfactual_branch: logit-mode eps must have 2 entries");
    return LogitVector{{eps.epsilon(0), eps.epsilon(1)}};
  }
  if (eps.epsilon.size() != head.config().input_dim) {
    throw std::invalid_argument("counterfactual_branch: eps has " + std::to_string(eps.epsilon.size()) +
                                " entries, head expects " + std::to_string(head.config().input_dim));
  }
  nn::Tape t;
  return LogitVector::from_row(head(t, t.constant(Matrix(eps.epsilon)), nn::Flow::kFrozen).value());
}

TotalEffect total_effect_logits(GenderCode g, const Vector& alf, const GenderBranch& gender,
                                const FusionHead& head, const CounterfactualParam& eps, EpsilonMode mode) {
  TotalEffect out;
  out.branches.d_g = gender_branch(g, gender);
  out.branches.d_f_factual = fusion_head(alf, g, head);
  out.branches.d_f_counterfactual = counterfactual_branch(eps, head, mode);
  out.fused_factual = fuse(out.branches.d_g, out.branches.d_f_factual);
  out.fused_counterfactual = fuse(out.branches.d_g, out.branches.d_f_counterfactual);
  return out;
}

namespace tape {

nn::Var fuse(nn::Var d_g, nn::Var d_f) { return ad::log_sigmoid(ad::add(d_g, d_f)); }

nn::Var loss_cls(nn::Var d_g, nn::Var fused_factual, std::span<const int> labels, std::span<const double> weights) {
  return ad::add(ad::cross_entropy(d_g, labels, weights), ad::cross_entropy(fused_factual, labels, weights));
}

nn::Var loss_kl(const Matrix& fused_factual, nn::Var fused_counterfactual) {
  if (fused_factual.rows() != fused_counterfactual.rows() || fused_factual.cols() != 2 ||
      fused_counterfactual.cols() != 2) {
    throw std::invalid_argument("loss_kl: factual and counterfactual batches must both be B x 2");
  }
  Matrix target(fused_factual.rows(), 2);
  for (Eigen::Index r = 0; r < target.rows(); ++r) {
    const double m = fused_factual.row(r).maxCoeff();
    const RowVector e = (fused_factual.row(r).array() - m).exp();
    target.row(r) = e / e.sum();
  }
  return ad::soft_cross_entropy(fused_counterfactual, target, 0.5);
}

}  // namespace tape

}  // namespace cfd
