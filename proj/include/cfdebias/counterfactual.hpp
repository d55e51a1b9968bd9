#pragma once

// Fusion, the empty-input counterfactual, the two training losses and
// TIE-based inference. Value-level functions work on single samples; the
// tape-level ones take batches (one row per sample) for training.

#include <span>

#include "cfdebias/backbones.hpp"
#include "cfdebias/datamodel.hpp"

namespace cfd {

/// Where the learnable empty input lives: in the fused-feature space, passed
/// through the classification head, or directly as a logit vector.
enum class EpsilonMode { kHead, kLogit };

std::string to_string(EpsilonMode mode);
EpsilonMode epsilon_mode_from_string(const std::string& name);

struct CounterfactualParam {
  RowVector epsilon;
  bool finite() const { return epsilon.allFinite(); }
};

struct BranchLogits {
  LogitVector d_g;
  LogitVector d_f_factual;
  LogitVector d_f_counterfactual;
};

struct TotalEffect {
  BranchLogits branches;
  LogitVector fused_factual;
  LogitVector fused_counterfactual;

  LogitVector tie() const;
};

/// log sigmoid(d_g + d_f), componentwise.
LogitVector fuse(const LogitVector& d_g, const LogitVector& d_f);
LogitVector tie(const LogitVector& fused_factual, const LogitVector& fused_counterfactual);

double loss_cls(const LogitVector& d_g, const LogitVector& fused_factual, DepressionLabel label);
/// (1/2) sum_d -p(d|g,c) log p(d|g,c_bar), both p from softmax of fused scores.
double loss_kl(const LogitVector& fused_factual, const LogitVector& fused_counterfactual);
double loss_total(double l_cls, double l_kl);

DepressionLabel predict_tie(const LogitVector& tie_scores);
DepressionLabel predict_tie(const TotalEffect& effect);
DepressionLabel predict_factual(const LogitVector& factual_scores);

/// head(eps) in kHead mode; eps itself in kLogit mode.
LogitVector counterfactual_branch(const CounterfactualParam& eps, const FusionHead& head,
                                  EpsilonMode mode = EpsilonMode::kHead);

TotalEffect total_effect_logits(GenderCode g, const Vector& alf, const GenderBranch& gender,
                                const FusionHead& head, const CounterfactualParam& eps,
                                EpsilonMode mode = EpsilonMode::kHead);

namespace tape {

nn::Var fuse(nn::Var d_g, nn::Var d_f);
// Sum of the two batch-mean cross-entropies.
nn::Var loss_cls(nn::Var d_g, nn::Var fused_factual, std::span<const int> labels,
                 std::span<const double> weights = {});
// fused_factual enters only through its value: the target carries no gradient.
nn::Var loss_kl(const Matrix& fused_factual, nn::Var fused_counterfactual);

}  // namespace tape

}  // namespace cfd
