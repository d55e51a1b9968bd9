#pragma once

// The two-branch model: M_G (gender only), M_F (acoustic encoder + fusion
// head over [ALF, g]) and the global empty-input parameter eps. Every
// debiasing condition builds its model here, so the None and counterfactual
// runs share one M_F architecture.

#include <cstdint>
#include <memory>
#include <span>

#include "cfdebias/backbones.hpp"
#include "cfdebias/counterfactual.hpp"

namespace cfd {

struct ModelConfig {
  BackboneKind backbone = BackboneKind::kTabular;
  StaConfig sta;
  NetvladConfig netvlad;
  int tabular_dim = 16;
  std::vector<int> head_hidden{32, 32};
  std::vector<int> gender_hidden{16};
  EpsilonMode eps_mode = EpsilonMode::kHead;

  int alf_dim() const;
  MlpConfig head_config() const;
  void validate() const;
};

void to_json(Json& j, const ModelConfig& c);
void from_json(const Json& j, ModelConfig& c);

class DebiasModel {
 public:
  // Parameter names: "mg.*", "mf.backbone.*", "mf.head.*", "cf.epsilon".
  DebiasModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& store() { return store_; }
  const nn::ParameterStore& store() const { return store_; }
  const Encoder& encoder() const { return *encoder_; }
  const FusionHead& head() const { return head_; }
  const GenderBranch& gender_branch() const { return gender_; }
  ad::Parameter& epsilon() { return store_.at("cf.epsilon"); }
  CounterfactualParam counterfactual_param() const;

  // Batch forms; genders is B x 1.
  nn::Var alf(nn::Tape& tape, const EncoderInput& input, nn::Flow flow) const;
  nn::Var gender_logits(nn::Tape& tape, const Matrix& genders, nn::Flow flow) const;
  nn::Var factual_logits(nn::Tape& tape, nn::Var alf, const Matrix& genders, nn::Flow flow) const;
  // head(eps) (or eps in logit mode) repeated over `batch` rows. The head is
  // always bound frozen; `eps_flow` decides whether eps receives gradient.
  nn::Var counterfactual_logits(nn::Tape& tape, Eigen::Index batch, nn::Flow eps_flow) const;

  Vector alf_value(const EncoderInput& input) const;
  TotalEffect total_effect(const Vector& alf, GenderCode g) const;

  std::vector<ad::Parameter*> gender_parameters();
  std::vector<ad::Parameter*> factual_parameters();
  std::vector<ad::Parameter*> epsilon_parameters();

 private:
  ModelConfig config_;
  nn::ParameterStore store_;
  GenderBranch gender_;
  std::unique_ptr<Encoder> encoder_;
  FusionHead head_;
};

struct CounterfactualLosses {
  nn::Var total;
  nn::Var cls;
  nn::Var kl;
  nn::Var fused_factual;
  nn::Var fused_counterfactual;
};

/// L_cls + L_kl for one batch. L_cls reaches M_G and M_F; L_kl sees M_G and
/// the head through frozen bindings and the factual distribution as a
/// constant target, so its gradient reaches eps only.
CounterfactualLosses counterfactual_losses(nn::Tape& tape, const DebiasModel& model, nn::Var alf,
                                           const Matrix& genders, std::span<const int> labels,
                                           std::span<const double> weights = {});

}  // namespace cfd
