#include "cfdebias/model.hpp"

#include <stdexcept>

namespace cfd {

using nn::Flow;
using nn::Tape;
using nn::Var;

int ModelConfig::alf_dim() const {
  switch (backbone) {
    case BackboneKind::kSta: return sta.aslf_dim;
    case BackboneKind::kNetvlad: return netvlad.gru_hidden;
    case BackboneKind::kTabular: return tabular_dim;
  }
  return 0;
}

MlpConfig ModelConfig::head_config() const {
  MlpConfig m;
  m.input_dim = alf_dim() + 1;
  m.hidden_dims = head_hidden;
  m.output_dim = 2;
  return m;
}

void ModelConfig::validate() const {
  if (backbone == BackboneKind::kSta) sta.validate();
  if (backbone == BackboneKind::kNetvlad) netvlad.validate();
  if (backbone == BackboneKind::kTabular && tabular_dim < 1) {
    throw std::invalid_argument("model: tabular_dim must be positive");
  }
  head_config().validate();
  for (int h : gender_hidden) {
    if (h < 1) throw std::invalid_argument("model: gender_hidden sizes must be positive");
  }
}

void to_json(Json& j, const ModelConfig& c) {
  j = Json{{"backbone", to_string(c.backbone)}, {"sta", c.sta},
           {"netvlad", c.netvlad},              {"tabular_dim", c.tabular_dim},
           {"head_hidden", c.head_hidden},      {"gender_hidden", c.gender_hidden},
           {"eps_mode", to_string(c.eps_mode)}};
}

void from_json(const Json& j, ModelConfig& c) {
  c = ModelConfig{};
  c.backbone = backbone_from_string(j.value("backbone", std::string("tabular")));
  if (j.contains("sta")) c.sta = j.at("sta").get<StaConfig>();
  if (j.contains("netvlad")) c.netvlad = j.at("netvlad").get<NetvladConfig>();
  c.tabular_dim = j.value("tabular_dim", c.tabular_dim);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.gender_hidden = j.value("gender_hidden", c.gender_hidden);
  c.eps_mode = epsilon_mode_from_string(j.value("eps_mode", std::string("head")));
}

namespace {

const ModelConfig& checked(const ModelConfig& c) {
  c.validate();
  return c;
}

std::unique_ptr<Encoder> make_encoder(nn::ParameterStore& store, const ModelConfig& c) {
  switch (c.backbone) {
    case BackboneKind::kSta: return std::make_unique<StaEncoder>(store, "mf.backbone", c.sta);
    case BackboneKind::kNetvlad: return std::make_unique<NetvladEncoder>(store, "mf.backbone", c.netvlad);
    case BackboneKind::kTabular: return std::make_unique<TabularEncoder>(c.tabular_dim);
  }
  throw std::invalid_argument("model: unknown backbone");
}

}  // namespace

DebiasModel::DebiasModel(const ModelConfig& config, std::uint64_t seed)
    : config_(checked(config)),
      store_(seed),
      gender_(store_, "mg", config_.gender_hidden),
      encoder_(make_encoder(store_, config_)),
      head_(store_, "mf.head", config_.head_config()) {
  const int eps_dim = config_.eps_mode == EpsilonMode::kHead ? config_.head_config().input_dim : 2;
  store_.add_uniform("cf.epsilon", 1, eps_dim, 0.01);
}

CounterfactualParam DebiasModel::counterfactual_param() const {
  return CounterfactualParam{RowVector(store_.at("cf.epsilon").value)};
}

Var DebiasModel::alf(Tape& tape, const EncoderInput& input, Flow flow) const {
  return encoder_->alf(tape, input, flow);
}

Var DebiasModel::gender_logits(Tape& tape, const Matrix& genders, Flow flow) const {
  return gender_(tape, tape.constant(genders), flow);
}

Var DebiasModel::factual_logits(Tape& tape, Var alf, const Matrix& genders, Flow flow) const {
  return head_(tape, head_.fused_input(tape, alf, tape.constant(genders)), flow);
}

Var DebiasModel::counterfactual_logits(Tape& tape, Eigen::Index batch, Flow eps_flow) const {
  auto& eps = const_cast<ad::Parameter&>(store_.at("cf.epsilon"));
  Var e = tape.param(eps, eps_flow);
  Var logits = config_.eps_mode == EpsilonMode::kHead ? head_(tape, e, Flow::kFrozen) : e;
  return ad::broadcast_rows(logits, batch);
}

Vector DebiasModel::alf_value(const EncoderInput& input) const {
  Tape tape;
  return alf(tape, input, Flow::kFrozen).value().row(0).transpose();
}

TotalEffect DebiasModel::total_effect(const Vector& alf, GenderCode g) const {
  return total_effect_logits(g, alf, gender_, head_, counterfactual_param(), config_.eps_mode);
}

std::vector<ad::Parameter*> DebiasModel::gender_parameters() { return store_.with_prefix("mg."); }
std::vector<ad::Parameter*> DebiasModel::factual_parameters() { return store_.with_prefix("mf."); }
std::vector<ad::Parameter*> DebiasModel::epsilon_parameters() { return store_.with_prefix("cf."); }

CounterfactualLosses counterfactual_losses(Tape& tape, const DebiasModel& model, Var alf, const Matrix& genders,
                                           std::span<const int> labels, std::span<const double> weights) {
  CounterfactualLosses out;
  Var d_f = model.factual_logits(tape, alf, genders, Flow::kTrain);
  Var d_g = model.gender_logits(tape, genders, Flow::kTrain);
  out.fused_factual = tape::fuse(d_g, d_f);
  out.cls = tape::loss_cls(d_g, out.fused_factual, labels, weights);
  Var d_g_frozen = model.gender_logits(tape, genders, Flow::kFrozen);
  out.fused_counterfactual =
      tape::fuse(d_g_frozen, model.counterfactual_logits(tape, genders.rows(), Flow::kTrain));
  out.kl = tape::loss_kl(out.fused_factual.value(), out.fused_counterfactual);
  out.total = ad::add(out.cls, out.kl);
  return out;
}

}  // namespace cfd
