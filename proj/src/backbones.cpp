#include "cfdebias/backbones.hpp"

#include <stdexcept>

namespace cfd {

using nn::Flow;
using nn::Tape;
using nn::Var;

std::string to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::kSta: return "sta";
    case BackboneKind::kNetvlad: return "netvlad";
    case BackboneKind::kTabular: return "tabular";
  }
  return "unknown";
}

BackboneKind backbone_from_string(const std::string& name) {
  if (name == "sta") return BackboneKind::kSta;
  if (name == "netvlad") return BackboneKind::kNetvlad;
  if (name == "tabular") return BackboneKind::kTabular;
  throw std::invalid_argument("unknown backbone '" + name + "' (expected sta, netvlad or tabular)");
}

void StaConfig::validate() const {
  if (aslf_dim != 64) throw std::invalid_argument("StaConfig: aslf_dim must be 64");
  if (spectrogram_bins < 1 || clip_length < 1 || clip_stride < 1) {
    throw std::invalid_argument("StaConfig: bins, clip length and stride must be positive");
  }
  if (lstm_hidden < 1 || attention_dim < 1 || max_clips < 0) {
    throw std::invalid_argument("StaConfig: lstm_hidden and attention_dim must be positive");
  }
  for (int c : cnn_channels) {
    if (c < 1) throw std::invalid_argument("StaConfig: CNN channel counts must be positive");
  }
}

void NetvladConfig::validate() const {
  if (aslf_dim != 256) throw std::invalid_argument("NetvladConfig: aslf_dim must be 256");
  if (gru_hidden != 256) throw std::invalid_argument("NetvladConfig: gru_hidden must be 256");
  if (n_clusters < 1 || local_dim < 1 || n_clusters * local_dim != aslf_dim) {
    throw std::invalid_argument("NetvladConfig: n_clusters * local_dim must equal aslf_dim");
  }
  if (mel_bins < 1 || max_segments < 0) throw std::invalid_argument("NetvladConfig: bad mel_bins or max_segments");
}

void MlpConfig::validate() const {
  if (output_dim != 2) throw std::invalid_argument("MlpConfig: output_dim must be 2");
  if (input_dim < 2) throw std::invalid_argument("MlpConfig: input_dim must include the ALF and gender");
  for (int h : hidden_dims) {
    if (h < 1) throw std::invalid_argument("MlpConfig: hidden sizes must be positive");
  }
}

void to_json(Json& j, const StaConfig& c) {
  j = Json{{"cnn_channels", c.cnn_channels}, {"lstm_hidden", c.lstm_hidden},
           {"aslf_dim", c.aslf_dim},         {"attention_dim", c.attention_dim},
           {"spectrogram_bins", c.spectrogram_bins}, {"clip_length", c.clip_length},
           {"clip_stride", c.clip_stride},   {"max_clips", c.max_clips}};
}

void from_json(const Json& j, StaConfig& c) {
  c = StaConfig{};
  c.cnn_channels = j.value("cnn_channels", c.cnn_channels);
  c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
  c.aslf_dim = j.value("aslf_dim", c.aslf_dim);
  c.attention_dim = j.value("attention_dim", c.attention_dim);
  c.spectrogram_bins = j.value("spectrogram_bins", c.spectrogram_bins);
  c.clip_length = j.value("clip_length", c.clip_length);
  c.clip_stride = j.value("clip_stride", c.clip_stride);
  c.max_clips = j.value("max_clips", c.max_clips);
}

void to_json(Json& j, const NetvladConfig& c) {
  j = Json{{"mel_bins", c.mel_bins},   {"local_dim", c.local_dim}, {"n_clusters", c.n_clusters},
           {"aslf_dim", c.aslf_dim},   {"gru_hidden", c.gru_hidden}, {"max_segments", c.max_segments}};
}

void from_json(const Json& j, NetvladConfig& c) {
  c = NetvladConfig{};
  c.mel_bins = j.value("mel_bins", c.mel_bins);
  c.local_dim = j.value("local_dim", c.local_dim);
  c.n_clusters = j.value("n_clusters", c.n_clusters);
  c.aslf_dim = j.value("aslf_dim", c.aslf_dim);
  c.gru_hidden = j.value("gru_hidden", c.gru_hidden);
  c.max_segments = j.value("max_segments", c.max_segments);
}

void to_json(Json& j, const MlpConfig& c) {
  j = Json{{"input_dim", c.input_dim}, {"hidden_dims", c.hidden_dims}, {"output_dim", c.output_dim}};
}

void from_json(const Json& j, MlpConfig& c) {
  c = MlpConfig{};
  c.input_dim = j.value("input_dim", c.input_dim);
  c.hidden_dims = j.value("hidden_dims", c.hidden_dims);
  c.output_dim = j.value("output_dim", c.output_dim);
}

namespace {

// Evenly spaced indices when more than `cap` items are available.
std::vector<std::size_t> spread_indices(std::size_t count, int cap) {
  std::vector<std::size_t> idx;
  if (cap <= 0 || count <= static_cast<std::size_t>(cap)) {
    for (std::size_t i = 0; i < count; ++i) idx.push_back(i);
    return idx;
  }
  for (int i = 0; i < cap; ++i) idx.push_back(static_cast<std::size_t>(i) * count / static_cast<std::size_t>(cap));
  return idx;
}

}  // namespace

// ---------------------------------------------------------------------------

StaEncoder::StaEncoder(nn::ParameterStore& store, const std::string& prefix, const StaConfig& cfg)
    : cfg_(cfg) {
  cfg_.validate();
  int channels = 1;
  int freq = cfg_.spectrogram_bins;
  for (std::size_t i = 0; i < cfg_.cnn_channels.size(); ++i) {
    convs_.emplace_back(store, prefix + ".cnn" + std::to_string(i), channels, cfg_.cnn_channels[i], 3, 3, 2);
    conv_freqs_.push_back(freq);
    freq = convs_.back().out_freq(freq);
    channels = cfg_.cnn_channels[i];
  }
  conv_freqs_.push_back(freq);
  lstm_ = nn::Lstm(store, prefix + ".lstm", cfg_.spectrogram_bins, cfg_.lstm_hidden);
  frame_fusion_ = nn::Dense(store, prefix + ".frame_fusion", channels + cfg_.lstm_hidden, cfg_.aslf_dim);
  attention_ = nn::AttentionPool(store, prefix + ".attention", cfg_.aslf_dim, cfg_.attention_dim);
}

Var StaEncoder::aslf(Tape& tape, const std::vector<Matrix>& clips, Flow flow) const {
  if (clips.empty()) throw std::invalid_argument("sta: a session needs at least one clip");
  const int n = static_cast<int>(clips.size());
  const int bins = cfg_.spectrogram_bins;
  const int len = cfg_.clip_length;
  for (const Matrix& c : clips) {
    if (c.rows() != bins || c.cols() != len) {
      throw std::invalid_argument("sta: clip must be " + std::to_string(bins) + "x" + std::to_string(len) +
                                  ", got " + std::to_string(c.rows()) + "x" + std::to_string(c.cols()));
    }
  }

  Matrix maps(static_cast<Eigen::Index>(n) * bins * len, 1);
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < bins; ++f) {
      for (int t = 0; t < len; ++t) maps((static_cast<Eigen::Index>(i) * bins + f) * len + t, 0) = clips[i](f, t);
    }
  }
  Var x = tape.constant(std::move(maps));
  for (std::size_t k = 0; k < convs_.size(); ++k) x = ad::relu(convs_[k](tape, x, n, conv_freqs_[k], len, flow));
  Var spatial = nn::mean_over_frequency(x, n, conv_freqs_.back(), len);

  std::vector<Var> steps;
  steps.reserve(static_cast<std::size_t>(len));
  for (int t = 0; t < len; ++t) {
    Matrix xt(n, bins);
    for (int i = 0; i < n; ++i) xt.row(i) = clips[i].col(t).transpose();
    steps.push_back(tape.constant(std::move(xt)));
  }
  Var temporal = ad::concat_rows(lstm_(tape, steps, flow));

  const std::array<Var, 2> parts{spatial, temporal};
  Var frames = ad::tanh(frame_fusion_(tape, ad::concat_cols(parts), flow));
  return attention_.pool_batch(tape, frames, n, flow);
}

Var StaEncoder::alf(Tape& tape, const EncoderInput& input, Flow flow) const {
  const auto* clips = std::get_if<ClipInput>(&input);
  if (clips == nullptr) throw std::invalid_argument("sta encoder expects spectrogram clips");
  std::vector<Matrix> chosen;
  for (std::size_t i : spread_indices(clips->clips.size(), cfg_.max_clips)) chosen.push_back(clips->clips[i]);
  return nn::eep_pool(tape, aslf(tape, chosen, flow));
}

NetvladEncoder::NetvladEncoder(nn::ParameterStore& store, const std::string& prefix, const NetvladConfig& cfg)
    : cfg_(cfg) {
  cfg_.validate();
  project_ = nn::Dense(store, prefix + ".project", cfg_.mel_bins, cfg_.local_dim);
  vlad_ = nn::NetVlad(store, prefix + ".netvlad", cfg_.local_dim, cfg_.n_clusters);
  gru_ = nn::GruCell(store, prefix + ".gru", cfg_.aslf_dim, cfg_.gru_hidden);
}

Var NetvladEncoder::aslf(Tape& tape, const Matrix& segment, Flow flow) const {
  if (segment.rows() < 1 || segment.cols() != cfg_.mel_bins) {
    throw std::invalid_argument("netvlad: segment must be frames x " + std::to_string(cfg_.mel_bins));
  }
  return vlad_(tape, project_(tape, tape.constant(segment), flow), flow);
}

Var NetvladEncoder::alf(Tape& tape, const EncoderInput& input, Flow flow) const {
  const auto* segs = std::get_if<SegmentInput>(&input);
  if (segs == nullptr) throw std::invalid_argument("netvlad encoder expects Mel segments");
  if (segs->segments.empty()) throw std::invalid_argument("netvlad: a session needs at least one segment");
  Var h = tape.constant(Matrix::Zero(1, cfg_.gru_hidden));
  for (std::size_t i : spread_indices(segs->segments.size(), cfg_.max_segments)) {
    h = gru_(tape, aslf(tape, segs->segments[i], flow), h, flow);
  }
  return h;
}

Var TabularEncoder::alf(Tape& tape, const EncoderInput& input, Flow) const {
  const auto* seq = std::get_if<SequenceInput>(&input);
  if (seq == nullptr) throw std::invalid_argument("tabular encoder expects a feature sequence");
  if (seq->rows.rows() < 1 || seq->rows.cols() != dim_) {
    throw std::invalid_argument("tabular: expected T >= 1 rows of dimension " + std::to_string(dim_) +
                                ", got " + std::to_string(seq->rows.rows()) + "x" +
                                std::to_string(seq->rows.cols()));
  }
  return tape.constant(Matrix(seq->rows.colwise().mean()));
}

FusionHead::FusionHead(nn::ParameterStore& store, const std::string& prefix, const MlpConfig& cfg)
    : cfg_(cfg) {
  cfg_.validate();
  mlp_ = nn::Mlp(store, prefix, cfg_.input_dim, cfg_.hidden_dims, cfg_.output_dim);
}

Var FusionHead::operator()(Tape& tape, Var fused, Flow flow) const {
  if (fused.cols() != cfg_.input_dim) {
    throw std::invalid_argument("fusion head: expected " + std::to_string(cfg_.input_dim) +
                                "-dim fused input, got " + std::to_string(fused.cols()));
  }
  return mlp_(tape, fused, flow);
}

Var FusionHead::fused_input(Tape&, Var alf, Var gender) const {
  if (alf.cols() != cfg_.input_dim - 1) {
    throw std::invalid_argument("fusion head: ALF has " + std::to_string(alf.cols()) + " dims, expected " +
                                std::to_string(cfg_.input_dim - 1));
  }
  const std::array<Var, 2> parts{alf, gender};
  return ad::concat_cols(parts);
}

GenderBranch::GenderBranch(nn::ParameterStore& store, const std::string& prefix, const std::vector<int>& hidden)
    : mlp_(store, prefix, 1, hidden, 2) {}

Var GenderBranch::operator()(Tape& tape, Var gender, Flow flow) const {
  if (gender.cols() != 1) throw std::invalid_argument("gender branch expects a single gender column");
  return mlp_(tape, gender, flow);
}

// ---------------------------------------------------------------------------

Vector sta_forward(const Matrix& clip, const StaEncoder& encoder) {
  Tape tape;
  return encoder.aslf(tape, {clip}, Flow::kFrozen).value().row(0).transpose();
}

Vector attention_pool(const Matrix& frames, const nn::AttentionPool& pool) {
  Tape tape;
  return pool(tape, tape.constant(frames), Flow::kFrozen).value().row(0).transpose();
}

Vector eep_aggregate(const Matrix& aslf_sequence) {
  Tape tape;
  return nn::eep_pool(tape, tape.constant(aslf_sequence)).value().row(0).transpose();
}

Vector netvlad_aggregate(const Matrix& locals, const nn::NetVlad& vlad) {
  Tape tape;
  return vlad(tape, tape.constant(locals), Flow::kFrozen).value().row(0).transpose();
}

Vector gru_aggregate(const Matrix& aslf_sequence, const nn::GruCell& gru) {
  if (aslf_sequence.rows() < 1) throw std::invalid_argument("gru_aggregate: empty sequence");
  Tape tape;
  Var h = tape.constant(Matrix::Zero(1, gru.hidden()));
  for (Eigen::Index s = 0; s < aslf_sequence.rows(); ++s) {
    h = gru(tape, tape.constant(Matrix(aslf_sequence.row(s))), h, Flow::kFrozen);
  }
  return h.value().row(0).transpose();
}

LogitVector gender_branch(GenderCode g, const GenderBranch& branch) {
  Tape tape;
  return LogitVector::from_row(branch(tape, tape.constant(g.as_input()), Flow::kFrozen).value());
}

LogitVector fusion_head(const Vector& alf, GenderCode g, const FusionHead& head) {
  Tape tape;
  Var fused = head.fused_input(tape, tape.constant(Matrix(alf.transpose())), tape.constant(g.as_input()));
  return LogitVector::from_row(head(tape, fused, Flow::kFrozen).value());
}

LogitVector tabular_backbone(const Matrix& features, GenderCode g, const FusionHead& head) {
  if (features.rows() < 1) throw std::invalid_argument("tabular_backbone: empty feature sequence");
  return fusion_head(features.colwise().mean().transpose(), g, head);
}

}  // namespace cfd
