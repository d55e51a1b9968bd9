#pragma once

// Parameterized branches of the two-branch model: the gender-only MLP, the
// fused-feature head, and the acoustic encoders that turn one session into an
// audio-level feature (ALF).

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "cfdebias/datamodel.hpp"
#include "cfdebias/layers.hpp"

namespace cfd {

enum class BackboneKind { kSta, kNetvlad, kTabular };

std::string to_string(BackboneKind kind);
BackboneKind backbone_from_string(const std::string& name);

struct StaConfig {
  std::vector<int> cnn_channels{4, 8};
  int lstm_hidden = 32;
  int aslf_dim = 64;
  int attention_dim = 32;
  int spectrogram_bins = 129;
  int clip_length = 64;
  int clip_stride = 32;
  // Evenly spaced subset of clips fed per session; 0 keeps all.
  int max_clips = 32;

  void validate() const;
};

struct NetvladConfig {
  int mel_bins = 64;
  int local_dim = 64;
  int n_clusters = 4;
  int aslf_dim = 256;
  int gru_hidden = 256;
  // Evenly spaced subset of transcript segments per session; 0 keeps all.
  int max_segments = 0;

  void validate() const;
};

struct MlpConfig {
  int input_dim = 65;
  std::vector<int> hidden_dims{32, 32};
  int output_dim = 2;

  void validate() const;
};

void to_json(Json& j, const StaConfig& c);
void from_json(const Json& j, StaConfig& c);
void to_json(Json& j, const NetvladConfig& c);
void from_json(const Json& j, NetvladConfig& c);
void to_json(Json& j, const MlpConfig& c);
void from_json(const Json& j, MlpConfig& c);

// Inputs an encoder consumes for one session.
struct ClipInput {
  std::vector<Matrix> clips;  // each bins x clip_length, normalized
};
struct SegmentInput {
  std::vector<Matrix> segments;  // each frames x mel_bins, normalized
};
struct SequenceInput {
  Matrix rows;  // T x d
};
using EncoderInput = std::variant<ClipInput, SegmentInput, SequenceInput>;

/// Session -> ALF (1 x alf_dim) for one acoustic pipeline.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual nn::Var alf(nn::Tape& tape, const EncoderInput& input, nn::Flow flow) const = 0;
  virtual int alf_dim() const = 0;
  virtual BackboneKind kind() const = 0;
};

/// CNN and LSTM branches over each 129 x 64 clip, fused per frame and
/// attention-pooled to one 64-dim segment feature; EEP over clips gives the ALF.
class StaEncoder final : public Encoder {
 public:
  StaEncoder(nn::ParameterStore& store, const std::string& prefix, const StaConfig& cfg);

  // N clips -> N x aslf_dim segment features.
  nn::Var aslf(nn::Tape& tape, const std::vector<Matrix>& clips, nn::Flow flow) const;
  nn::Var alf(nn::Tape& tape, const EncoderInput& input, nn::Flow flow) const override;
  int alf_dim() const override { return cfg_.aslf_dim; }
  BackboneKind kind() const override { return BackboneKind::kSta; }
  const StaConfig& config() const { return cfg_; }
  const nn::AttentionPool& attention() const { return attention_; }

 private:
  StaConfig cfg_;
  std::vector<nn::Conv2d> convs_;
  std::vector<int> conv_freqs_;
  nn::Lstm lstm_;
  nn::Dense frame_fusion_;
  nn::AttentionPool attention_;
};

/// Mel frames projected to local features, NetVLAD per segment, GRU over
/// segments; the final hidden state is the ALF.
class NetvladEncoder final : public Encoder {
 public:
  NetvladEncoder(nn::ParameterStore& store, const std::string& prefix, const NetvladConfig& cfg);

  // frames x mel_bins -> 1 x aslf_dim
  nn::Var aslf(nn::Tape& tape, const Matrix& segment, nn::Flow flow) const;
  nn::Var alf(nn::Tape& tape, const EncoderInput& input, nn::Flow flow) const override;
  int alf_dim() const override { return cfg_.gru_hidden; }
  BackboneKind kind() const override { return BackboneKind::kNetvlad; }
  const NetvladConfig& config() const { return cfg_; }
  const nn::NetVlad& vlad() const { return vlad_; }
  const nn::GruCell& gru() const { return gru_; }

 private:
  NetvladConfig cfg_;
  nn::Dense project_;
  nn::NetVlad vlad_;
  nn::GruCell gru_;
};

/// Mean of the synthetic feature rows; no parameters.
class TabularEncoder final : public Encoder {
 public:
  explicit TabularEncoder(int feature_dim) : dim_(feature_dim) {}
  nn::Var alf(nn::Tape& tape, const EncoderInput& input, nn::Flow flow) const override;
  int alf_dim() const override { return dim_; }
  BackboneKind kind() const override { return BackboneKind::kTabular; }

 private:
  int dim_;
};

/// MLP over [ALF, g]; produces the factual M_F logits.
class FusionHead {
 public:
  FusionHead(nn::ParameterStore& store, const std::string& prefix, const MlpConfig& cfg);

  // fused: B x input_dim -> B x 2
  nn::Var operator()(nn::Tape& tape, nn::Var fused, nn::Flow flow) const;
  // Concatenates alf (B x input_dim-1) with g (B x 1).
  nn::Var fused_input(nn::Tape& tape, nn::Var alf, nn::Var gender) const;
  const MlpConfig& config() const { return cfg_; }
  const nn::Mlp& mlp() const { return mlp_; }

 private:
  MlpConfig cfg_;
  nn::Mlp mlp_;
};

/// M_G: MLP over the scalar gender code.
class GenderBranch {
 public:
  GenderBranch(nn::ParameterStore& store, const std::string& prefix, const std::vector<int>& hidden);

  // g: B x 1 -> B x 2
  nn::Var operator()(nn::Tape& tape, nn::Var gender, nn::Flow flow) const;
  const nn::Mlp& mlp() const { return mlp_; }

 private:
  nn::Mlp mlp_;
};

// Value-level evaluation of single blocks.
Vector sta_forward(const Matrix& clip, const StaEncoder& encoder);
Vector attention_pool(const Matrix& frames, const nn::AttentionPool& pool);
Vector eep_aggregate(const Matrix& aslf_sequence);
Vector netvlad_aggregate(const Matrix& locals, const nn::NetVlad& vlad);
Vector gru_aggregate(const Matrix& aslf_sequence, const nn::GruCell& gru);
LogitVector gender_branch(GenderCode g, const GenderBranch& branch);
LogitVector fusion_head(const Vector& alf, GenderCode g, const FusionHead& head);
LogitVector tabular_backbone(const Matrix& features, GenderCode g, const FusionHead& head);

}  // namespace cfd
