#pragma once

// Trainable building blocks. Every layer holds pointers into a
// ParameterStore and records its forward pass on an ad::Tape, so gradients
// come from the tape rather than hand-written backward code.

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cfdebias/autodiff.hpp"

namespace cfd::nn {

using ad::Flow;
using ad::Parameter;
using ad::Tape;
using ad::Var;

/// Named learnable tensors of one model, with the seed used to draw them.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0);
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Parameter& add_fan_in(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                        Eigen::Index fan_in);
  Parameter& add_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                         double bound);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.contains(name); }

  std::map<std::string, Parameter>& all() { return params_; }
  const std::map<std::string, Parameter>& all() const { return params_; }
  std::vector<Parameter*> with_prefix(const std::string& prefix);

  void zero_grad();
  std::uint64_t seed() const { return seed_; }
  std::size_t scalar_count() const;

  using Snapshot = std::map<std::string, Matrix>;
  Snapshot snapshot() const;
  void restore(const Snapshot& values);

  // Binary blob: magic, count, then (name, rows, cols, doubles) per entry.
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  Parameter& insert(const std::string& name, Matrix value);

  std::map<std::string, Parameter> params_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

class Dense {
 public:
  Dense() = default;
  Dense(ParameterStore& store, const std::string& name, int in, int out);

  // x: B x in -> B x out
  Var operator()(Tape& tape, Var x, Flow flow = Flow::kTrain) const;
  int in() const { return in_; }
  int out() const { return out_; }
  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  int in_ = 0;
  int out_ = 0;
};

enum class Activation { kRelu, kTanh };

/// Dense layers with an activation between them and none after the last.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, int in, const std::vector<int>& hidden, int out,
      Activation act = Activation::kRelu);

  Var operator()(Tape& tape, Var x, Flow flow = Flow::kTrain) const;
  int in() const { return layers_.front().in(); }
  int out() const { return layers_.back().out(); }
  const std::vector<Dense>& layers() const { return layers_; }

 private:
  std::vector<Dense> layers_;
  Activation act_ = Activation::kRelu;
};

/// Multi-channel 2D convolution over (frequency, time) maps.
/// A batch of N maps with F x T positions and C channels is stored as a
/// (N*F*T) x C matrix, row (n*F + f)*T + t. Time keeps its length ("same"
/// padding); frequency is padded by kernel/2 and strided.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
         int kernel_freq, int kernel_time, int stride_freq);

  Var operator()(Tape& tape, Var maps, int batch, int freq, int time, Flow flow = Flow::kTrain) const;
  int out_freq(int freq) const;
  int out_channels() const { return out_channels_; }

 private:
  Parameter* weight_ = nullptr;  // (in_channels*kf*kt) x out_channels
  Parameter* bias_ = nullptr;
  int in_channels_ = 0;
  int out_channels_ = 0;
  int kernel_freq_ = 0;
  int kernel_time_ = 0;
  int stride_freq_ = 1;
};

/// Mean over frequency: (N*F*T) x C -> time-major (T*N) x C, row t*N + n.
Var mean_over_frequency(Var maps, int batch, int freq, int time);

class Lstm {
 public:
  Lstm() = default;
  Lstm(ParameterStore& store, const std::string& name, int in, int hidden);

  // inputs[t]: N x in. Returns hidden states h_t: N x hidden.
  std::vector<Var> operator()(Tape& tape, const std::vector<Var>& inputs, Flow flow = Flow::kTrain) const;
  int hidden() const { return hidden_; }

 private:
  Parameter* w_input_ = nullptr;   // in x 4h, gate order i, f, g, o
  Parameter* w_hidden_ = nullptr;  // h x 4h
  Parameter* bias_ = nullptr;
  int hidden_ = 0;
};

class GruCell {
 public:
  GruCell() = default;
  GruCell(ParameterStore& store, const std::string& name, int in, int hidden);

  // x: N x in, h: N x hidden -> N x hidden. Gate order r, z, n.
  Var operator()(Tape& tape, Var x, Var h, Flow flow = Flow::kTrain) const;
  int hidden() const { return hidden_; }
  int in() const { return in_; }

 private:
  Parameter* w_input_ = nullptr;
  Parameter* w_hidden_ = nullptr;
  Parameter* b_input_ = nullptr;
  Parameter* b_hidden_ = nullptr;
  int in_ = 0;
  int hidden_ = 0;
};

/// score_t = v^T tanh(W frame_t + b); output = sum_t softmax(score)_t frame_t.
class AttentionPool {
 public:
  AttentionPool() = default;
  AttentionPool(ParameterStore& store, const std::string& name, int dim, int attention_dim);

  // frames: T x d -> 1 x d.
  Var operator()(Tape& tape, Var frames, Flow flow = Flow::kTrain) const;
  // frames: time-major (T*N) x d -> N x d, one pooled row per sequence.
  Var pool_batch(Tape& tape, Var frames, int batch, Flow flow = Flow::kTrain) const;
  // Softmax weights for a single T x d sequence, 1 x T.
  Var weights(Tape& tape, Var frames, Flow flow = Flow::kTrain) const;

  Parameter& projection() const { return *w_; }
  Parameter& bias() const { return *b_; }
  Parameter& context() const { return *v_; }

 private:
  Var scores(Tape& tape, Var frames, Flow flow) const;

  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
  Parameter* v_ = nullptr;
};

/// Soft-assignment VLAD over K learnable centers.
class NetVlad {
 public:
  NetVlad() = default;
  NetVlad(ParameterStore& store, const std::string& name, int dim, int clusters);

  // locals: N x d -> 1 x (K*d), intra- then globally L2-normalized.
  Var operator()(Tape& tape, Var locals, Flow flow = Flow::kTrain) const;
  // Residual sums before any normalization, K x d.
  Var residuals(Tape& tape, Var locals, Flow flow = Flow::kTrain) const;
  Var assignments(Tape& tape, Var locals, Flow flow = Flow::kTrain) const;

  int clusters() const { return clusters_; }
  int dim() const { return dim_; }
  Parameter& assign_weight() const { return *w_; }
  Parameter& assign_bias() const { return *b_; }
  Parameter& centers() const { return *centers_; }

 private:
  Parameter* w_ = nullptr;        // d x K
  Parameter* b_ = nullptr;        // 1 x K
  Parameter* centers_ = nullptr;  // K x d
  int dim_ = 0;
  int clusters_ = 0;
};

/// Eigen evolution pooling of a T x d sequence to 1 x d. Time weights are the
/// projection of the uniform vector onto the leading eigenspace of the T x T
/// Gram matrix X X^T, normalized to sum to one; uniform weights when that sum
/// vanishes. Differentiable when the leading eigenvalue is simple.
Var eep_pool(Tape& tape, Var sequence);

/// Adaptive-moment optimizer with bias correction. Moment buffers are keyed
/// by parameter address, so a store must outlive its optimizer.
class Adam {
 public:
  explicit Adam(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  // One update from the gradients currently held by `params`.
  void step(const std::vector<Parameter*>& params);
  long steps() const { return t_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
  std::map<const Parameter*, Moments> state_;
};

struct EepWeights {
  Vector weights;  // length T, sums to 1
  bool fallback = false;
};
EepWeights eep_weights(const Matrix& sequence);

}  // namespace cfd::nn
