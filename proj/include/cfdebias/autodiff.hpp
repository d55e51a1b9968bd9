#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every intermediate value of one forward evaluation. Calling
// backward() on a scalar node propagates gradients to all recorded nodes and
// accumulates them into the Parameter objects that were bound with
// Flow::kTrain. Parameters bound with Flow::kFrozen take part in the forward
// value but never receive gradient; this is how stop-gradient routing is
// expressed.

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace cfd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace cfd

namespace cfd::ad {

struct Parameter {
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

enum class Flow { kTrain, kFrozen };

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  // The same Parameter bound twice with the same flow maps to one leaf.
  Var param(Parameter& p, Flow flow = Flow::kTrain);

  // root must be 1x1. Gradients accumulate into bound Parameter::grad.
  void backward(Var root);

  // Op construction. `value` must be computed before recording; `inputs`
  // decides whether the node participates in differentiation.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backprop fn);
  Var record(Matrix value, std::span<const Var> inputs, Backprop fn);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  // Gradient buffer of a node, allocated as zeros on first access.
  Matrix& grad(int id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backprop backprop;
    Parameter* sink = nullptr;
    bool needs_grad = false;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> trained_;
  std::unordered_map<const Parameter*, int> frozen_;
};

// Elementwise and linear algebra.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// a (n x d) + row (1 x d) broadcast over rows.
Var add_row(Var a, Var row);
// row (1 x d) repeated n times.
Var broadcast_rows(Var row, Eigen::Index n);
Var transpose(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var log_sigmoid(Var a);

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);

// Shape manipulation.
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
// out(i) = a(index[i]) over column-major flat indices; index -1 yields 0.
Var gather(Var a, std::vector<Eigen::Index> index, Eigen::Index rows,
           Eigen::Index cols);
// out row r = mean of a's rows listed in groups[r].
Var pool_rows(Var a, std::vector<std::vector<Eigen::Index>> groups);

// Reductions.
Var sum(Var a);
Var mean(Var a);
// Column means, 1 x cols.
Var mean_rows(Var a);

// Each row scaled to unit L2 norm; rows with norm below eps become zero.
Var l2_normalize_rows(Var a, double eps = 1e-12);

// Mean over rows of -log softmax(logits)[label], optionally weighted per row.
Var cross_entropy(Var logits, std::span<const int> labels,
                  std::span<const double> weights = {});
// Mean over rows of sum_k -target(r,k) * log softmax(logits)(r,k), scaled by
// `factor`. target is a constant.
Var soft_cross_entropy(Var logits, const Matrix& target, double factor = 1.0);

}  // namespace cfd::ad
