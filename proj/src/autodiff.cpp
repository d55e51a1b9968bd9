#include "cfdebias/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cfd::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("autodiff: ") + what);
}

Tape& tape_of(Var a) {
  require(a.valid(), "operation on an unbound Var");
  return *a.tape();
}

double stable_log_sigmoid(double x) {
  return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix row_softmax(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.row(r).maxCoeff();
    out.row(r) = (a.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Matrix row_log_softmax(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.row(r).maxCoeff();
    const double lse = m + std::log((a.row(r).array() - m).exp().sum());
    out.row(r) = (a.row(r).array() - lse).matrix();
  }
  return out;
}

}  // namespace

const Matrix& Var::value() const {
  require(valid(), "value of an unbound Var");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  require(v.size() == 1, "scalar() on a non-scalar node");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Var Tape::param(Parameter& p, Flow flow) {
  auto& cache = flow == Flow::kTrain ? trained_ : frozen_;
  if (auto it = cache.find(&p); it != cache.end()) return Var(this, it->second);
  Node& n = nodes_.emplace_back();
  n.value = p.value;
  if (flow == Flow::kTrain) {
    n.sink = &p;
    n.needs_grad = true;
  }
  const int id = static_cast<int>(nodes_.size()) - 1;
  cache.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backprop fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backprop fn) {
  bool needs = false;
  for (const Var& v : inputs) {
    require(v.tape() == this, "inputs recorded on a different tape");
    needs = needs || nodes_[v.id()].needs_grad;
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backprop = std::move(fn);
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() != 0) {
    n.grad.setZero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backward(Var root) {
  require(root.tape() == this, "backward on a foreign node");
  require(value(root.id()).size() == 1, "backward requires a scalar root");
  if (!nodes_[root.id()].needs_grad) return;
  grad(root.id())(0, 0) += 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backprop) n.backprop(*this, id);
    if (n.sink != nullptr) {
      if (n.sink->grad.rows() != n.value.rows() || n.sink->grad.cols() != n.value.cols()) {
        n.sink->zero_grad();
      }
      n.sink->grad += n.grad;
    }
  }
}

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul shape mismatch");
  Tape& t = tape_of(a);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.needs_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  Tape& t = tape_of(a);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) t.grad(ib) += g;
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shape mismatch");
  Tape& t = tape_of(a);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) t.grad(ib) -= g;
  });
}

Var mul(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul shape mismatch");
  Tape& t = tape_of(a);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
    if (t.needs_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value() * s, {a}, [ia, s](Tape& t, int self) {
    t.grad(ia) += t.grad(self) * s;
  });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row shape mismatch");
  Tape& t = tape_of(a);
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ir)) t.grad(ir) += g.colwise().sum();
  });
}

Var broadcast_rows(Var row, Eigen::Index n) {
  require(row.rows() == 1, "broadcast_rows expects a row vector");
  Tape& t = tape_of(row);
  const int ir = row.id();
  Matrix out = row.value().replicate(n, 1);
  return t.record(std::move(out), {row}, [ir](Tape& t, int self) {
    t.grad(ir) += t.grad(self).colwise().sum();
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().transpose(), {a}, [ia](Tape& t, int self) {
    t.grad(ia) += t.grad(self).transpose();
  });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out = a.value().array().tanh().matrix();
  return t.record(std::move(out), {a}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.grad(ia).array() += t.grad(self).array() * (1.0 - y.array().square());
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  return t.record(std::move(out), {a}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.grad(ia).array() += t.grad(self).array() * y.array() * (1.0 - y.array());
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out = a.value().cwiseMax(0.0);
  return t.record(std::move(out), {a}, [ia](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    t.grad(ia).array() += t.grad(self).array() * (x.array() > 0.0).cast<double>();
  });
}

Var log_sigmoid(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) { return stable_log_sigmoid(x); });
  return t.record(std::move(out), {a}, [ia](Tape& t, int self) {
    const Matrix d = t.value(ia).unaryExpr([](double x) { return stable_sigmoid(-x); });
    t.grad(ia) += t.grad(self).cwiseProduct(d);
  });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(row_softmax(a.value()), {a}, [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    const Eigen::VectorXd dot = (g.cwiseProduct(y)).rowwise().sum();
    t.grad(ia) += (y.array() * (g.colwise() - dot).array()).matrix();
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(row_log_softmax(a.value()), {a}, [ia](Tape& t, int self) {
    const Matrix p = t.value(self).array().exp().matrix();
    const Matrix& g = t.grad(self);
    const Eigen::VectorXd total = g.rowwise().sum();
    t.grad(ia) += g - (p.array().colwise() * total.array()).matrix();
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  Tape& t = tape_of(parts.front());
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.cols();
  }
  return t.record(std::move(out), parts, [layout](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (const auto& [id, start] : layout) {
      if (t.needs_grad(id)) t.grad(id) += g.middleCols(start, t.value(id).cols());
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows of nothing");
  Tape& t = tape_of(parts.front());
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.rows();
  }
  return t.record(std::move(out), parts, [layout](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (const auto& [id, start] : layout) {
      if (t.needs_grad(id)) t.grad(id) += g.middleRows(start, t.value(id).rows());
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols out of range");
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().middleCols(start, count), {a},
                  [ia, start, count](Tape& t, int self) {
                    t.grad(ia).middleCols(start, count) += t.grad(self);
                  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows out of range");
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().middleRows(start, count), {a},
                  [ia, start, count](Tape& t, int self) {
                    t.grad(ia).middleRows(start, count) += t.grad(self);
                  });
}

Var gather(Var a, std::vector<Eigen::Index> index, Eigen::Index rows, Eigen::Index cols) {
  require(static_cast<Eigen::Index>(index.size()) == rows * cols, "gather index size");
  Tape& t = tape_of(a);
  const Matrix& src = a.value();
  Matrix out(rows, cols);
  double* o = out.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < src.size(), "gather index out of range");
    o[i] = index[i] < 0 ? 0.0 : s[index[i]];
  }
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, index = std::move(index)](Tape& t, int self) {
    const double* g = t.grad(self).data();
    double* d = t.grad(ia).data();
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] >= 0) d[index[i]] += g[i];
    }
  });
}

Var pool_rows(Var a, std::vector<std::vector<Eigen::Index>> groups) {
  Tape& t = tape_of(a);
  const Matrix& src = a.value();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(groups.size()), src.cols());
  for (std::size_t r = 0; r < groups.size(); ++r) {
    require(!groups[r].empty(), "pool_rows empty group");
    for (Eigen::Index i : groups[r]) out.row(r) += src.row(i);
    out.row(r) /= static_cast<double>(groups[r].size());
  }
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, groups = std::move(groups)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& d = t.grad(ia);
    for (std::size_t r = 0; r < groups.size(); ++r) {
      const double w = 1.0 / static_cast<double>(groups[r].size());
      for (Eigen::Index i : groups[r]) d.row(i) += w * g.row(r);
    }
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [ia](Tape& t, int self) {
    t.grad(ia).array() += t.grad(self)(0, 0);
  });
}

Var mean(Var a) {
  require(a.value().size() > 0, "mean of an empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean_rows(Var a) {
  require(a.rows() > 0, "mean_rows of an empty matrix");
  Tape& t = tape_of(a);
  const int ia = a.id();
  const double n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().mean();
  return t.record(std::move(out), {a}, [ia, n](Tape& t, int self) {
    t.grad(ia).rowwise() += t.grad(self).row(0) / n;
  });
}

Var l2_normalize_rows(Var a, double eps) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  Eigen::VectorXd norms = x.rowwise().norm();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (norms(r) > eps) out.row(r) = x.row(r) / norms(r);
  }
  return t.record(std::move(out), {a}, [ia, norms, eps](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& d = t.grad(ia);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      if (norms(r) <= eps) continue;
      const double proj = y.row(r).dot(g.row(r));
      d.row(r) += (g.row(r) - proj * y.row(r)) / norms(r);
    }
  });
}

Var cross_entropy(Var logits, std::span<const int> labels, std::span<const double> weights) {
  const Matrix& z = logits.value();
  require(static_cast<Eigen::Index>(labels.size()) == z.rows(), "cross_entropy label count");
  require(weights.empty() || weights.size() == labels.size(), "cross_entropy weight count");
  Tape& t = tape_of(logits);
  const Matrix logp = row_log_softmax(z);
  std::vector<double> w(labels.size(), 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  double total_w = 0.0, loss = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    require(labels[r] >= 0 && labels[r] < z.cols(), "cross_entropy label out of range");
    loss -= w[r] * logp(static_cast<Eigen::Index>(r), labels[r]);
    total_w += w[r];
  }
  require(total_w > 0.0, "cross_entropy with zero total weight");
  Matrix out(1, 1);
  out(0, 0) = loss / total_w;
  std::vector<int> y(labels.begin(), labels.end());
  const int il = logits.id();
  return t.record(std::move(out), {logits},
                  [il, y = std::move(y), w = std::move(w), total_w, logp](Tape& t, int self) {
                    const double g = t.grad(self)(0, 0);
                    Matrix d = logp.array().exp().matrix();
                    for (std::size_t r = 0; r < y.size(); ++r) {
                      d(static_cast<Eigen::Index>(r), y[r]) -= 1.0;
                      d.row(static_cast<Eigen::Index>(r)) *= w[r] / total_w;
                    }
                    t.grad(il) += g * d;
                  });
}

Var soft_cross_entropy(Var logits, const Matrix& target, double factor) {
  const Matrix& z = logits.value();
  require(target.rows() == z.rows() && target.cols() == z.cols(),
          "soft_cross_entropy target shape");
  Tape& t = tape_of(logits);
  const Matrix logp = row_log_softmax(z);
  const double n = static_cast<double>(z.rows());
  Matrix out(1, 1);
  out(0, 0) = -factor * target.cwiseProduct(logp).sum() / n;
  const int il = logits.id();
  return t.record(std::move(out), {logits}, [il, target, logp, factor, n](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    const Matrix p = logp.array().exp().matrix();
    const Eigen::VectorXd mass = target.rowwise().sum();
    const Matrix d = (p.array().colwise() * mass.array()).matrix() - target;
    t.grad(il) += (g * factor / n) * d;
  });
}

}  // namespace cfd::ad
