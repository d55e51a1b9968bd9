#include "cfdebias/layers.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cfd::nn {

namespace {

constexpr char kMagic[8] = {'C', 'F', 'D', 'W', 'T', 'S', '0', '1'};

Var activate(Var x, Activation act) { return act == Activation::kRelu ? ad::relu(x) : ad::tanh(x); }

Var zeros(Tape& tape, Eigen::Index rows, Eigen::Index cols) {
  return tape.constant(Matrix::Zero(rows, cols));
}

}  // namespace

ParameterStore::ParameterStore(std::uint64_t seed) : seed_(seed), rng_(seed) {}

Parameter& ParameterStore::insert(const std::string& name, Matrix value) {
  if (params_.contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  Parameter& p = params_[name];
  p.value = std::move(value);
  p.zero_grad();
  return p;
}

Parameter& ParameterStore::add_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                       double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  // Column-major fill order is part of the seeded contract.
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = bound == 0.0 ? 0.0 : dist(rng_);
  return insert(name, std::move(m));
}

Parameter& ParameterStore::add_fan_in(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                      Eigen::Index fan_in) {
  return add_uniform(name, rows, cols, 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, fan_in))));
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

std::vector<Parameter*> ParameterStore::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& [name, p] : params_) {
    if (name.starts_with(prefix)) out.push_back(&p);
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

ParameterStore::Snapshot ParameterStore::snapshot() const {
  Snapshot s;
  for (const auto& [name, p] : params_) s.emplace(name, p.value);
  return s;
}

void ParameterStore::restore(const Snapshot& values) {
  for (auto& [name, p] : params_) {
    auto it = values.find(name);
    if (it == values.end()) throw std::invalid_argument("snapshot lacks parameter " + name);
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols()) {
      throw std::invalid_argument("snapshot shape mismatch for " + name);
    }
    p.value = it->second;
  }
}

void ParameterStore::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t count = params_.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& [name, p] : params_) {
    const std::uint64_t len = name.size();
    const std::int64_t rows = p.value.rows(), cols = p.value.cols();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(name.data(), static_cast<std::streamsize>(len));
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(double) * p.value.size()));
  }
}

void ParameterStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error(path.string() + " is not a weight blob");
  }
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  Snapshot values;
  for (std::uint64_t i = 0; i < count && in; ++i) {
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (len > 4096) throw std::runtime_error(path.string() + ": corrupt parameter name");
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    std::int64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    if (rows < 0 || cols < 0 || rows * cols > (1LL << 31)) throw std::runtime_error(path.string() + ": corrupt shape");
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    values.emplace(std::move(name), std::move(m));
  }
  if (!in) throw std::runtime_error(path.string() + ": truncated weight blob");
  restore(values);
}

// ---------------------------------------------------------------------------

Dense::Dense(ParameterStore& store, const std::string& name, int in, int out) : in_(in), out_(out) {
  weight_ = &store.add_fan_in(name + ".weight", in, out, in);
  bias_ = &store.add_fan_in(name + ".bias", 1, out, in);
}

Var Dense::operator()(Tape& tape, Var x, Flow flow) const {
  if (x.cols() != in_) {
    throw std::invalid_argument("Dense: expected " + std::to_string(in_) + " inputs, got " +
                                std::to_string(x.cols()));
  }
  return ad::add_row(ad::matmul(x, tape.param(*weight_, flow)), tape.param(*bias_, flow));
}

Mlp::Mlp(ParameterStore& store, const std::string& name, int in, const std::vector<int>& hidden, int out,
         Activation act)
    : act_(act) {
  int prev = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers_.emplace_back(store, name + ".fc" + std::to_string(i), prev, hidden[i]);
    prev = hidden[i];
  }
  layers_.emplace_back(store, name + ".out", prev, out);
}

Var Mlp::operator()(Tape& tape, Var x, Flow flow) const {
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) x = activate(layers_[i](tape, x, flow), act_);
  return layers_.back()(tape, x, flow);
}

// ---------------------------------------------------------------------------

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
               int kernel_freq, int kernel_time, int stride_freq)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_freq_(kernel_freq),
      kernel_time_(kernel_time),
      stride_freq_(stride_freq) {
  const int fan_in = in_channels * kernel_freq * kernel_time;
  weight_ = &store.add_fan_in(name + ".weight", fan_in, out_channels, fan_in);
  bias_ = &store.add_fan_in(name + ".bias", 1, out_channels, fan_in);
}

int Conv2d::out_freq(int freq) const {
  const int pad = kernel_freq_ / 2;
  return (freq + 2 * pad - kernel_freq_) / stride_freq_ + 1;
}

Var Conv2d::operator()(Tape& tape, Var maps, int batch, int freq, int time, Flow flow) const {
  const Eigen::Index in_rows = static_cast<Eigen::Index>(batch) * freq * time;
  if (maps.rows() != in_rows || maps.cols() != in_channels_) {
    throw std::invalid_argument("Conv2d: input shape does not match batch x freq x time x channels");
  }
  const int fout = out_freq(freq);
  const int pad_f = kernel_freq_ / 2, pad_t = kernel_time_ / 2;
  const Eigen::Index out_rows = static_cast<Eigen::Index>(batch) * fout * time;
  const Eigen::Index patch = static_cast<Eigen::Index>(in_channels_) * kernel_freq_ * kernel_time_;
  std::vector<Eigen::Index> index(static_cast<std::size_t>(out_rows * patch), -1);
  for (int n = 0; n < batch; ++n) {
    for (int fo = 0; fo < fout; ++fo) {
      for (int t = 0; t < time; ++t) {
        const Eigen::Index row = (static_cast<Eigen::Index>(n) * fout + fo) * time + t;
        for (int c = 0; c < in_channels_; ++c) {
          for (int i = 0; i < kernel_freq_; ++i) {
            const int f = fo * stride_freq_ - pad_f + i;
            if (f < 0 || f >= freq) continue;
            for (int j = 0; j < kernel_time_; ++j) {
              const int tt = t - pad_t + j;
              if (tt < 0 || tt >= time) continue;
              const Eigen::Index col = (static_cast<Eigen::Index>(c) * kernel_freq_ + i) * kernel_time_ + j;
              const Eigen::Index src_row = (static_cast<Eigen::Index>(n) * freq + f) * time + tt;
              index[static_cast<std::size_t>(col * out_rows + row)] = c * in_rows + src_row;
            }
          }
        }
      }
    }
  }
  Var patches = ad::gather(maps, std::move(index), out_rows, patch);
  return ad::add_row(ad::matmul(patches, tape.param(*weight_, flow)), tape.param(*bias_, flow));
}

Var mean_over_frequency(Var maps, int batch, int freq, int time) {
  std::vector<std::vector<Eigen::Index>> groups(static_cast<std::size_t>(batch) * time);
  for (int t = 0; t < time; ++t) {
    for (int n = 0; n < batch; ++n) {
      auto& g = groups[static_cast<std::size_t>(t) * batch + n];
      g.reserve(static_cast<std::size_t>(freq));
      for (int f = 0; f < freq; ++f) g.push_back((static_cast<Eigen::Index>(n) * freq + f) * time + t);
    }
  }
  return ad::pool_rows(maps, std::move(groups));
}

// ---------------------------------------------------------------------------

Lstm::Lstm(ParameterStore& store, const std::string& name, int in, int hidden) : hidden_(hidden) {
  w_input_ = &store.add_fan_in(name + ".w_input", in, 4 * hidden, hidden);
  w_hidden_ = &store.add_fan_in(name + ".w_hidden", hidden, 4 * hidden, hidden);
  bias_ = &store.add_fan_in(name + ".bias", 1, 4 * hidden, hidden);
}

std::vector<Var> Lstm::operator()(Tape& tape, const std::vector<Var>& inputs, Flow flow) const {
  std::vector<Var> out;
  if (inputs.empty()) return out;
  const Eigen::Index n = inputs.front().rows();
  Var wx = tape.param(*w_input_, flow);
  Var wh = tape.param(*w_hidden_, flow);
  Var b = tape.param(*bias_, flow);
  Var h = zeros(tape, n, hidden_);
  Var c = zeros(tape, n, hidden_);
  out.reserve(inputs.size());
  for (const Var& x : inputs) {
    Var gates = ad::add_row(ad::add(ad::matmul(x, wx), ad::matmul(h, wh)), b);
    Var i = ad::sigmoid(ad::slice_cols(gates, 0, hidden_));
    Var f = ad::sigmoid(ad::slice_cols(gates, hidden_, hidden_));
    Var g = ad::tanh(ad::slice_cols(gates, 2 * hidden_, hidden_));
    Var o = ad::sigmoid(ad::slice_cols(gates, 3 * hidden_, hidden_));
    c = ad::add(ad::mul(f, c), ad::mul(i, g));
    h = ad::mul(o, ad::tanh(c));
    out.push_back(h);
  }
  return out;
}

GruCell::GruCell(ParameterStore& store, const std::string& name, int in, int hidden)
    : in_(in), hidden_(hidden) {
  w_input_ = &store.add_fan_in(name + ".w_input", in, 3 * hidden, hidden);
  w_hidden_ = &store.add_fan_in(name + ".w_hidden", hidden, 3 * hidden, hidden);
  b_input_ = &store.add_fan_in(name + ".b_input", 1, 3 * hidden, hidden);
  b_hidden_ = &store.add_fan_in(name + ".b_hidden", 1, 3 * hidden, hidden);
}

Var GruCell::operator()(Tape& tape, Var x, Var h, Flow flow) const {
  if (x.cols() != in_ || h.cols() != hidden_ || x.rows() != h.rows()) {
    throw std::invalid_argument("GruCell: input or hidden shape mismatch");
  }
  Var gx = ad::add_row(ad::matmul(x, tape.param(*w_input_, flow)), tape.param(*b_input_, flow));
  Var gh = ad::add_row(ad::matmul(h, tape.param(*w_hidden_, flow)), tape.param(*b_hidden_, flow));
  Var r = ad::sigmoid(ad::add(ad::slice_cols(gx, 0, hidden_), ad::slice_cols(gh, 0, hidden_)));
  Var z = ad::sigmoid(ad::add(ad::slice_cols(gx, hidden_, hidden_), ad::slice_cols(gh, hidden_, hidden_)));
  Var cand = ad::tanh(ad::add(ad::slice_cols(gx, 2 * hidden_, hidden_),
                              ad::mul(r, ad::slice_cols(gh, 2 * hidden_, hidden_))));
  // (1 - z) * n + z * h
  return ad::add(cand, ad::mul(z, ad::sub(h, cand)));
}

// ---------------------------------------------------------------------------

AttentionPool::AttentionPool(ParameterStore& store, const std::string& name, int dim, int attention_dim) {
  w_ = &store.add_fan_in(name + ".projection", dim, attention_dim, dim);
  b_ = &store.add_fan_in(name + ".bias", 1, attention_dim, dim);
  v_ = &store.add_fan_in(name + ".context", attention_dim, 1, attention_dim);
}

Var AttentionPool::scores(Tape& tape, Var frames, Flow flow) const {
  Var hidden = ad::tanh(ad::add_row(ad::matmul(frames, tape.param(*w_, flow)), tape.param(*b_, flow)));
  return ad::matmul(hidden, tape.param(*v_, flow));
}

Var AttentionPool::weights(Tape& tape, Var frames, Flow flow) const {
  if (frames.rows() < 1) throw std::invalid_argument("AttentionPool: empty sequence");
  return ad::softmax_rows(ad::transpose(scores(tape, frames, flow)));
}

Var AttentionPool::operator()(Tape& tape, Var frames, Flow flow) const {
  return ad::matmul(weights(tape, frames, flow), frames);
}

Var AttentionPool::pool_batch(Tape& tape, Var frames, int batch, Flow flow) const {
  const Eigen::Index rows = frames.rows();
  if (batch < 1 || rows % batch != 0 || rows == 0) {
    throw std::invalid_argument("AttentionPool: frame rows are not a multiple of the batch");
  }
  const Eigen::Index time = rows / batch;
  const Eigen::Index dim = frames.cols();
  Var s = scores(tape, frames, flow);  // (T*N) x 1, row t*N + n
  std::vector<Eigen::Index> to_grid(static_cast<std::size_t>(batch * time));
  for (Eigen::Index t = 0; t < time; ++t) {
    for (Eigen::Index n = 0; n < batch; ++n) to_grid[static_cast<std::size_t>(t * batch + n)] = t * batch + n;
  }
  Var w = ad::softmax_rows(ad::gather(s, std::move(to_grid), batch, time));  // N x T
  std::vector<Eigen::Index> spread(static_cast<std::size_t>(rows * dim));
  for (Eigen::Index k = 0; k < dim; ++k) {
    for (Eigen::Index t = 0; t < time; ++t) {
      for (Eigen::Index n = 0; n < batch; ++n) {
        spread[static_cast<std::size_t>(k * rows + t * batch + n)] = t * batch + n;
      }
    }
  }
  Var weighted = ad::mul(ad::gather(w, std::move(spread), rows, dim), frames);
  std::vector<std::vector<Eigen::Index>> groups(static_cast<std::size_t>(batch));
  for (Eigen::Index n = 0; n < batch; ++n) {
    for (Eigen::Index t = 0; t < time; ++t) groups[static_cast<std::size_t>(n)].push_back(t * batch + n);
  }
  return ad::scale(ad::pool_rows(weighted, std::move(groups)), static_cast<double>(time));
}

// ---------------------------------------------------------------------------

NetVlad::NetVlad(ParameterStore& store, const std::string& name, int dim, int clusters)
    : dim_(dim), clusters_(clusters) {
  w_ = &store.add_fan_in(name + ".assign_weight", dim, clusters, dim);
  b_ = &store.add_fan_in(name + ".assign_bias", 1, clusters, dim);
  centers_ = &store.add_uniform(name + ".centers", clusters, dim, 1.0);
}

Var NetVlad::assignments(Tape& tape, Var locals, Flow flow) const {
  if (locals.rows() < 1 || locals.cols() != dim_) {
    throw std::invalid_argument("NetVlad: expected N >= 1 local features of dimension " + std::to_string(dim_));
  }
  return ad::softmax_rows(ad::add_row(ad::matmul(locals, tape.param(*w_, flow)), tape.param(*b_, flow)));
}

Var NetVlad::residuals(Tape& tape, Var locals, Flow flow) const {
  Var a = assignments(tape, locals, flow);  // N x K
  Var mass = ad::scale(ad::mean_rows(a), static_cast<double>(locals.rows()));  // 1 x K
  Var spread = ad::matmul(ad::transpose(mass), tape.constant(Matrix::Ones(1, dim_)));  // K x d
  return ad::sub(ad::matmul(ad::transpose(a), locals), ad::mul(spread, tape.param(*centers_, flow)));
}

Var NetVlad::operator()(Tape& tape, Var locals, Flow flow) const {
  Var v = ad::l2_normalize_rows(residuals(tape, locals, flow));
  std::vector<Eigen::Index> flat(static_cast<std::size_t>(clusters_) * dim_);
  for (int k = 0; k < clusters_; ++k) {
    for (int j = 0; j < dim_; ++j) {
      flat[static_cast<std::size_t>(k) * dim_ + j] = static_cast<Eigen::Index>(j) * clusters_ + k;
    }
  }
  return ad::l2_normalize_rows(ad::gather(v, std::move(flat), 1, static_cast<Eigen::Index>(clusters_) * dim_));
}

// ---------------------------------------------------------------------------

namespace {

struct EepSolution {
  Vector weights;
  bool fallback = false;
  bool simple = false;  // leading eigenvalue has multiplicity one
  Matrix eigvecs;       // of X^T X, ascending eigenvalues
  Vector eigvals;
  double sum = 0.0;     // 1^T X v for the leading v when simple
};

EepSolution solve_eep(const Matrix& x) {
  if (x.rows() < 1 || x.cols() < 1) throw std::invalid_argument("eep: empty sequence");
  if (!x.allFinite()) throw std::invalid_argument("eep: non-finite input");
  const Eigen::Index t = x.rows();
  EepSolution sol;
  const Eigen::SelfAdjointEigenSolver<Matrix> es(x.transpose() * x);
  sol.eigvecs = es.eigenvectors();
  sol.eigvals = es.eigenvalues();
  const Eigen::Index d = x.cols();
  const double top = sol.eigvals(d - 1);
  const Vector ones = Vector::Ones(t);
  if (!(top > 1e-300)) {
    sol.weights = ones / static_cast<double>(t);
    sol.fallback = true;
    return sol;
  }
  // Leading eigenspace of X X^T is X times the leading eigenspace of X^T X.
  const double tol = 1e-9 * top;
  Vector projected = Vector::Zero(t);
  double mass = 0.0;
  int multiplicity = 0;
  for (Eigen::Index j = d - 1; j >= 0 && sol.eigvals(j) >= top - tol; --j) {
    const Vector u = x * sol.eigvecs.col(j) / std::sqrt(sol.eigvals(j));
    const double c = u.sum();
    projected += c * u;
    mass += c * c;
    ++multiplicity;
  }
  if (mass < 1e-16) {
    sol.weights = ones / static_cast<double>(t);
    sol.fallback = true;
    return sol;
  }
  sol.weights = projected / projected.sum();
  sol.simple = multiplicity == 1;
  if (sol.simple) sol.sum = (x * sol.eigvecs.col(d - 1)).sum();
  return sol;
}

}  // namespace

EepWeights eep_weights(const Matrix& sequence) {
  EepSolution sol = solve_eep(sequence);
  return {std::move(sol.weights), sol.fallback};
}

Var eep_pool(Tape& tape, Var sequence) {
  const Matrix& x = sequence.value();
  EepSolution sol = solve_eep(x);
  Matrix out = sol.weights.transpose() * x;
  const int is = sequence.id();
  return tape.record(std::move(out), {sequence}, [is, sol = std::move(sol)](Tape& t, int self) {
    const Matrix& x = t.value(is);
    const Vector gy = t.grad(self).row(0).transpose();
    Matrix& gx = t.grad(is);
    const Vector& w = sol.weights;
    // y = X^T w
    gx.noalias() += w * gy.transpose();
    if (sol.fallback || !sol.simple) return;  // weights treated as constant
    const Eigen::Index d = x.cols();
    const Vector v = sol.eigvecs.col(d - 1);
    const double lead = sol.eigvals(d - 1);
    // w = a / s, a = X v, s = 1^T a
    const Vector gw = x * gy;
    const Vector ga = (gw.array() - gw.dot(w)).matrix() / sol.sum;
    gx.noalias() += ga * v.transpose();
    const Vector gv = x.transpose() * ga;
    // First-order eigenvector perturbation of the leading eigenpair.
    Matrix gc = Matrix::Zero(d, d);
    for (Eigen::Index j = 0; j + 1 < d; ++j) {
      const double gap = lead - sol.eigvals(j);
      if (gap <= 1e-12 * lead) continue;
      gc.noalias() += (sol.eigvecs.col(j).dot(gv) / gap) * sol.eigvecs.col(j) * v.transpose();
    }
    const Matrix sym = 0.5 * (gc + gc.transpose());
    gx.noalias() += 2.0 * x * sym;
  });
}

void Adam::step(const std::vector<Parameter*>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) continue;
    Moments& s = state_[p];
    if (s.m.size() == 0) {
      s.m = Matrix::Zero(p->value.rows(), p->value.cols());
      s.v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    s.m = beta1_ * s.m + (1.0 - beta1_) * p->grad;
    s.v = beta2_ * s.v + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    p->value.array() -= lr_ * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
  }
}

}  // namespace cfd::nn
