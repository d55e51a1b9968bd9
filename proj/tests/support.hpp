#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cfdebias/layers.hpp"

namespace cfd::testing {

struct GradCheck {
  double max_rel = 0.0;  // over entries whose magnitude clears the floor; below it FD roundoff dominates
  double max_abs = 0.0;
  std::size_t checked = 0;
};

/// Compares tape gradients of the scalar built by `build` against central
/// differences for every entry of `params`.
inline GradCheck check_gradients(const std::vector<ad::Parameter*>& params,
                                 const std::function<ad::Var(ad::Tape&)>& build, double h = 1e-6,
                                 double floor = 1e-6) {
  for (ad::Parameter* p : params) p->zero_grad();
  {
    ad::Tape tape;
    tape.backward(build(tape));
  }
  GradCheck out;
  for (ad::Parameter* p : params) {
    const Matrix analytic = p->grad;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      double up;
      {
        ad::Tape t;
        up = build(t).scalar();
      }
      p->value.data()[i] = saved - h;
      double down;
      {
        ad::Tape t;
        down = build(t).scalar();
      }
      p->value.data()[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double a = analytic.data()[i];
      const double err = std::abs(a - fd);
      out.max_abs = std::max(out.max_abs, err);
      const double scale = std::max(std::abs(a), std::abs(fd));
      if (scale > floor) out.max_rel = std::max(out.max_rel, err / scale);
      ++out.checked;
    }
  }
  return out;
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace cfd::testing
