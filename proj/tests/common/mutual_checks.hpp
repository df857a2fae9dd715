#pragma once

// Metric mutual loss semantics, shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <random>

#include "alignreid/losses.hpp"
#include "alignreid/tape.hpp"

namespace mutual {

using areid::Array;

// Symmetric non-negative matrix with a zero diagonal, like a distance matrix.
inline Array distance_like(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 2.0);
  Array m({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m.at(i, j) = m.at(j, i) = u(rng);
  return m;
}

// dL/dM1 with every occurrence of M2 in the graph.
inline Array grad_m1(const Array& m1, const Array& m2, const Array& m1_frozen,
                     const Array& m2_frozen) {
  areid::Tape t;
  const auto a = t.parameter(m1);
  const auto b = t.parameter(m2);
  const auto loss = areid::metric_mutual_loss(t, a, b, t.parameter(m1_frozen), t.parameter(m2_frozen));
  return t.backprop(loss).of(a);
}

// max |dL/dM1 - (2/N^2)(M1 - M2)|.
inline double closed_form_error(const Array& m1, const Array& m2) {
  areid::Tape t;
  const auto a = t.parameter(m1);
  const auto b = t.parameter(m2);
  const Array g = t.backprop(areid::metric_mutual_loss(t, a, b)).of(a);
  const double n = static_cast<double>(m1.dim(0));
  double worst = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k)
    worst = std::max(worst, std::abs(g[k] - 2.0 / (n * n) * (m1[k] - m2[k])));
  return worst;
}

struct MixedDerivative {
  double live = 0.0;    // max |d(dL/dM1)/dM2| through the differentiable M2
  double frozen = 0.0;  // same through the M2 under sg(), for contrast
};

// Central differences of the analytic dL/dM1 with respect to each entry of M2.
inline MixedDerivative mixed_second_derivative(const Array& m1, const Array& m2, double h = 1e-5) {
  MixedDerivative out;
  for (std::size_t k = 0; k < m2.size(); ++k) {
    Array up = m2, down = m2;
    up[k] += h;
    down[k] -= h;
    const Array gl_up = grad_m1(m1, up, m1, m2), gl_down = grad_m1(m1, down, m1, m2);
    const Array gf_up = grad_m1(m1, m2, m1, up), gf_down = grad_m1(m1, m2, m1, down);
    for (std::size_t i = 0; i < m1.size(); ++i) {
      out.live = std::max(out.live, std::abs((gl_up[i] - gl_down[i]) / (2 * h)));
      out.frozen = std::max(out.frozen, std::abs((gf_up[i] - gf_down[i]) / (2 * h)));
    }
  }
  return out;
}

}  // namespace mutual
