#include "alignreid/kernels/kernels.hpp"

#include <cmath>

namespace areid::kernels {

namespace serial {

void pairwise_distance(std::span<const double> x, std::size_t n,
                       std::span<const double> y, std::size_t m, std::size_t dim,
                       double eps, std::span<double> out) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = x[i * dim + k] - y[j * dim + k];
        acc += diff * diff;
      }
      out[i * m + j] = std::sqrt(acc + eps);
    }
  }
}

}  // namespace serial

namespace omp {

void pairwise_distance(std::span<const double> x, std::size_t n,
                       std::span<const double> y, std::size_t m, std::size_t dim,
                       double eps, std::span<double> out) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto i = static_cast<std::size_t>(r);
    const double* xi = x.data() + i * dim;
    for (std::size_t j = 0; j < m; ++j) {
      const double* yj = y.data() + j * dim;
      double acc = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = xi[k] - yj[k];
        acc += diff * diff;
      }
      out[i * m + j] = std::sqrt(acc + eps);
    }
  }
}

}  // namespace omp
}  // namespace areid::kernels
