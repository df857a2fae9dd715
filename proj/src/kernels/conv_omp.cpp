#include "alignreid/kernels/kernels.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

#include <cblas.h>

// Convolution lowered to im2col + BLAS GEMM. The column matrix is
// [Ci*k*k, N*Ho*Wo]; every parallel loop owns a disjoint slice of its output.

namespace areid::kernels::omp {

namespace {

int blas_int(std::size_t v) { return static_cast<int>(v); }

void im2col(const ConvGeometry& g, const double* input, std::vector<double>& cols) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel;
  const std::size_t plane = oh_n * ow_n;
  const std::size_t width = g.batch * plane;
  const std::size_t rows = g.in_channels * k * k;
  cols.assign(rows * width, 0.0);
  const auto row_count = static_cast<std::ptrdiff_t>(rows);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < row_count; ++r) {
    const std::size_t ci = static_cast<std::size_t>(r) / (k * k);
    const std::size_t kh = (static_cast<std::size_t>(r) / k) % k;
    const std::size_t kw = static_cast<std::size_t>(r) % k;
    double* dst = cols.data() + static_cast<std::size_t>(r) * width;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const double* src = input + (n * g.in_channels + ci) * g.in_h * g.in_w;
      for (std::size_t oh = 0; oh < oh_n; ++oh) {
        const long ih = static_cast<long>(oh * g.stride + kh) - static_cast<long>(g.pad);
        if (ih < 0 || ih >= static_cast<long>(g.in_h)) continue;
        const double* src_row = src + static_cast<std::size_t>(ih) * g.in_w;
        double* dst_row = dst + n * plane + oh * ow_n;
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          const long iw = static_cast<long>(ow * g.stride + kw) - static_cast<long>(g.pad);
          if (iw >= 0 && iw < static_cast<long>(g.in_w)) dst_row[ow] = src_row[iw];
        }
      }
    }
  }
}

// c[m, n] = a[m, k] * b[k, n], row-major.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, blas_int(m), blas_int(n),
              blas_int(k), 1.0, a, blas_int(k), b, blas_int(n), 0.0, c, blas_int(n));
}

// [N, Co, P] -> [Co, N*P]
std::vector<double> channels_major(const ConvGeometry& g, std::span<const double> grad_out) {
  const std::size_t plane = g.out_h() * g.out_w();
  std::vector<double> out(g.out_channels * g.batch * plane);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      std::copy_n(grad_out.data() + (n * g.out_channels + co) * plane, plane,
                  out.data() + co * g.batch * plane + n * plane);
  return out;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t width = g.batch * plane;
  const std::size_t depth = g.in_channels * g.kernel * g.kernel;
  std::vector<double> cols;
  im2col(g, input.data(), cols);
  std::vector<double> y(g.out_channels * width);
  gemm(weight.data(), cols.data(), y.data(), g.out_channels, depth, width);

  const auto planes = static_cast<std::ptrdiff_t>(g.batch * g.out_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t idx = 0; idx < planes; ++idx) {
    const std::size_t n = static_cast<std::size_t>(idx) / g.out_channels;
    const std::size_t co = static_cast<std::size_t>(idx) % g.out_channels;
    const double b = bias.empty() ? 0.0 : bias[co];
    const double* src = y.data() + co * width + n * plane;
    double* dst = output.data() + static_cast<std::size_t>(idx) * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + b;
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> weight,
                           std::span<const double> grad_out,
                           std::span<double> grad_in) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel;
  const std::size_t plane = oh_n * ow_n;
  const std::size_t width = g.batch * plane;
  const std::size_t depth = g.in_channels * k * k;

  const auto dy = channels_major(g, grad_out);
  std::vector<double> wt(depth * g.out_channels);
  for (std::size_t co = 0; co < g.out_channels; ++co)
    for (std::size_t r = 0; r < depth; ++r) wt[r * g.out_channels + co] = weight[co * depth + r];
  std::vector<double> dcols(depth * width);
  gemm(wt.data(), dy.data(), dcols.data(), depth, g.out_channels, width);

  // col2im: each (n, ci) input plane gathers its k*k column rows.
  const auto planes = static_cast<std::ptrdiff_t>(g.batch * g.in_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t idx = 0; idx < planes; ++idx) {
    const std::size_t n = static_cast<std::size_t>(idx) / g.in_channels;
    const std::size_t ci = static_cast<std::size_t>(idx) % g.in_channels;
    double* gin = grad_in.data() + static_cast<std::size_t>(idx) * g.in_h * g.in_w;
    std::fill(gin, gin + g.in_h * g.in_w, 0.0);
    for (std::size_t kh = 0; kh < k; ++kh)
      for (std::size_t kw = 0; kw < k; ++kw) {
        const double* src = dcols.data() + ((ci * k + kh) * k + kw) * width + n * plane;
        for (std::size_t oh = 0; oh < oh_n; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + kh) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) continue;
          double* dst_row = gin + static_cast<std::size_t>(ih) * g.in_w;
          const double* src_row = src + oh * ow_n;
          for (std::size_t ow = 0; ow < ow_n; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kw) - static_cast<long>(g.pad);
            if (iw >= 0 && iw < static_cast<long>(g.in_w)) dst_row[iw] += src_row[ow];
          }
        }
      }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_out,
                            std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const std::size_t plane = g.out_h() * g.out_w();
  const std::size_t width = g.batch * plane;
  const std::size_t depth = g.in_channels * g.kernel * g.kernel;
  std::vector<double> cols;
  im2col(g, input.data(), cols);
  const auto dy = channels_major(g, grad_out);

  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, blas_int(g.out_channels),
              blas_int(depth), blas_int(width), 1.0, dy.data(), blas_int(width), cols.data(),
              blas_int(width), 0.0, grad_weight.data(), blas_int(depth));

  if (grad_bias.empty()) return;
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    const double* a = dy.data() + co * width;
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (std::size_t j = 0; j < width; ++j) acc += a[j];
    grad_bias[co] = acc;
  }
}

}  // namespace areid::kernels::omp
