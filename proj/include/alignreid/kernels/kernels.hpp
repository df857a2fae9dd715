#pragma once

// Data-parallel inner loops. Every kernel exists twice: a straightforward
// serial reference (namespace serial) kept for testing and benchmarking, and
// the OpenMP variant (namespace omp) that the autodiff primitives dispatch to.
// The OpenMP convolutions lower to im2col plus a BLAS GEMM. Each OpenMP loop
// writes disjoint output slices.

#include <cstddef>
#include <cstdint>
#include <span>

namespace areid::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t weight_size() const {
    return out_channels * in_channels * kernel * kernel;
  }
  std::size_t output_size() const {
    return batch * out_channels * out_h() * out_w();
  }
};

// Layout of a stacked block distance matrix: rows are (a, i) pairs for
// a < rows_blocks, columns (b, j) pairs for b < col_blocks, each block is
// parts x parts.
struct BlockLayout {
  std::size_t row_blocks = 1;
  std::size_t col_blocks = 1;
  std::size_t parts = 1;

  std::size_t row_stride() const { return col_blocks * parts; }
  std::size_t cells_per_block() const { return parts * parts; }
};

// Number of shortest-path block evaluations performed so far in this process.
std::uint64_t path_cost_evaluations();

namespace serial {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> weight,
                           std::span<const double> grad_out,
                           std::span<double> grad_in);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_out,
                            std::span<double> grad_weight,
                            std::span<double> grad_bias);

void pairwise_distance(std::span<const double> x, std::size_t n,
                       std::span<const double> y, std::size_t m, std::size_t dim,
                       double eps, std::span<double> out);

// Minimum monotone path cost per block. from_above[cell] records whether the
// cheapest predecessor of that cell is the one above (ties go above).
void block_path_cost(const BlockLayout& layout, std::span<const double> dist,
                     std::span<double> cost, std::span<std::uint8_t> from_above);

}  // namespace serial

namespace omp {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> weight,
                           std::span<const double> grad_out,
                           std::span<double> grad_in);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> grad_out,
                            std::span<double> grad_weight,
                            std::span<double> grad_bias);

void pairwise_distance(std::span<const double> x, std::size_t n,
                       std::span<const double> y, std::size_t m, std::size_t dim,
                       double eps, std::span<double> out);

void block_path_cost(const BlockLayout& layout, std::span<const double> dist,
                     std::span<double> cost, std::span<std::uint8_t> from_above);

}  // namespace omp

// Scatters `upstream[block]` onto every cell of that block's recorded path.
void block_path_backward(const BlockLayout& layout,
                         std::span<const std::uint8_t> from_above,
                         std::span<const double> upstream,
                         std::span<double> grad_dist);

}  // namespace areid::kernels
