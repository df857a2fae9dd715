// Serial reference vs OpenMP kernels on the toy network's shapes.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "alignreid/kernels/kernels.hpp"

namespace k = areid::kernels;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Second stage of the default backbone on a 32-image batch.
k::ConvGeometry conv_shape() {
  return {.batch = 32, .in_channels = 8, .in_h = 28, .in_w = 28, .out_channels = 16,
          .kernel = 3, .stride = 2, .pad = 1};
}

template <auto Fn>
void BM_ConvForward(benchmark::State& state) {
  const auto g = conv_shape();
  const auto x = noise(g.input_size(), 1), w = noise(g.weight_size(), 2),
             b = noise(g.out_channels, 3);
  std::vector<double> y(g.output_size());
  for (auto _ : state) {
    Fn(g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Fn>
void BM_ConvBackwardInput(benchmark::State& state) {
  const auto g = conv_shape();
  const auto w = noise(g.weight_size(), 2), dy = noise(g.output_size(), 4);
  std::vector<double> dx(g.input_size());
  for (auto _ : state) {
    Fn(g, w, dy, dx);
    benchmark::DoNotOptimize(dx.data());
  }
}

template <auto Fn>
void BM_ConvBackwardWeight(benchmark::State& state) {
  const auto g = conv_shape();
  const auto x = noise(g.input_size(), 1), dy = noise(g.output_size(), 4);
  std::vector<double> dw(g.weight_size()), db(g.out_channels);
  for (auto _ : state) {
    Fn(g, x, dy, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}

// Stacked local features of a batch: N * H rows of c = 8.
template <auto Fn>
void BM_Pairwise(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0)), dim = 8;
  const auto x = noise(n * dim, 5);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    Fn(x, n, x, n, dim, 1e-12, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void BM_BlockPath(benchmark::State& state) {
  const k::BlockLayout layout{32, 32, static_cast<std::size_t>(state.range(0))};
  const std::size_t cells = layout.row_blocks * layout.col_blocks * layout.cells_per_block();
  auto d = noise(cells, 6);
  for (auto& v : d) v = v * v / (1.0 + v * v);
  std::vector<double> cost(layout.row_blocks * layout.col_blocks);
  std::vector<std::uint8_t> above(cells);
  for (auto _ : state) {
    Fn(layout, d, cost, above);
    benchmark::DoNotOptimize(cost.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<k::serial::conv2d_forward>)->Name("conv_forward/serial");
BENCHMARK(BM_ConvForward<k::omp::conv2d_forward>)->Name("conv_forward/omp");
BENCHMARK(BM_ConvBackwardInput<k::serial::conv2d_backward_input>)->Name("conv_backward_input/serial");
BENCHMARK(BM_ConvBackwardInput<k::omp::conv2d_backward_input>)->Name("conv_backward_input/omp");
BENCHMARK(BM_ConvBackwardWeight<k::serial::conv2d_backward_weight>)->Name("conv_backward_weight/serial");
BENCHMARK(BM_ConvBackwardWeight<k::omp::conv2d_backward_weight>)->Name("conv_backward_weight/omp");
BENCHMARK(BM_Pairwise<k::serial::pairwise_distance>)->Name("pairwise/serial")->Arg(224)->Arg(1024);
BENCHMARK(BM_Pairwise<k::omp::pairwise_distance>)->Name("pairwise/omp")->Arg(224)->Arg(1024);
BENCHMARK(BM_BlockPath<k::serial::block_path_cost>)->Name("block_path/serial")->Arg(7)->Arg(14);
BENCHMARK(BM_BlockPath<k::omp::block_path_cost>)->Name("block_path/omp")->Arg(7)->Arg(14);

BENCHMARK_MAIN();
