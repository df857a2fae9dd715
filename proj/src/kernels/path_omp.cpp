#include "alignreid/kernels/kernels.hpp"

#include <atomic>
#include <vector>

namespace areid::kernels {

namespace detail {
extern std::atomic<std::uint64_t> path_cost_counter;
}

namespace omp {

void block_path_cost(const BlockLayout& layout, std::span<const double> dist,
                     std::span<double> cost, std::span<std::uint8_t> from_above) {
  const std::size_t h = layout.parts;
  const std::size_t stride = layout.row_stride();
  const auto blocks = static_cast<std::ptrdiff_t>(layout.row_blocks * layout.col_blocks);

#pragma omp parallel
  {
    // One DP row of running totals; row i overwrites row i-1 in place.
    std::vector<double> row(h);
#pragma omp for schedule(static)
    for (std::ptrdiff_t block = 0; block < blocks; ++block) {
      const std::size_t a = static_cast<std::size_t>(block) / layout.col_blocks;
      const std::size_t b = static_cast<std::size_t>(block) % layout.col_blocks;
      const double* base = dist.data() + a * h * stride + b * h;
      std::uint8_t* choice =
          from_above.data() + static_cast<std::size_t>(block) * layout.cells_per_block();

      row[0] = base[0];
      choice[0] = 0;
      for (std::size_t j = 1; j < h; ++j) {
        row[j] = row[j - 1] + base[j];
        choice[j] = 0;
      }
      for (std::size_t i = 1; i < h; ++i) {
        const double* drow = base + i * stride;
        std::uint8_t* crow = choice + i * h;
        row[0] += drow[0];
        crow[0] = 1;
        for (std::size_t j = 1; j < h; ++j) {
          const bool above = row[j] <= row[j - 1];
          row[j] = (above ? row[j] : row[j - 1]) + drow[j];
          crow[j] = above ? 1 : 0;
        }
      }
      cost[static_cast<std::size_t>(block)] = row[h - 1];
    }
  }
  detail::path_cost_counter += layout.row_blocks * layout.col_blocks;
}

}  // namespace omp
}  // namespace areid::kernels
