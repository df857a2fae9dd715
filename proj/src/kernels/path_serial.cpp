#include "alignreid/kernels/kernels.hpp"

#include <atomic>
#include <vector>

namespace areid::kernels {

namespace detail {
std::atomic<std::uint64_t> path_cost_counter{0};
}

std::uint64_t path_cost_evaluations() { return detail::path_cost_counter.load(); }

void block_path_backward(const BlockLayout& layout,
                         std::span<const std::uint8_t> from_above,
                         std::span<const double> upstream,
                         std::span<double> grad_dist) {
  const std::size_t h = layout.parts;
  const std::size_t stride = layout.row_stride();
  for (std::size_t a = 0; a < layout.row_blocks; ++a) {
    for (std::size_t b = 0; b < layout.col_blocks; ++b) {
      const std::size_t block = a * layout.col_blocks + b;
      const double up = upstream[block];
      if (up == 0.0) continue;
      const std::uint8_t* choice = from_above.data() + block * layout.cells_per_block();
      std::size_t i = h - 1, j = h - 1;
      while (true) {
        grad_dist[(a * h + i) * stride + b * h + j] += up;
        if (i == 0 && j == 0) break;
        if (choice[i * h + j]) {
          --i;
        } else {
          --j;
        }
      }
    }
  }
}

namespace serial {

void block_path_cost(const BlockLayout& layout, std::span<const double> dist,
                     std::span<double> cost, std::span<std::uint8_t> from_above) {
  const std::size_t h = layout.parts;
  const std::size_t stride = layout.row_stride();
  std::vector<std::vector<double>> s(h, std::vector<double>(h, 0.0));
  for (std::size_t a = 0; a < layout.row_blocks; ++a) {
    for (std::size_t b = 0; b < layout.col_blocks; ++b) {
      const std::size_t block = a * layout.col_blocks + b;
      std::uint8_t* choice = from_above.data() + block * layout.cells_per_block();
      auto d = [&](std::size_t i, std::size_t j) {
        return dist[(a * h + i) * stride + b * h + j];
      };
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < h; ++j) {
          if (i == 0 && j == 0) {
            s[i][j] = d(i, j);
            choice[0] = 0;
          } else if (j == 0) {
            s[i][j] = s[i - 1][j] + d(i, j);
            choice[i * h + j] = 1;
          } else if (i == 0) {
            s[i][j] = s[i][j - 1] + d(i, j);
            choice[i * h + j] = 0;
          } else {
            const bool above = s[i - 1][j] <= s[i][j - 1];
            s[i][j] = (above ? s[i - 1][j] : s[i][j - 1]) + d(i, j);
            choice[i * h + j] = above ? 1 : 0;
          }
        }
      }
      cost[block] = s[h - 1][h - 1];
    }
  }
  detail::path_cost_counter += layout.row_blocks * layout.col_blocks;
}

}  // namespace serial
}  // namespace areid::kernels
