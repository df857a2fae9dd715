#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alignreid/array.hpp"

// Distances between two images: the L2 distance of global features and the
// aligned local distance, the cheapest monotone path through the matrix of
// normalized stripe distances.

namespace areid::aligned {

// d = (e^x - 1) / (e^x + 1) for x >= 0, written as tanh(x / 2) so large x
// saturates without overflow. Clamped below 1 so the result stays in [0, 1).
double normalize_distance(double x);

// F, G: [H, c] stripe features, top row first. Returns the [H, H] matrix of
// normalized part distances.
Array part_distance_matrix(const Array& f, const Array& g);

struct AlignmentStep {
  std::size_t i = 0;  // stripe of the first image (0-based)
  std::size_t j = 0;  // stripe of the second image
  double d = 0.0;
};

// Cells visited from (0, 0) to (H-1, H-1), 2H-1 steps.
struct AlignmentPath {
  std::vector<AlignmentStep> steps;
};

struct LocalDistance {
  double value = 0.0;
  AlignmentPath path;
};

// Minimum-cost monotone path. Ties take the step from the cell above.
LocalDistance shortest_path(const Array& d);

// Subgradient of the path cost: `upstream` on every cell of `path`.
Array shortest_path_backward(const Array& d, const AlignmentPath& path, double upstream);

double local_distance(const Array& f, const Array& g);

double global_distance(std::span<const double> a, std::span<const double> b);

struct RenderOptions {
  double stripe_height = 24.0;
  double stripe_width = 48.0;
  double gap = 120.0;
  // Optional fill per stripe ("#rrggbb"), index-aligned with F and G rows.
  std::vector<std::string> f_colors;
  std::vector<std::string> g_colors;
};

// Two stripe columns with one line per path step; low-distance steps draw
// thicker (stroke width inversely proportional to 1e-3 + d).
std::string render_alignment(const Array& f, const Array& g, const AlignmentPath& path,
                             const RenderOptions& options = {});

// One "i,j,d" line per step, 1-based indices.
std::string path_dump(const AlignmentPath& path);

}  // namespace areid::aligned
