#include "alignreid/aligned.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "alignreid/kernels/kernels.hpp"
#include "alignreid/tape.hpp"

namespace areid::aligned {

double normalize_distance(double x) {
  return std::min(std::tanh(0.5 * x), std::nextafter(1.0, 0.0));
}

Array part_distance_matrix(const Array& f, const Array& g) {
  if (f.rank() != 2 || g.rank() != 2) {
    throw std::invalid_argument("part_distance_matrix: expected [H, c] inputs, got " +
                                shape_str(f.shape()) + " and " + shape_str(g.shape()));
  }
  if (f.dim(0) != g.dim(0) || f.dim(1) != g.dim(1)) {
    throw std::invalid_argument("part_distance_matrix: mismatched stripe sets " +
                                shape_str(f.shape()) + " vs " + shape_str(g.shape()));
  }
  const std::size_t h = f.dim(0);
  Array d({h, h});
  kernels::serial::pairwise_distance(f.values(), h, g.values(), h, f.dim(1), kNormEpsilon,
                                     d.values());
  for (auto& v : d.values()) v = normalize_distance(v);
  return d;
}

LocalDistance shortest_path(const Array& d) {
  if (d.rank() != 2 || d.dim(0) != d.dim(1) || d.size() == 0) {
    throw std::invalid_argument("shortest_path: expected a non-empty square matrix, got " +
                                shape_str(d.shape()));
  }
  const std::size_t h = d.dim(0);
  kernels::BlockLayout layout{1, 1, h};
  std::vector<std::uint8_t> above(h * h, 0);
  double cost = 0.0;
  kernels::serial::block_path_cost(layout, d.values(), {&cost, 1}, above);

  LocalDistance out;
  out.value = cost;
  auto& steps = out.path.steps;
  std::size_t i = h - 1, j = h - 1;
  while (true) {
    steps.push_back({i, j, d.at(i, j)});
    if (i == 0 && j == 0) break;
    if (above[i * h + j]) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(steps.begin(), steps.end());
  return out;
}

Array shortest_path_backward(const Array& d, const AlignmentPath& path, double upstream) {
  Array g(d.shape());
  for (const auto& s : path.steps) g.at(s.i, s.j) += upstream;
  return g;
}

double local_distance(const Array& f, const Array& g) {
  return shortest_path(part_distance_matrix(f, g)).value;
}

double global_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("global_distance: dimension " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
  }
  double out = 0.0;
  kernels::serial::pairwise_distance(a, 1, b, 1, a.size(), kNormEpsilon, {&out, 1});
  return out;
}

namespace {

std::string grey(double v) {
  const int level = static_cast<int>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", level, level, level);
  return buf;
}

// Mean of the stripe vector mapped through tanh so arbitrary features get a
// visible shade when no explicit colors are supplied.
std::string default_fill(const Array& x, std::size_t row) {
  const std::size_t c = x.dim(1);
  double s = 0.0;
  for (std::size_t k = 0; k < c; ++k) s += x.at(row, k);
  return grey(0.5 + 0.5 * std::tanh(s / static_cast<double>(c)));
}

}  // namespace

std::string render_alignment(const Array& f, const Array& g, const AlignmentPath& path,
                             const RenderOptions& options) {
  const std::size_t h = f.dim(0);
  const double sh = options.stripe_height, sw = options.stripe_width;
  const double width = 2 * sw + options.gap + 20;
  const double height = static_cast<double>(h) * sh + 20;
  const double left_x = 10, right_x = 10 + sw + options.gap;

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  auto stripe = [&](double x, std::size_t row, const std::string& fill) {
    os << "  <rect x=\"" << x << "\" y=\"" << 10 + static_cast<double>(row) * sh
       << "\" width=\"" << sw << "\" height=\"" << sh << "\" fill=\"" << fill
       << "\" stroke=\"#000000\" stroke-width=\"0.5\"/>\n";
  };
  for (std::size_t r = 0; r < h; ++r) {
    stripe(left_x, r, r < options.f_colors.size() ? options.f_colors[r] : default_fill(f, r));
    stripe(right_x, r, r < options.g_colors.size() ? options.g_colors[r] : default_fill(g, r));
  }
  for (const auto& s : path.steps) {
    const double y1 = 10 + (static_cast<double>(s.i) + 0.5) * sh;
    const double y2 = 10 + (static_cast<double>(s.j) + 0.5) * sh;
    const double stroke = 0.02 / (1e-3 + s.d);
    os << "  <line x1=\"" << left_x + sw << "\" y1=\"" << y1 << "\" x2=\"" << right_x
       << "\" y2=\"" << y2 << "\" stroke=\"#000000\" stroke-width=\"" << stroke
       << "\" data-i=\"" << s.i + 1 << "\" data-j=\"" << s.j + 1 << "\" data-d=\"" << s.d
       << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string path_dump(const AlignmentPath& path) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& s : path.steps) os << s.i + 1 << ',' << s.j + 1 << ',' << s.d << '\n';
  return os.str();
}

}  // namespace areid::aligned
