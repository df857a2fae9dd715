#include <cmath>
#include <numeric>

#include <doctest.h>

#include "alignreid/retrieval.hpp"
#include "support.hpp"

using namespace areid;

namespace {

Array line_distances(const std::vector<double>& xs, const std::vector<double>& ys) {
  Array d({xs.size(), ys.size()});
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j) d.at(i, j) = std::abs(xs[i] - ys[j]);
  return d;
}

struct Points {
  Array q_g, q_q, g_g;
};

Points random_points(testing::Rng& rng, std::size_t nq, std::size_t ng, std::size_t dim) {
  const Array q = testing::random_array(rng, {nq, dim}), g = testing::random_array(rng, {ng, dim});
  auto dist = [&](const Array& a, const Array& b) {
    Array d({a.dim(0), b.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
      for (std::size_t j = 0; j < b.dim(0); ++j) {
        double acc = 0;
        for (std::size_t c = 0; c < dim; ++c) acc += std::pow(a.at(i, c) - b.at(j, c), 2);
        d.at(i, j) = std::sqrt(acc);
      }
    return d;
  };
  return {dist(q, g), dist(q, q), dist(g, g)};
}

std::vector<std::size_t> order(const Array& d, std::size_t row) {
  std::vector<std::size_t> o(d.dim(1));
  std::iota(o.begin(), o.end(), std::size_t{0});
  std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return d.at(row, a) < d.at(row, b); });
  return o;
}

}  // namespace

TEST_CASE("k-reciprocal sets of five points on a line") {
  const std::vector<double> xs = {0, 1, 2, 10, 11};
  const Array d = line_distances(xs, xs);
  using Sets = std::vector<std::vector<std::size_t>>;
  // k = 1: point 1 is equidistant from 0 and 2 and keeps the lower index.
  CHECK(k_reciprocal_neighbors(d, 1) == Sets{{0, 1}, {0, 1}, {2}, {3, 4}, {3, 4}});
  // k = 2: the far pair reaches point 2, which does not reach back.
  CHECK(k_reciprocal_neighbors(d, 2) == Sets{{0, 1, 2}, {0, 1, 2}, {0, 1, 2}, {3, 4}, {3, 4}});
  CHECK_THROWS(k_reciprocal_neighbors(Array({2, 3}), 1));
}

TEST_CASE("lambda one preserves every query's ordering") {
  testing::for_all(91, 30, [](testing::Rng& rng) {
    const std::size_t nq = testing::pick(rng, 1, 8), ng = testing::pick(rng, 8, 30);
    const auto p = random_points(rng, nq, ng, 4);
    RerankParams params;
    params.k1 = testing::pick(rng, 2, ng - 1);
    params.k2 = testing::pick(rng, 1, params.k1);
    params.lambda = 1.0;
    const Array re = k_reciprocal_rerank(p.q_g, p.q_q, p.g_g, params);
    for (std::size_t q = 0; q < nq; ++q) CHECK(order(re, q) == order(p.q_g, q));
  });
}

TEST_CASE("duplicate gallery entries receive equal distances") {
  testing::Rng rng(92);
  auto p = random_points(rng, 3, 12, 3);
  // Make gallery 7 a copy of gallery 4.
  for (std::size_t q = 0; q < 3; ++q) p.q_g.at(q, 7) = p.q_g.at(q, 4);
  for (std::size_t g = 0; g < 12; ++g) {
    p.g_g.at(7, g) = p.g_g.at(4, g);
    p.g_g.at(g, 7) = p.g_g.at(g, 4);
  }
  p.g_g.at(7, 7) = p.g_g.at(4, 7) = p.g_g.at(7, 4) = 0.0;
  RerankParams params{6, 3, 0.3};
  const Array re = k_reciprocal_rerank(p.q_g, p.q_q, p.g_g, params);
  for (std::size_t q = 0; q < 3; ++q) CHECK(re.at(q, 7) == doctest::Approx(re.at(q, 4)).epsilon(1e-12));
}

TEST_CASE("pure Jaccard distances lie in [0, 1]") {
  testing::Rng rng(93);
  const auto p = random_points(rng, 4, 20, 3);
  const Array re = k_reciprocal_rerank(p.q_g, p.q_q, p.g_g, RerankParams{8, 3, 0.0});
  for (double v : re.values()) {
    CHECK(v >= -1e-12);
    CHECK(v <= 1.0 + 1e-12);
  }
}

TEST_CASE("re-rank parameters are validated") {
  testing::Rng rng(94);
  const auto p = random_points(rng, 2, 6, 2);
  CHECK_THROWS_AS(k_reciprocal_rerank(p.q_g, p.q_q, p.g_g, RerankParams{6, 2, 0.3}), std::invalid_argument);
  CHECK_THROWS_AS(k_reciprocal_rerank(p.q_g, p.q_q, p.g_g, RerankParams{3, 4, 0.3}), std::invalid_argument);
  CHECK_THROWS_AS(k_reciprocal_rerank(p.q_g, p.q_q, p.g_g, RerankParams{3, 2, 1.5}), std::invalid_argument);
  CHECK_THROWS_AS(k_reciprocal_rerank(p.q_g, p.q_q, Array({5, 5}), RerankParams{3, 2, 0.3}),
                  std::invalid_argument);
  CHECK_NOTHROW(k_reciprocal_rerank(p.q_g, p.q_q, p.g_g, RerankParams{5, 1, 0.3}));
}
