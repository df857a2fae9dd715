#pragma once

// Random query/gallery instances and the comparison against the brute-force
// evaluation, shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <random>

#include "alignreid/retrieval.hpp"
#include "oracles.hpp"

namespace retrieval_cases {

using areid::Array;
using areid::EmbeddingStore;

struct Instance {
  Array distances;  // [Q, G]
  EmbeddingStore queries;
  EmbeddingStore gallery;
};

// `identities` people over `cameras` cameras; distances are drawn from a
// small set of levels when `ties` so equal distances are common.
inline Instance random_instance(std::mt19937_64& rng, std::size_t q, std::size_t g,
                                std::size_t identities, std::size_t cameras, bool ties) {
  std::uniform_int_distribution<std::size_t> id(0, identities - 1), cam(0, cameras - 1);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  std::uniform_int_distribution<int> level(0, 7);
  Instance in;
  in.distances = Array({q, g});
  for (auto& v : in.distances.values()) v = ties ? level(rng) * 0.5 : u(rng);
  auto store = [&](std::size_t n) {
    EmbeddingStore s;
    s.count = n;
    s.dim = 1;
    s.features.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      s.identities.push_back(id(rng));
      s.cameras.push_back(cam(rng));
    }
    return s;
  };
  in.queries = store(q);
  in.gallery = store(g);
  return in;
}

struct Comparison {
  double max_error = 0.0;  // over mAP, per-query AP and every CMC entry
  bool counts_match = true;
};

inline Comparison compare_with_brute(const Instance& in, const areid::Protocol& protocol) {
  const std::size_t q = in.queries.count, g = in.gallery.count;
  std::vector<std::vector<bool>> admissible(q, std::vector<bool>(g, true));
  if (protocol.exclude_same_camera) {
    for (std::size_t a = 0; a < q; ++a)
      for (std::size_t b = 0; b < g; ++b)
        admissible[a][b] = !(in.gallery.identities[b] == in.queries.identities[a] &&
                             in.gallery.cameras[b] == in.queries.cameras[a]);
  }
  const auto brute = oracle::brute_cmc_map(in.distances, in.queries.identities,
                                           in.gallery.identities, admissible);
  const auto rep = areid::evaluate(in.distances, in.queries, in.gallery, protocol);

  Comparison c;
  c.counts_match = rep.num_queries == brute.evaluated &&
                   rep.average_precision.size() == brute.ap.size() &&
                   rep.num_queries + rep.excluded_queries == q;
  if (!c.counts_match) return c;
  c.max_error = std::abs(rep.map - brute.map);
  for (std::size_t i = 0; i < brute.ap.size(); ++i)
    c.max_error = std::max(c.max_error, std::abs(rep.average_precision[i] - brute.ap[i]));
  for (std::size_t k = 0; k < g; ++k) {
    // The report's curve stops at the longest admissible list; it is flat after.
    const double mine = rep.cmc.empty() ? 0.0 : rep.cmc[std::min(k, rep.cmc.size() - 1)];
    c.max_error = std::max(c.max_error, std::abs(mine - brute.cmc[k]));
  }
  return c;
}

// One true match per query, placed anywhere in the gallery.
inline Instance single_gt_instance(std::mt19937_64& rng, std::size_t q, std::size_t g) {
  Instance in;
  in.distances = Array({q, g});
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (auto& v : in.distances.values()) v = u(rng);
  in.gallery.count = g;
  in.gallery.dim = 1;
  in.gallery.features.assign(g, 0.0);
  for (std::size_t b = 0; b < g; ++b) {
    in.gallery.identities.push_back(b);
    in.gallery.cameras.push_back(1);
  }
  in.queries.count = q;
  in.queries.dim = 1;
  in.queries.features.assign(q, 0.0);
  std::uniform_int_distribution<std::size_t> pick(0, g - 1);
  for (std::size_t a = 0; a < q; ++a) {
    in.queries.identities.push_back(pick(rng));
    in.queries.cameras.push_back(0);
  }
  return in;
}

}  // namespace retrieval_cases
