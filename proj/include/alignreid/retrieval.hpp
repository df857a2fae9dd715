#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alignreid/array.hpp"

namespace areid {

// Persisted features of a query or gallery set.
struct EmbeddingStore {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> features;        // count x dim, row-major
  std::vector<std::size_t> identities;
  std::vector<std::size_t> cameras;
  std::optional<Array> locals;         // [count, H, c]

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }
  Array local(std::size_t i) const;  // [H, c]
  void validate() const;

  static EmbeddingStore from_arrays(const Array& globals, std::optional<Array> locals,
                                    std::vector<std::size_t> identities,
                                    std::vector<std::size_t> cameras);
};

struct QueryLabel {
  std::size_t identity = 0;
  std::size_t camera = 0;
};

// Market-style protocol: gallery entries with the query's identity and
// camera are dropped from its ranking.
struct Protocol {
  bool exclude_same_camera = true;
  std::string describe() const;
};

struct RankList {
  std::vector<std::size_t> indices;   // gallery indices, ascending distance
  std::vector<double> distances;
};

// Orders `distances` ascending (ties by gallery index), skipping entries the
// protocol excludes. Throws when nothing is admissible.
RankList rank_by_distance(std::span<const double> distances, const QueryLabel& query,
                          const EmbeddingStore& gallery, const Protocol& protocol);

RankList rank_gallery(std::span<const double> query, const QueryLabel& label,
                      const EmbeddingStore& gallery, const Protocol& protocol);

// global_distance + weight * local_distance.
RankList combined_rank(std::span<const double> query, const Array& query_local,
                       const QueryLabel& label, const EmbeddingStore& gallery,
                       double local_weight, const Protocol& protocol);

// [Q, G] global distances.
Array query_gallery_distances(const EmbeddingStore& queries, const EmbeddingStore& gallery);
Array combined_distances(const EmbeddingStore& queries, const EmbeddingStore& gallery,
                         double local_weight);

struct EvalReport {
  double map = 0.0;
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  std::vector<double> cmc;                // cmc[k-1] = CMC@k
  std::vector<double> average_precision;  // per evaluated query
  std::size_t num_queries = 0;            // evaluated
  std::size_t excluded_queries = 0;       // no admissible match
  std::string protocol;

  std::string to_json() const;
};

// AP is non-interpolated over the admissible list; queries without any
// admissible match are excluded and counted.
EvalReport cmc_map(const std::vector<RankList>& ranks, std::span<const QueryLabel> queries,
                   const EmbeddingStore& gallery, const std::string& protocol);

// Ranks every row of a [Q, G] matrix and evaluates.
EvalReport evaluate(const Array& distances, const EmbeddingStore& queries,
                    const EmbeddingStore& gallery, const Protocol& protocol);

struct RerankParams {
  std::size_t k1 = 20;
  std::size_t k2 = 6;
  double lambda = 0.3;

  void validate() const;
};

// k-reciprocal neighbours of every point of a square distance matrix:
// R(p, k) = { g in N(p, k) : p in N(g, k) }, where N(p, k) holds the k + 1
// nearest points including p itself. Ties by index.
std::vector<std::vector<std::size_t>> k_reciprocal_neighbors(const Array& dist, std::size_t k);

// Re-ranked [Q, G] distances from query-gallery, query-query and
// gallery-gallery distances. final = lambda * original + (1 - lambda) * jaccard,
// where original is the squared distance scaled by each row's maximum.
Array k_reciprocal_rerank(const Array& q_g, const Array& q_q, const Array& g_g,
                          const RerankParams& params);

}  // namespace areid
