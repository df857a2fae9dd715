#include "alignreid/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "alignreid/aligned.hpp"
#include "alignreid/kernels/kernels.hpp"
#include "alignreid/tape.hpp"

namespace areid {

Array EmbeddingStore::local(std::size_t i) const {
  if (!locals) throw std::invalid_argument("embedding store has no local features");
  const std::size_t h = locals->dim(1), c = locals->dim(2);
  const auto v = locals->values().subspan(i * h * c, h * c);
  return Array({h, c}, std::vector<double>(v.begin(), v.end()));
}

void EmbeddingStore::validate() const {
  if (features.size() != count * dim) {
    throw std::invalid_argument("embedding store: " + std::to_string(features.size()) +
                                " values for " + std::to_string(count) + " x " +
                                std::to_string(dim));
  }
  if (identities.size() != count || cameras.size() != count) {
    throw std::invalid_argument("embedding store: label count does not match row count");
  }
  if (locals && (locals->rank() != 3 || locals->dim(0) != count)) {
    throw std::invalid_argument("embedding store: locals must be [count, H, c], got " +
                                shape_str(locals->shape()));
  }
}

EmbeddingStore EmbeddingStore::from_arrays(const Array& globals, std::optional<Array> locals,
                                           std::vector<std::size_t> identities,
                                           std::vector<std::size_t> cameras) {
  if (globals.rank() != 2) {
    throw std::invalid_argument("embedding store: globals must be [N, C], got " +
                                shape_str(globals.shape()));
  }
  EmbeddingStore s;
  s.count = globals.dim(0);
  s.dim = globals.dim(1);
  s.features = globals.raw();
  s.identities = std::move(identities);
  s.cameras = std::move(cameras);
  s.locals = std::move(locals);
  s.validate();
  return s;
}

std::string Protocol::describe() const {
  return exclude_same_camera ? "exclude-same-id-same-camera" : "all-gallery";
}

RankList rank_by_distance(std::span<const double> distances, const QueryLabel& query,
                          const EmbeddingStore& gallery, const Protocol& protocol) {
  if (distances.size() != gallery.count) {
    throw std::invalid_argument("rank: " + std::to_string(distances.size()) +
                                " distances for a gallery of " + std::to_string(gallery.count));
  }
  RankList r;
  for (std::size_t g = 0; g < gallery.count; ++g) {
    if (protocol.exclude_same_camera && gallery.identities[g] == query.identity &&
        gallery.cameras[g] == query.camera) {
      continue;
    }
    r.indices.push_back(g);
  }
  if (r.indices.empty()) throw std::invalid_argument("rank: no admissible gallery entry");
  std::stable_sort(r.indices.begin(), r.indices.end(),
                   [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });
  r.distances.reserve(r.indices.size());
  for (auto g : r.indices) r.distances.push_back(distances[g]);
  return r;
}

RankList rank_gallery(std::span<const double> query, const QueryLabel& label,
                      const EmbeddingStore& gallery, const Protocol& protocol) {
  if (query.size() != gallery.dim) {
    throw std::invalid_argument("rank_gallery: query dimension " + std::to_string(query.size()) +
                                " vs gallery " + std::to_string(gallery.dim));
  }
  std::vector<double> d(gallery.count);
  kernels::omp::pairwise_distance(query, 1, gallery.features, gallery.count, gallery.dim,
                                  kNormEpsilon, d);
  return rank_by_distance(d, label, gallery, protocol);
}

RankList combined_rank(std::span<const double> query, const Array& query_local,
                       const QueryLabel& label, const EmbeddingStore& gallery,
                       double local_weight, const Protocol& protocol) {
  if (!gallery.locals) throw std::invalid_argument("combined_rank: gallery has no local features");
  std::vector<double> d(gallery.count);
  for (std::size_t g = 0; g < gallery.count; ++g) {
    d[g] = aligned::global_distance(query, gallery.row(g)) +
           local_weight * aligned::local_distance(query_local, gallery.local(g));
  }
  return rank_by_distance(d, label, gallery, protocol);
}

Array query_gallery_distances(const EmbeddingStore& queries, const EmbeddingStore& gallery) {
  if (queries.dim != gallery.dim) {
    throw std::invalid_argument("distances: query dimension " + std::to_string(queries.dim) +
                                " vs gallery " + std::to_string(gallery.dim));
  }
  Array d({queries.count, gallery.count});
  kernels::omp::pairwise_distance(queries.features, queries.count, gallery.features,
                                  gallery.count, gallery.dim, kNormEpsilon, d.values());
  return d;
}

Array combined_distances(const EmbeddingStore& queries, const EmbeddingStore& gallery,
                         double local_weight) {
  if (!queries.locals || !gallery.locals) {
    throw std::invalid_argument("combined distance needs local features on both sides");
  }
  Array d = query_gallery_distances(queries, gallery);
  if (local_weight == 0.0) return d;
  const auto q_count = static_cast<std::ptrdiff_t>(queries.count);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t q = 0; q < q_count; ++q) {
    const Array ql = queries.local(static_cast<std::size_t>(q));
    for (std::size_t g = 0; g < gallery.count; ++g) {
      d.at(static_cast<std::size_t>(q), g) +=
          local_weight * aligned::local_distance(ql, gallery.local(g));
    }
  }
  return d;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["map"] = map;
  j["cmc"] = {{"r1", r1}, {"r5", r5}, {"r10", r10}};
  j["num_queries"] = num_queries;
  j["excluded_queries"] = excluded_queries;
  j["protocol"] = protocol;
  return j.dump(2);
}

EvalReport cmc_map(const std::vector<RankList>& ranks, std::span<const QueryLabel> queries,
                   const EmbeddingStore& gallery, const std::string& protocol) {
  if (ranks.size() != queries.size()) {
    throw std::invalid_argument("cmc_map: rank lists and queries differ in count");
  }
  EvalReport rep;
  rep.protocol = protocol;
  std::size_t longest = 0;
  for (const auto& r : ranks) longest = std::max(longest, r.indices.size());
  std::vector<std::size_t> first_hit_counts(longest, 0);

  for (std::size_t q = 0; q < ranks.size(); ++q) {
    const auto& idx = ranks[q].indices;
    std::size_t hits = 0;
    double precision_sum = 0.0;
    std::size_t first = idx.size();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (gallery.identities[idx[k]] != queries[q].identity) continue;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(k + 1);
      if (first == idx.size()) first = k;
    }
    if (hits == 0) {
      ++rep.excluded_queries;
      continue;
    }
    rep.average_precision.push_back(precision_sum / static_cast<double>(hits));
    ++first_hit_counts[first];
  }
  rep.num_queries = rep.average_precision.size();
  if (rep.num_queries == 0) return rep;

  const double n = static_cast<double>(rep.num_queries);
  rep.map = std::accumulate(rep.average_precision.begin(), rep.average_precision.end(), 0.0) / n;
  std::size_t running = 0;
  rep.cmc.resize(longest);
  for (std::size_t k = 0; k < longest; ++k) {
    running += first_hit_counts[k];
    rep.cmc[k] = static_cast<double>(running) / n;
  }
  auto at = [&](std::size_t k) { return rep.cmc.empty() ? 0.0 : rep.cmc[std::min(k, longest) - 1]; };
  rep.r1 = at(1);
  rep.r5 = at(5);
  rep.r10 = at(10);
  return rep;
}

EvalReport evaluate(const Array& distances, const EmbeddingStore& queries,
                    const EmbeddingStore& gallery, const Protocol& protocol) {
  if (distances.rank() != 2 || distances.dim(0) != queries.count ||
      distances.dim(1) != gallery.count) {
    throw std::invalid_argument("evaluate: distance matrix " + shape_str(distances.shape()) +
                                " does not match the stores");
  }
  std::vector<RankList> ranks;
  std::vector<QueryLabel> labels;
  for (std::size_t q = 0; q < queries.count; ++q) {
    labels.push_back({queries.identities[q], queries.cameras[q]});
    ranks.push_back(rank_by_distance(distances.values().subspan(q * gallery.count, gallery.count),
                                     labels.back(), gallery, protocol));
  }
  return cmc_map(ranks, labels, gallery, protocol.describe());
}

void RerankParams::validate() const {
  if (k2 < 1 || k1 < k2) throw std::invalid_argument("re-rank: need k1 >= k2 >= 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("re-rank: lambda must be in [0, 1]");
}

namespace {

// Row-wise ascending order, ties by index.
std::vector<std::vector<std::size_t>> initial_rank(const Array& dist) {
  const std::size_t n = dist.dim(0), m = dist.dim(1);
  std::vector<std::vector<std::size_t>> out(n, std::vector<std::size_t>(m));
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = out[i];
    std::iota(r.begin(), r.end(), std::size_t{0});
    std::stable_sort(r.begin(), r.end(),
                     [&](std::size_t a, std::size_t b) { return dist.at(i, a) < dist.at(i, b); });
  }
  return out;
}

std::vector<std::size_t> reciprocal(const std::vector<std::vector<std::size_t>>& rank,
                                    std::size_t p, std::size_t k) {
  const std::size_t width = std::min(k + 1, rank[p].size());
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < width; ++a) {
    const std::size_t g = rank[p][a];
    const auto& back = rank[g];
    if (std::find(back.begin(), back.begin() + static_cast<std::ptrdiff_t>(width), p) !=
        back.begin() + static_cast<std::ptrdiff_t>(width)) {
      out.push_back(g);
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<std::size_t>> k_reciprocal_neighbors(const Array& dist, std::size_t k) {
  if (dist.rank() != 2 || dist.dim(0) != dist.dim(1)) {
    throw std::invalid_argument("k_reciprocal_neighbors: expected a square matrix, got " +
                                shape_str(dist.shape()));
  }
  const auto rank = initial_rank(dist);
  std::vector<std::vector<std::size_t>> out(dist.dim(0));
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = reciprocal(rank, p, k);
    std::sort(out[p].begin(), out[p].end());
  }
  return out;
}

Array k_reciprocal_rerank(const Array& q_g, const Array& q_q, const Array& g_g,
                          const RerankParams& params) {
  params.validate();
  const std::size_t nq = q_g.dim(0), ng = q_g.dim(1), n = nq + ng;
  if (q_q.shape() != Shape{nq, nq} || g_g.shape() != Shape{ng, ng}) {
    throw std::invalid_argument("re-rank: inconsistent matrices " + shape_str(q_g.shape()) +
                                ", " + shape_str(q_q.shape()) + ", " + shape_str(g_g.shape()));
  }
  if (params.k1 >= ng) {
    throw std::invalid_argument("re-rank: k1=" + std::to_string(params.k1) +
                                " must be smaller than the gallery size " + std::to_string(ng));
  }

  // Squared distances over all query and gallery points, each row scaled by
  // its maximum.
  Array orig({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double d;
      if (i < nq && j < nq) {
        d = q_q.at(i, j);
      } else if (i < nq) {
        d = q_g.at(i, j - nq);
      } else if (j < nq) {
        d = q_g.at(j, i - nq);
      } else {
        d = g_g.at(i - nq, j - nq);
      }
      orig.at(i, j) = d * d;
    }
  for (std::size_t i = 0; i < n; ++i) {
    double mx = 0.0;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, orig.at(i, j));
    if (mx > 0.0)
      for (std::size_t j = 0; j < n; ++j) orig.at(i, j) /= mx;
  }

  const auto rank = initial_rank(orig);
  const std::size_t half = static_cast<std::size_t>(std::lround(params.k1 / 2.0));
  Array v({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    const auto base = reciprocal(rank, i, params.k1);
    std::vector<std::size_t> expanded = base;
    for (std::size_t c : base) {
      const auto cand = reciprocal(rank, c, half);
      std::size_t common = 0;
      for (auto x : cand) common += std::count(base.begin(), base.end(), x) ? 1 : 0;
      if (static_cast<double>(common) > 2.0 / 3.0 * static_cast<double>(cand.size())) {
        expanded.insert(expanded.end(), cand.begin(), cand.end());
      }
    }
    std::sort(expanded.begin(), expanded.end());
    expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());
    double total = 0.0;
    for (auto j : expanded) total += std::exp(-orig.at(i, j));
    for (auto j : expanded) v.at(i, j) = std::exp(-orig.at(i, j)) / total;
  }

  if (params.k2 != 1) {
    Array qe({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < params.k2; ++a) {
        const std::size_t r = rank[i][a];
        for (std::size_t j = 0; j < n; ++j) qe.at(i, j) += v.at(r, j);
      }
      for (std::size_t j = 0; j < n; ++j) qe.at(i, j) /= static_cast<double>(params.k2);
    }
    v = std::move(qe);
  }

  // Column-wise nonzero lists make the Jaccard sums sparse.
  std::vector<std::vector<std::size_t>> inv(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (v.at(i, j) != 0.0) inv[j].push_back(i);

  Array out({nq, ng});
  std::vector<double> mins(n);
  for (std::size_t q = 0; q < nq; ++q) {
    std::fill(mins.begin(), mins.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double vq = v.at(q, j);
      if (vq == 0.0) continue;
      for (auto r : inv[j]) mins[r] += std::min(vq, v.at(r, j));
    }
    for (std::size_t g = 0; g < ng; ++g) {
      const double jac = 1.0 - mins[nq + g] / (2.0 - mins[nq + g]);
      out.at(q, g) = params.lambda * orig.at(q, nq + g) + (1.0 - params.lambda) * jac;
    }
  }
  return out;
}

}  // namespace areid
