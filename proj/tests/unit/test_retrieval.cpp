#include <cmath>
#include <sstream>

#include <doctest.h>

#include "alignreid/aligned.hpp"
#include "alignreid/embedding_io.hpp"
#include "alignreid/retrieval.hpp"
#include "retrieval_cases.hpp"
#include "support.hpp"

using namespace areid;

TEST_CASE("evaluation matches the brute-force reference") {
  testing::for_all(81, 100, [](testing::Rng& rng) {
    const bool ties = testing::pick(rng, 0, 1);
    const auto in = retrieval_cases::random_instance(rng, 20, 50, 8, 3, ties);
    for (bool exclude : {true, false}) {
      const auto c = retrieval_cases::compare_with_brute(in, Protocol{exclude});
      CHECK(c.counts_match);
      CHECK(c.max_error <= 1e-12);
    }
  });
}

TEST_CASE("single ground truth at rank 3 gives AP one third") {
  EmbeddingStore gallery;
  gallery.count = 5;
  gallery.dim = 1;
  gallery.features.assign(5, 0);
  gallery.identities = {10, 11, 7, 12, 13};
  gallery.cameras = {1, 1, 1, 1, 1};
  const std::vector<double> d = {0.1, 0.2, 0.3, 0.4, 0.5};
  const QueryLabel q{7, 0};
  const auto rank = rank_by_distance(d, q, gallery, Protocol{});
  const auto rep = cmc_map({rank}, std::vector<QueryLabel>{q}, gallery, "test");
  CHECK(rep.map == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(rep.r1 == 0.0);
  CHECK(rep.cmc[2] == 1.0);
  CHECK(rep.r5 == 1.0);
}

TEST_CASE("single-ground-truth galleries have mAP at least CMC@1") {
  testing::for_all(82, 100, [](testing::Rng& rng) {
    const auto in = retrieval_cases::single_gt_instance(rng, 20, 50);
    const auto rep = evaluate(in.distances, in.queries, in.gallery, Protocol{});
    CHECK(rep.map >= rep.r1);
    // With one match AP is 1 / rank, so it is exactly the reciprocal rank.
    for (double ap : rep.average_precision) {
      const double rank = 1.0 / ap;
      CHECK(std::abs(rank - std::round(rank)) < 1e-9);
    }
  });
}

TEST_CASE("monotone transforms of the distances leave the report unchanged") {
  testing::for_all(83, 20, [](testing::Rng& rng) {
    auto in = retrieval_cases::random_instance(rng, 10, 30, 5, 2, false);
    const auto before = evaluate(in.distances, in.queries, in.gallery, Protocol{});
    for (auto& v : in.distances.values()) v = 3.0 * std::exp(v) + 1.0;
    const auto after = evaluate(in.distances, in.queries, in.gallery, Protocol{});
    CHECK(before.map == after.map);
    CHECK(before.cmc == after.cmc);
  });
}

TEST_CASE("same identity and camera is excluded; unmatched queries are counted") {
  EmbeddingStore gallery;
  gallery.count = 3;
  gallery.dim = 1;
  gallery.features = {0, 1, 2};
  gallery.identities = {1, 1, 2};
  gallery.cameras = {0, 1, 0};
  EmbeddingStore queries = gallery;
  queries.count = 2;
  queries.features = {0, 5};
  queries.identities = {1, 3};
  queries.cameras = {0, 0};
  const auto d = query_gallery_distances(queries, gallery);
  const auto rep = evaluate(d, queries, gallery, Protocol{});
  CHECK(rep.num_queries == 1);
  CHECK(rep.excluded_queries == 1);
  // Query 0 loses gallery 0; gallery 1 (distance 1) is first.
  CHECK(rep.r1 == 1.0);
  const auto all = evaluate(d, queries, gallery, Protocol{false});
  CHECK(all.protocol == "all-gallery");
  CHECK(rep.protocol == "exclude-same-id-same-camera");
}

TEST_CASE("combined ranking against a direct computation") {
  testing::Rng rng(84);
  const std::size_t g = 12, h = 4, c = 3, dim = 5;
  const Array globals = testing::random_array(rng, {g, dim});
  const Array locals = testing::random_array(rng, {g, h, c});
  std::vector<std::size_t> ids(g), cams(g, 1);
  for (std::size_t i = 0; i < g; ++i) ids[i] = i % 4;
  const auto gallery = EmbeddingStore::from_arrays(globals, locals, ids, cams);
  const Array qg = testing::random_array(rng, {dim});
  const Array ql = testing::random_array(rng, {h, c});
  const QueryLabel label{0, 0};

  const auto plain = rank_gallery(qg.values(), label, gallery, Protocol{});
  CHECK(combined_rank(qg.values(), ql, label, gallery, 0.0, Protocol{}).indices == plain.indices);

  std::vector<double> local(g), both(g);
  for (std::size_t i = 0; i < g; ++i) {
    local[i] = aligned::local_distance(ql, gallery.local(i));
    both[i] = aligned::global_distance(qg.values(), gallery.row(i)) + 0.7 * local[i];
  }
  CHECK(combined_rank(qg.values(), ql, label, gallery, 1e9, Protocol{}).indices ==
        rank_by_distance(local, label, gallery, Protocol{}).indices);
  CHECK(combined_rank(qg.values(), ql, label, gallery, 0.7, Protocol{}).indices ==
        rank_by_distance(both, label, gallery, Protocol{}).indices);

  const auto queries = EmbeddingStore::from_arrays(qg.reshaped({1, dim}), ql.reshaped({1, h, c}),
                                                   {0}, {0});
  const Array cd = combined_distances(queries, gallery, 0.7);
  for (std::size_t i = 0; i < g; ++i) CHECK(cd.at(0, i) == doctest::Approx(both[i]).epsilon(1e-12));
}

TEST_CASE("embedding files round trip at float precision") {
  testing::Rng rng(85);
  const Array globals = testing::random_array(rng, {6, 4});
  const Array locals = testing::random_array(rng, {6, 3, 2});
  const auto store = EmbeddingStore::from_arrays(globals, locals, {1, 2, 3, 4, 5, 70000},
                                                 {0, 1, 2, 3, 4, 5});
  testing::TempDir dir("emb");
  save_embeddings(dir / "q.arid", store);
  CHECK(std::filesystem::exists(local_companion(dir / "q.arid")));
  const auto back = load_embeddings(dir / "q.arid");
  CHECK(back.count == 6);
  CHECK(back.dim == 4);
  CHECK(back.identities == store.identities);
  CHECK(back.cameras == store.cameras);
  for (std::size_t i = 0; i < 24; ++i)
    CHECK(back.features[i] == static_cast<double>(static_cast<float>(store.features[i])));
  REQUIRE(back.locals.has_value());
  CHECK(back.locals->shape() == Shape{6, 3, 2});
  CHECK(back.local(5)[5] == static_cast<double>(static_cast<float>(locals[35])));

  const auto global_only = EmbeddingStore::from_arrays(globals, std::nullopt, store.identities, store.cameras);
  save_embeddings(dir / "g.arid", global_only);
  CHECK_FALSE(std::filesystem::exists(local_companion(dir / "g.arid")));
  CHECK_FALSE(load_embeddings(dir / "g.arid").locals.has_value());

  std::stringstream bad("ARIX");
  CHECK_THROWS(read_embeddings(bad));
  std::stringstream ss;
  write_embeddings(ss, global_only);
  std::string bytes = ss.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS(read_embeddings(truncated));
}

TEST_CASE("report JSON carries the protocol and curve") {
  const auto in = [] {
    testing::Rng rng(86);
    return retrieval_cases::random_instance(rng, 5, 10, 3, 2, false);
  }();
  const auto rep = evaluate(in.distances, in.queries, in.gallery, Protocol{});
  const std::string js = rep.to_json();
  CHECK(js.find("\"map\"") != std::string::npos);
  CHECK(js.find("exclude-same-id-same-camera") != std::string::npos);
}
