// Acceptance run: one PASS/FAIL line per criterion. Names given on the
// command line restrict the run to those criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "alignreid/ablation.hpp"
#include "alignreid/aligned.hpp"
#include "alignreid/data.hpp"
#include "alignreid/gradcheck.hpp"
#include "alignreid/retrieval.hpp"
#include "alignreid/trainer.hpp"
#include "gradient_cases.hpp"
#include "humaneval_props.hpp"
#include "mutual_checks.hpp"
#include "oracles.hpp"
#include "retrieval_cases.hpp"

using namespace areid;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

double wall_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

Array uniform(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Array a(std::move(shape));
  for (auto& v : a.values()) v = u(rng);
  return a;
}

// ---------------------------------------------------------------------------

Outcome dp_oracle() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<std::size_t> size(1, 6);
  const double start = wall_seconds();
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const std::size_t h = size(rng);
    const Array d = uniform(rng, {h, h}, 0.0, 1.0);
    worst = std::max(worst, std::abs(aligned::shortest_path(d).value - oracle::min_monotone_path(d)));
  }
  const double took = wall_seconds() - start;
  return {worst <= 1e-12 && took < 10.0, fmt("max error %.3g over 1000 matrices in %.2f s", worst, took)};
}

Outcome distance_bounds() {
  std::mt19937_64 rng(1002);
  std::uniform_int_distribution<std::size_t> dim(1, 16);
  std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
  const double scales[] = {0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  std::size_t out_of_range = 0, self_fail = 0, non_monotone = 0;
  double lo = 1.0, hi = 0.0;
  auto d = [](const Array& f, const Array& g) { return aligned::part_distance_matrix(f, g)[0]; };
  for (int n = 0; n < 10000; ++n) {
    const std::size_t c = dim(rng);
    const double s = std::pow(10.0, log_scale(rng));
    const Array f = uniform(rng, {1, c}, -s, s), g = uniform(rng, {1, c}, -s, s);
    const double v = d(f, g);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    if (!(v >= 0.0 && v < 1.0)) ++out_of_range;
    if (d(f, f) > 1e-6) ++self_fail;
    double prev = -1.0;
    for (double k : scales) {
      Array fk = f, gk = g;
      for (auto& x : fk.values()) x *= k;
      for (auto& x : gk.values()) x *= k;
      const double dk = d(fk, gk);
      if (dk < prev) ++non_monotone;
      prev = dk;
    }
  }
  return {out_of_range == 0 && self_fail == 0 && non_monotone == 0,
          fmt("range [%.3g, %.17g], %zu outside [0,1), %zu self > 1e-6, %zu scale inversions", lo,
              hi, out_of_range, self_fail, non_monotone)};
}

Outcome gradient_suite() {
  auto all = cases::primitive_cases(1);
  for (auto& c : cases::composite_cases(4)) all.push_back(std::move(c));
  double worst = 0.0;
  std::string worst_name;
  std::size_t failed = 0;
  for (const auto& c : all) {
    const auto r = grad_check(c.build, c.x0);
    if (r.max_relative_error >= 1e-4) ++failed;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = c.name;
    }
  }
  return {failed == 0, fmt("%zu checks, worst %.3g (%s), %zu over 1e-4", all.size(), worst,
                           worst_name.c_str(), failed)};
}

Outcome mutual_semantics() {
  std::mt19937_64 rng(1004);
  std::uniform_int_distribution<std::size_t> size(2, 12);
  double closed = 0.0;
  for (int n = 0; n < 100; ++n) {
    const std::size_t k = size(rng);
    closed = std::max(closed, mutual::closed_form_error(mutual::distance_like(rng, k),
                                                        mutual::distance_like(rng, k)));
  }
  double live = 0.0, frozen = 0.0;
  for (int n = 0; n < 3; ++n) {
    const auto m = mutual::mixed_second_derivative(mutual::distance_like(rng, 5),
                                                   mutual::distance_like(rng, 5));
    live = std::max(live, m.live);
    frozen = std::max(frozen, m.frozen);
  }
  return {closed <= 1e-10 && live <= 1e-8,
          fmt("closed-form error %.3g, mixed derivative %.3g (through the frozen copy %.4g)", closed,
              live, frozen)};
}

Outcome ablation() {
  const AblationConfig config;  // default synthetic data, seed 7
  const double start = cpu_seconds();
  const auto result = run_ablation(config);
  const double took = cpu_seconds() - start;
  std::cerr << result.table();
  const double base = result.row(Variant::kBaseline).report.r1;
  const double gl = result.row(Variant::kGlBaseline).report.r1;
  const double al = result.row(Variant::kAligned).report.r1;
  return {al >= base + 0.03 && al >= gl && took < 900.0,
          fmt("rank-1 baseline %.1f, gl-baseline %.1f, aligned %.1f (%+.1f over baseline); %.0f CPU-s",
              100 * base, 100 * gl, 100 * al, 100 * (al - base), took)};
}

// Mean color of each horizontal stripe over the body columns.
Array stripe_features(const Image& im, std::size_t stripes) {
  const std::size_t rows = im.height / stripes, x0 = im.width / 4, x1 = 3 * im.width / 4;
  Array f({stripes, im.channels});
  for (std::size_t k = 0; k < stripes; ++k)
    for (std::size_t c = 0; c < im.channels; ++c) {
      double acc = 0.0;
      for (std::size_t y = k * rows; y < (k + 1) * rows; ++y)
        for (std::size_t x = x0; x < x1; ++x) acc += im.at(c, y, x);
      f.at(k, c) = acc / static_cast<double>(rows * (x1 - x0));
    }
  return f;
}

Outcome alignment_recovery() {
  const SyntheticConfig config;
  const std::size_t stripes = ModelConfig{}.rows();
  const int stripe_rows = static_cast<int>(config.image_size / stripes);
  std::mt19937_64 rng(1006);
  std::uniform_int_distribution<int> base(-static_cast<int>(config.max_shift), 0);
  std::size_t ok = 0, total = 0;
  for (int s : {1, 2}) {
    for (int n = 0; n < 100; ++n) {
      const auto sig = make_signatures(config, 1, rng).front();
      Perturbation p = sample_perturbation(config, rng);
      p.occlude_top = p.occlude_bottom = 0;
      p.shift = base(rng);
      Perturbation q = p;
      q.shift += s * stripe_rows;
      const Image a = render_person(config, sig, p, rng), b = render_person(config, sig, q, rng);
      const auto sp = aligned::shortest_path(
          aligned::part_distance_matrix(stripe_features(a, stripes), stripe_features(b, stripes)));
      std::vector<int> offsets;
      for (const auto& st : sp.path.steps) offsets.push_back(static_cast<int>(st.j) - static_cast<int>(st.i));
      std::nth_element(offsets.begin(), offsets.begin() + offsets.size() / 2, offsets.end());
      ok += std::abs(offsets[offsets.size() / 2] - s) <= 1;
      ++total;
    }
  }
  const double frac = static_cast<double>(ok) / static_cast<double>(total);
  return {frac >= 0.8, fmt("%zu of %zu pairs within one stripe of the injected shift (%.0f%%)", ok,
                           total, 100 * frac)};
}

Outcome mutual_effect() {
  const SyntheticConfig data_config;
  const auto dataset = generate_synthetic(data_config);
  const auto train = split_from_memory(dataset, Split::kTrain);
  const auto queries = split_from_memory(dataset, Split::kQuery);
  const auto gallery = split_from_memory(dataset, Split::kGallery);
  const TrainingData data{train.images, train.identities};
  std::vector<std::size_t> all(gallery.identities.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Array gallery_input = make_batch_images(gallery.images, all, nullptr);

  TrainConfig config;
  config.epochs = 20;
  config.batch.batches_per_epoch = 100;
  config.schedule = {{8, 16}, {3e-4, 1e-4, 1e-5}};

  struct Run {
    double r1 = 0.0, gap = 0.0;
  };
  auto run = [&](double metric_mutual) {
    TrainConfig c = config;
    c.weights.metric_mutual = metric_mutual;
    const auto pair = train_mutual(data, ModelConfig{}, c);
    Run r;
    r.r1 = 0.5 * (evaluate_global(pair.first, queries, gallery, Protocol{}).r1 +
                  evaluate_global(pair.second, queries, gallery, Protocol{}).r1);
    r.gap = distance_matrix_gap(pair.first, pair.second, gallery_input);
    return r;
  };
  const Run on = run(LossWeights{}.metric_mutual), off = run(0.0);
  return {on.r1 >= off.r1 - 0.005 && on.gap < off.gap,
          fmt("mean rank-1 on %.1f off %.1f; gap on %.5f off %.5f", 100 * on.r1, 100 * off.r1,
              on.gap, off.gap)};
}

Outcome retrieval_oracle() {
  std::mt19937_64 rng(1008);
  double worst = 0.0;
  bool counts = true;
  for (int n = 0; n < 100; ++n) {
    const auto in = retrieval_cases::random_instance(rng, 20, 50, 8, 3, n % 2 == 0);
    for (bool exclude : {true, false}) {
      const auto c = retrieval_cases::compare_with_brute(in, Protocol{exclude});
      counts = counts && c.counts_match;
      worst = std::max(worst, c.max_error);
    }
  }
  std::size_t below = 0;
  for (int n = 0; n < 100; ++n) {
    const auto in = retrieval_cases::single_gt_instance(rng, 20, 50);
    const auto rep = evaluate(in.distances, in.queries, in.gallery, Protocol{});
    below += rep.map < rep.r1;
  }
  return {counts && worst <= 1e-12 && below == 0,
          fmt("max error %.3g over 100 instances; %zu single-GT galleries with mAP < CMC@1", worst,
              below)};
}

Outcome rerank_degeneracy() {
  std::mt19937_64 rng(1009);
  std::uniform_int_distribution<std::size_t> nq(1, 10), ng(10, 50);
  auto dist = [](const Array& a, const Array& b) {
    Array d({a.dim(0), b.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
      for (std::size_t j = 0; j < b.dim(0); ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < a.dim(1); ++c) acc += std::pow(a.at(i, c) - b.at(j, c), 2);
        d.at(i, j) = std::sqrt(acc);
      }
    return d;
  };
  auto order = [](const Array& d, std::size_t row) {
    std::vector<std::size_t> o(d.dim(1));
    std::iota(o.begin(), o.end(), std::size_t{0});
    std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) { return d.at(row, a) < d.at(row, b); });
    return o;
  };
  std::size_t changed = 0, queries = 0;
  for (int n = 0; n < 100; ++n) {
    const Array q = uniform(rng, {nq(rng), 4}, -1, 1), g = uniform(rng, {ng(rng), 4}, -1, 1);
    const Array qg = dist(q, g);
    RerankParams params;
    params.k1 = std::min<std::size_t>(20, g.dim(0) - 1);
    params.k2 = 6;
    params.lambda = 1.0;
    const Array re = k_reciprocal_rerank(qg, dist(q, q), dist(g, g), params);
    for (std::size_t i = 0; i < q.dim(0); ++i, ++queries) changed += order(re, i) != order(qg, i);
  }
  return {changed == 0, fmt("%zu of %zu query orderings changed", changed, queries)};
}

Outcome humaneval_properties() {
  std::mt19937_64 rng(1010);
  std::size_t single_bad = 0, multi_bad = 0;
  std::string first;
  for (int n = 0; n < 1000; ++n) {
    const auto s = humaneval_props::check_single(humaneval_props::random_case(rng, 10, 1));
    const auto m = humaneval_props::check_multi(humaneval_props::random_case(rng, 50, 12));
    single_bad += !s.empty();
    multi_bad += !m.empty();
    if (first.empty()) first = !s.empty() ? s : m;
  }
  return {single_bad == 0 && multi_bad == 0,
          fmt("1000 rank lists each: %zu single-GT and %zu multi-GT violations%s%s", single_bad,
              multi_bad, first.empty() ? "" : "; first: ", first.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"dp-oracle", dp_oracle},
      {"distance-bounds", distance_bounds},
      {"gradient-suite", gradient_suite},
      {"mutual-semantics", mutual_semantics},
      {"ablation", ablation},
      {"alignment-recovery", alignment_recovery},
      {"mutual-effect", mutual_effect},
      {"retrieval-oracle", retrieval_oracle},
      {"rerank-degeneracy", rerank_degeneracy},
      {"humaneval-properties", humaneval_properties},
  };
  const std::vector<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
