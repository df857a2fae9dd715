#include "alignreid/ablation.hpp"

#include <chrono>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace areid {

namespace {

Array network_input(const Array& pixels) {
  Array x = pixels;
  for (auto& v : x.values()) v = input_scale(v);
  return x;
}

EmbeddingStore global_store(const Model& model, const SplitData& split) {
  const auto e = embed(model, network_input(split.images), false);
  return EmbeddingStore::from_arrays(e.global, std::nullopt, split.identities, split.cameras);
}

}  // namespace

const AblationRow& AblationResult::row(Variant v) const {
  for (const auto& r : rows)
    if (r.variant == v) return r;
  throw std::out_of_range(std::string("ablation has no row for ") + variant_name(v));
}

std::string AblationResult::table() const {
  std::string out = "| variant | mAP | r=1 | r=5 | r=10 | seconds |\n|---|---|---|---|---|---|\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "| %s | %.1f | %.1f | %.1f | %.1f | %.0f |\n",
                  variant_name(r.variant), 100 * r.report.map, 100 * r.report.r1,
                  100 * r.report.r5, 100 * r.report.r10, r.seconds);
    out += line;
  }
  return out;
}

std::string AblationResult::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    j.push_back({{"variant", variant_name(r.variant)},
                 {"map", r.report.map},
                 {"r1", r.report.r1},
                 {"r5", r.report.r5},
                 {"r10", r.report.r10},
                 {"num_queries", r.report.num_queries},
                 {"final_loss", r.last_epoch.mean.total},
                 {"seconds", r.seconds}});
  }
  return j.dump(1);
}

EvalReport evaluate_global(const Model& model, const SplitData& queries, const SplitData& gallery,
                           const Protocol& protocol) {
  const auto q = global_store(model, queries);
  const auto g = global_store(model, gallery);
  return evaluate(query_gallery_distances(q, g), q, g, protocol);
}

AblationResult run_ablation(const AblationConfig& config, std::ostream* progress) {
  const auto dataset = generate_synthetic(config.data);
  const auto train = split_from_memory(dataset, Split::kTrain);
  const auto queries = split_from_memory(dataset, Split::kQuery);
  const auto gallery = split_from_memory(dataset, Split::kGallery);
  const TrainingData data{train.images, train.identities};

  AblationResult result;
  for (Variant v : config.variants) {
    TrainConfig tc = config.train;
    tc.variant = v;
    TrainOptions options;
    if (progress) {
      options.on_epoch = [progress, v](const EpochSummary& s, const Model&) {
        *progress << variant_name(v) << " epoch " << s.epoch + 1 << " loss " << s.mean.total
                  << '\n';
      };
    }
    const auto start = std::chrono::steady_clock::now();
    const auto trained = train_single(data, config.model, tc, options);
    AblationRow row;
    row.variant = v;
    row.report = evaluate_global(trained.model, queries, gallery, config.protocol);
    row.last_epoch = trained.epochs.back();
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (progress) {
      *progress << variant_name(v) << " rank-1 " << row.report.r1 << " mAP " << row.report.map
                << '\n';
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace areid
