#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "alignreid/data.hpp"
#include "alignreid/model.hpp"
#include "alignreid/retrieval.hpp"
#include "alignreid/trainer.hpp"

namespace areid {

// Trains each variant with identical data, seeds and schedule, then ranks
// the test split by global distance only.
struct AblationConfig {
  SyntheticConfig data;
  ModelConfig model;
  TrainConfig train;
  std::vector<Variant> variants = {Variant::kBaseline, Variant::kGlBaseline, Variant::kAligned};
  Protocol protocol;
};

struct AblationRow {
  Variant variant = Variant::kBaseline;
  EvalReport report;
  EpochSummary last_epoch;
  double seconds = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;

  const AblationRow& row(Variant v) const;
  std::string table() const;  // Markdown
  std::string to_json() const;
};

// Global-feature evaluation of a trained model on query/gallery splits.
EvalReport evaluate_global(const Model& model, const SplitData& queries, const SplitData& gallery,
                           const Protocol& protocol);

AblationResult run_ablation(const AblationConfig& config, std::ostream* progress = nullptr);

}  // namespace areid
