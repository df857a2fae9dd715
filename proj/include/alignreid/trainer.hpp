#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "alignreid/adam.hpp"
#include "alignreid/keyvalue.hpp"
#include "alignreid/losses.hpp"
#include "alignreid/model.hpp"

namespace areid {

enum class Variant {
  kBaseline,    // global branch only
  kGlBaseline,  // local branch compared stripe by stripe, no alignment
  kAligned,     // local branch through the shortest-path distance
};

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct PKBatchSpec {
  std::size_t p = 8;
  std::size_t k = 4;
  std::size_t batches_per_epoch = 200;

  std::size_t batch_size() const { return p * k; }
  void validate() const;
};

struct PKBatch {
  std::vector<std::size_t> indices;  // into the training split
  std::vector<std::size_t> labels;   // identity of each entry
};

// Draws P identities without replacement, then K distinct images of each.
// Identities with fewer than K images never appear.
class PKSampler {
 public:
  PKSampler(std::span<const std::size_t> identities, PKBatchSpec spec);

  PKBatch next(std::mt19937_64& rng);
  const std::vector<std::size_t>& excluded_identities() const { return excluded_; }
  std::size_t eligible_identities() const { return ids_.size(); }

 private:
  PKBatchSpec spec_;
  std::vector<std::size_t> ids_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> excluded_;
};

// Piecewise-constant rate: rates[i] applies from milestones[i-1] (epoch 0
// for i = 0) until milestones[i].
struct LrSchedule {
  std::vector<std::size_t> milestones;
  std::vector<double> rates;

  static LrSchedule decay(double initial, std::vector<std::size_t> milestones,
                          double factor = 0.1);
  void validate() const;
};

double lr_schedule(std::size_t epoch, const LrSchedule& schedule);

struct TrainConfig {
  Variant variant = Variant::kAligned;
  double global_margin = 0.5;
  double local_margin = 0.5;
  AdamConfig adam;
  LrSchedule schedule = LrSchedule::decay(1e-3, {16, 32});
  std::size_t epochs = 40;
  PKBatchSpec batch;
  LossWeights weights;
  bool augment = true;
  std::uint64_t data_seed = 1;   // batch stream and augmentation
  std::uint64_t init_seed = 11;  // model initialization
  std::uint64_t partner_seed = 23;  // second model in mutual training

  void validate() const;
  // Keys absent from `kv` keep their value in `defaults`.
  static TrainConfig from_keyvalue(const KeyValueConfig& kv, TrainConfig defaults);
  void to_keyvalue(KeyValueConfig& kv) const;

  // Published optimizer settings (single model, mutual pair).
  static LrSchedule published_single_schedule();
  static LrSchedule published_mutual_schedule();
};

struct TrainingData {
  Array images;  // [N, C, S, S], pixels in [0, 1]
  std::vector<std::size_t> labels;  // contiguous from 0
};

// Everything one model's loss needs from a batch.
struct BatchLoss {
  ModelOutputs outputs;
  BatchDistanceNodes distances;
  TripletSelection selection;
  LossTerms terms;
};

BatchLoss build_batch_loss(Tape& tape, const Model& model, const BoundParams& bound,
                           NodeId images, std::span<const std::size_t> labels,
                           const TrainConfig& config);

// Pixels of the batch entries, augmented when `rng` is given, scaled to the
// network input range.
Array make_batch_images(const Array& images, std::span<const std::size_t> indices,
                        std::mt19937_64* rng);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::size_t epoch, std::size_t step)
      : std::runtime_error(what), epoch(epoch), step(step) {}
  std::size_t epoch;
  std::size_t step;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double rate = 0.0;
  LossBundle mean;  // component means over the epoch's steps
};

struct TrainOptions {
  std::ostream* step_log = nullptr;       // loss CSV, one row per step
  std::filesystem::path checkpoint_dir;   // empty: no files
  std::size_t checkpoint_every = 0;       // epochs; 0 keeps only the final one
  std::function<void(const EpochSummary&, const Model&)> on_epoch;
};

struct SingleResult {
  Model model;
  std::vector<EpochSummary> epochs;
};

SingleResult train_single(const TrainingData& data, const ModelConfig& model_config,
                          const TrainConfig& config, const TrainOptions& options = {});

struct MutualResult {
  Model first;
  Model second;
  std::vector<EpochSummary> first_epochs;
  std::vector<EpochSummary> second_epochs;
};

struct MutualOptions {
  std::ostream* first_log = nullptr;
  std::ostream* second_log = nullptr;
  std::filesystem::path checkpoint_dir;
  std::function<void(std::size_t epoch, const Model&, const Model&)> on_epoch;
};

// Both models see identical batches; each adds the mutual terms against the
// partner's detached outputs and both step every batch.
MutualResult train_mutual(const TrainingData& data, const ModelConfig& model_config,
                          const TrainConfig& config, const MutualOptions& options = {});

// Mutual terms for one model given the partner's detached distance matrix
// and class probabilities.
struct MutualTerms {
  NodeId metric_mutual;
  NodeId cls_mutual;
};
MutualTerms mutual_terms(Tape& tape, const BatchLoss& own, const Array& partner_global,
                         const Array& partner_probs);

// Mean |D1 - D2| over the global distance matrices two models produce for
// the same images.
double distance_matrix_gap(const Model& a, const Model& b, const Array& images);

}  // namespace areid
