#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alignreid/tape.hpp"

namespace areid {

// How the local branch turns two stripe sets into one distance.
enum class LocalMetric {
  kAligned,  // normalized part distances, shortest monotone path
  kIndexed,  // raw sum of ||f_i - g_i||, no alignment
};

// Batch distance matrices as graph nodes.
struct BatchDistanceNodes {
  NodeId global;                // [N, N]
  std::optional<NodeId> local;  // [N, N]
};

// globals: [N, C]. locals: [N*H, c] with the H stripes of image n at rows
// n*H .. n*H+H-1.
NodeId global_distance_matrix(Tape& tape, NodeId globals);
NodeId local_distance_matrix(Tape& tape, NodeId locals, std::size_t parts,
                             LocalMetric metric);

// Value-level batch distances.
struct BatchDistances {
  Array global;
  std::optional<Array> local;
  std::vector<std::size_t> labels;
};

// globals [N, C]; locals [N, H, c] when present.
BatchDistances batch_distances(const Array& globals, const std::optional<Array>& locals,
                               std::vector<std::size_t> labels,
                               LocalMetric metric = LocalMetric::kAligned);

struct TripletSelection {
  std::vector<std::size_t> positive;  // per anchor
  std::vector<std::size_t> negative;
};

// Hardest positive (largest distance, same identity) and hardest negative
// (smallest distance, other identity) per anchor on the global matrix.
// Ties go to the lowest index.
TripletSelection mine_hard_triplets(const Array& global, std::span<const std::size_t> labels);

// mean over anchors of [margin + d(a, p) - d(a, n)]_+ on `matrix`.
NodeId trihard_term(Tape& tape, NodeId matrix, const TripletSelection& selection,
                    double margin);

struct TriHardNodes {
  NodeId global;
  std::optional<NodeId> local;
};

TriHardNodes trihard_loss(Tape& tape, const BatchDistanceNodes& dists,
                          const TripletSelection& selection, double global_margin,
                          double local_margin);

// (1/N^2) sum([sg(M1) - M2]^2 + [M1 - sg(M2)]^2).
NodeId metric_mutual_loss(Tape& tape, NodeId m1, NodeId m2);
// Same loss with the operands under sg() given separately, so the differentiable
// and the frozen occurrence of each matrix can be perturbed independently.
NodeId metric_mutual_loss(Tape& tape, NodeId m1, NodeId m2, NodeId m1_frozen,
                          NodeId m2_frozen);

// KL(p1 || sg(p2)) + KL(p2 || sg(p1)), each averaged over rows. Both inputs
// must hold row distributions.
NodeId classification_mutual_loss(Tape& tape, NodeId p1, NodeId p2);

// Throws unless every row of `p` sums to 1 within 1e-9 with entries >= 0.
void validate_distributions(const Array& p, const char* what);

struct LossWeights {
  double metric_global = 1.0;
  double metric_local = 1.0;
  double cls = 1.0;
  double metric_mutual = 0.001;
  double cls_mutual = 0.01;

  void validate() const;
};

// Graph nodes of each component; absent components do not exist in the
// current training mode.
struct LossTerms {
  std::optional<NodeId> metric_global;
  std::optional<NodeId> metric_local;
  std::optional<NodeId> cls;
  std::optional<NodeId> metric_mutual;
  std::optional<NodeId> cls_mutual;
};

struct LossBundle {
  std::optional<double> metric_global;
  std::optional<double> metric_local;
  std::optional<double> cls;
  std::optional<double> metric_mutual;
  std::optional<double> cls_mutual;
  double total = 0.0;
  LossWeights weights;

  bool all_finite() const;
  // "step,metric_global,metric_local,cls,mm,cmm,total"; absent fields empty.
  static std::string csv_header();
  std::string csv_row(std::size_t step) const;
};

struct TotalLoss {
  NodeId total;
  LossBundle bundle;
};

TotalLoss total_loss(Tape& tape, const LossTerms& terms, const LossWeights& weights);

}  // namespace areid
