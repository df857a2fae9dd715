#include "alignreid/losses.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace areid {

NodeId global_distance_matrix(Tape& tape, NodeId globals) {
  return ops::pairwise_distance(tape, globals, globals);
}

NodeId local_distance_matrix(Tape& tape, NodeId locals, std::size_t parts,
                             LocalMetric metric) {
  const NodeId raw = ops::pairwise_distance(tape, locals, locals);
  if (metric == LocalMetric::kIndexed) return ops::block_diag_sum(tape, raw, parts);
  return ops::block_path_cost(tape, ops::soft_saturate(tape, raw), parts);
}

BatchDistances batch_distances(const Array& globals, const std::optional<Array>& locals,
                               std::vector<std::size_t> labels, LocalMetric metric) {
  if (globals.rank() != 2 || globals.dim(0) < 2) {
    throw std::invalid_argument("batch_distances: need at least 2 global features, got " +
                                shape_str(globals.shape()));
  }
  const std::size_t n = globals.dim(0);
  if (labels.size() != n) {
    throw std::invalid_argument("batch_distances: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " features");
  }
  Tape tape;
  BatchDistances out;
  out.global = tape.value(global_distance_matrix(tape, tape.constant(globals)));
  if (locals) {
    if (locals->rank() != 3 || locals->dim(0) != n) {
      throw std::invalid_argument("batch_distances: locals must be [N, H, c], got " +
                                  shape_str(locals->shape()));
    }
    const std::size_t h = locals->dim(1);
    const NodeId stacked = tape.constant(locals->reshaped({n * h, locals->dim(2)}));
    out.local = tape.value(local_distance_matrix(tape, stacked, h, metric));
  }
  out.labels = std::move(labels);
  return out;
}

TripletSelection mine_hard_triplets(const Array& global, std::span<const std::size_t> labels) {
  const std::size_t n = labels.size();
  if (global.rank() != 2 || global.dim(0) != n || global.dim(1) != n) {
    throw std::invalid_argument("mine_hard_triplets: distance matrix " +
                                shape_str(global.shape()) + " does not match " +
                                std::to_string(n) + " labels");
  }
  std::map<std::size_t, std::size_t> counts;
  for (auto l : labels) ++counts[l];
  if (counts.size() < 2) {
    throw std::invalid_argument("mine_hard_triplets: batch needs at least 2 identities");
  }
  for (const auto& [id, count] : counts) {
    if (count < 2) {
      throw std::invalid_argument("mine_hard_triplets: identity " + std::to_string(id) +
                                  " has a single sample in the batch");
    }
  }

  TripletSelection sel;
  sel.positive.resize(n);
  sel.negative.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t p = n, q = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double d = global.at(a, j);
      if (labels[j] == labels[a]) {
        if (p == n || d > global.at(a, p)) p = j;
      } else if (q == n || d < global.at(a, q)) {
        q = j;
      }
    }
    sel.positive[a] = p;
    sel.negative[a] = q;
  }
  return sel;
}

NodeId trihard_term(Tape& tape, NodeId matrix, const TripletSelection& selection,
                    double margin) {
  if (margin < 0.0) throw std::invalid_argument("trihard: margin must be >= 0");
  const std::size_t n = selection.positive.size();
  std::vector<std::pair<std::size_t, std::size_t>> ap(n), an(n);
  for (std::size_t a = 0; a < n; ++a) {
    ap[a] = {a, selection.positive[a]};
    an[a] = {a, selection.negative[a]};
  }
  const NodeId gap = ops::sub(tape, ops::gather_pairs(tape, matrix, ap),
                              ops::gather_pairs(tape, matrix, an));
  return ops::mean(tape, ops::relu(tape, ops::add_scalar(tape, gap, margin)));
}

TriHardNodes trihard_loss(Tape& tape, const BatchDistanceNodes& dists,
                          const TripletSelection& selection, double global_margin,
                          double local_margin) {
  TriHardNodes out{trihard_term(tape, dists.global, selection, global_margin), std::nullopt};
  if (dists.local) out.local = trihard_term(tape, *dists.local, selection, local_margin);
  return out;
}

NodeId metric_mutual_loss(Tape& tape, NodeId m1, NodeId m2) {
  return metric_mutual_loss(tape, m1, m2, m1, m2);
}

NodeId metric_mutual_loss(Tape& tape, NodeId m1, NodeId m2, NodeId m1_frozen,
                          NodeId m2_frozen) {
  const Shape& s = tape.value(m1).shape();
  for (NodeId other : {m2, m1_frozen, m2_frozen}) {
    if (tape.value(other).shape() != s || s.size() != 2 || s[0] != s[1]) {
      throw ShapeError("metric_mutual_loss: shapes " + shape_str(s) + " and " +
                       shape_str(tape.value(other).shape()) + " must be equal N x N");
    }
  }
  const double n = static_cast<double>(s[0]);
  const NodeId a = ops::square(tape, ops::sub(tape, ops::stop_gradient(tape, m1_frozen), m2));
  const NodeId b = ops::square(tape, ops::sub(tape, m1, ops::stop_gradient(tape, m2_frozen)));
  return ops::scale(tape, ops::sum(tape, ops::add(tape, a, b)), 1.0 / (n * n));
}

void validate_distributions(const Array& p, const char* what) {
  if (p.rank() != 2) {
    throw std::invalid_argument(std::string(what) + ": expected [N, K] rows, got " +
                                shape_str(p.shape()));
  }
  const std::size_t k = p.dim(1);
  for (std::size_t r = 0; r < p.dim(0); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = p.at(r, j);
      if (!(v >= 0.0)) {
        throw std::invalid_argument(std::string(what) + ": row " + std::to_string(r) +
                                    " has a negative or non-finite entry");
      }
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw std::invalid_argument(std::string(what) + ": row " + std::to_string(r) +
                                  " sums to " + std::to_string(s));
    }
  }
}

NodeId classification_mutual_loss(Tape& tape, NodeId p1, NodeId p2) {
  validate_distributions(tape.value(p1), "classification_mutual_loss p1");
  validate_distributions(tape.value(p2), "classification_mutual_loss p2");
  const NodeId forward = ops::kl_divergence(tape, p1, ops::stop_gradient(tape, p2));
  const NodeId backward = ops::kl_divergence(tape, p2, ops::stop_gradient(tape, p1));
  return ops::add(tape, forward, backward);
}

void LossWeights::validate() const {
  for (double w : {metric_global, metric_local, cls, metric_mutual, cls_mutual}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("loss weights must be finite and >= 0");
    }
  }
}

bool LossBundle::all_finite() const {
  for (const auto& c : {metric_global, metric_local, cls, metric_mutual, cls_mutual}) {
    if (c && !std::isfinite(*c)) return false;
  }
  return std::isfinite(total);
}

std::string LossBundle::csv_header() { return "step,metric_global,metric_local,cls,mm,cmm,total"; }

std::string LossBundle::csv_row(std::size_t step) const {
  std::ostringstream os;
  os.precision(10);
  os << step;
  for (const auto& c : {metric_global, metric_local, cls, metric_mutual, cls_mutual}) {
    os << ',';
    if (c) os << *c;
  }
  os << ',' << total;
  return os.str();
}

TotalLoss total_loss(Tape& tape, const LossTerms& terms, const LossWeights& weights) {
  weights.validate();
  TotalLoss out{};
  out.bundle.weights = weights;
  std::optional<NodeId> acc;
  auto add = [&](const std::optional<NodeId>& term, double w, std::optional<double>& slot) {
    if (!term) return;
    slot = tape.value(*term).item();
    const NodeId weighted = ops::scale(tape, *term, w);
    acc = acc ? ops::add(tape, *acc, weighted) : weighted;
  };
  add(terms.metric_global, weights.metric_global, out.bundle.metric_global);
  add(terms.metric_local, weights.metric_local, out.bundle.metric_local);
  add(terms.cls, weights.cls, out.bundle.cls);
  add(terms.metric_mutual, weights.metric_mutual, out.bundle.metric_mutual);
  add(terms.cls_mutual, weights.cls_mutual, out.bundle.cls_mutual);
  out.total = acc ? *acc : tape.constant(Array::scalar(0.0));
  out.bundle.total = tape.value(out.total).item();
  return out;
}

}  // namespace areid
