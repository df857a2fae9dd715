#pragma once

// Central-difference cases shared by the unit tests and the acceptance run.
// Every case builds a scalar from one leaf; nonsmooth primitives get inputs
// away from their kinks.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "alignreid/gradcheck.hpp"
#include "alignreid/losses.hpp"
#include "alignreid/model.hpp"
#include "alignreid/tape.hpp"
#include "alignreid/trainer.hpp"

namespace cases {

using areid::Array;
using areid::NodeId;
using areid::Shape;
using areid::Tape;
namespace ops = areid::ops;

struct GradCase {
  std::string name;
  areid::GraphBuilder build;
  Array x0;
};

inline Array uniform_array(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Array a(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : a.values()) v = u(rng);
  return a;
}

// |values| in [0.1, 1] with random sign, clear of the rectifier kink.
inline Array off_kink_array(std::mt19937_64& rng, Shape shape) {
  Array a = uniform_array(rng, std::move(shape), 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : a.values())
    if (sign(rng)) v = -v;
  return a;
}

// sum(x * w) with fixed random w, so every output entry gets its own upstream.
inline NodeId probe(Tape& t, NodeId x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ops::sum(t, ops::mul(t, x, t.constant(uniform_array(rng, t.value(x).shape()))));
}

inline areid::ModelConfig tiny_model(std::size_t identities) {
  areid::ModelConfig c;
  c.input_size = 12;
  c.channel_plan = {4, 6};
  c.strides = {2, 1};
  c.local_channels = 3;
  c.num_identities = identities;
  return c;
}

// Rebinds the model with the named parameter replaced by `leaf`.
inline areid::BoundParams bind_with(Tape& t, const areid::Model& model, const std::string& name,
                                    NodeId leaf) {
  areid::BoundParams b = model.bind(t);
  const auto& entries = model.params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) b.nodes[i] = leaf;
  return b;
}

inline std::vector<GradCase> primitive_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCase> out;
  auto add = [&](std::string name, Array x0, areid::GraphBuilder f) {
    out.push_back({std::move(name), std::move(f), std::move(x0)});
  };

  {
    const Array w = uniform_array(rng, {3, 2, 3, 3});
    const Array b = uniform_array(rng, {3});
    add("conv2d input", uniform_array(rng, {2, 2, 5, 5}), [w, b](Tape& t, NodeId x) {
      return probe(t, ops::conv2d(t, x, t.constant(w), t.constant(b), 2, 1), 1);
    });
    const Array x = uniform_array(rng, {2, 2, 5, 5});
    add("conv2d weight", w, [x, b](Tape& t, NodeId wl) {
      return probe(t, ops::conv2d(t, t.constant(x), wl, t.constant(b), 1, 1), 2);
    });
    add("conv2d bias", b, [x, w](Tape& t, NodeId bl) {
      return probe(t, ops::conv2d(t, t.constant(x), t.constant(w), bl, 2, 0), 3);
    });
  }
  {
    const Array b = uniform_array(rng, {4, 3});
    add("matmul left", uniform_array(rng, {2, 4}),
        [b](Tape& t, NodeId a) { return probe(t, ops::matmul(t, a, t.constant(b)), 4); });
    const Array a = uniform_array(rng, {2, 4});
    add("matmul right", b,
        [a](Tape& t, NodeId bl) { return probe(t, ops::matmul(t, t.constant(a), bl), 5); });
  }
  {
    const Array bias = uniform_array(rng, {3});
    add("add_bias input", uniform_array(rng, {2, 2, 3}),
        [bias](Tape& t, NodeId x) { return probe(t, ops::add_bias(t, x, t.constant(bias)), 6); });
    const Array x = uniform_array(rng, {2, 2, 3});
    add("add_bias bias", bias,
        [x](Tape& t, NodeId b) { return probe(t, ops::add_bias(t, t.constant(x), b), 7); });
  }
  add("relu", off_kink_array(rng, {3, 4}),
      [](Tape& t, NodeId x) { return probe(t, ops::relu(t, x), 8); });
  add("mean_pool", uniform_array(rng, {2, 3, 4}),
      [](Tape& t, NodeId x) { return probe(t, ops::mean_pool(t, x, {0, 2}), 9); });
  add("reshape", uniform_array(rng, {2, 6}),
      [](Tape& t, NodeId x) { return probe(t, ops::reshape(t, x, {3, 4}), 10); });
  add("permute", uniform_array(rng, {2, 3, 4}),
      [](Tape& t, NodeId x) { return probe(t, ops::permute(t, x, {2, 0, 1}), 11); });
  add("l2_norm", uniform_array(rng, {3, 5}),
      [](Tape& t, NodeId x) { return probe(t, ops::l2_norm(t, x), 12); });
  {
    const Array y = uniform_array(rng, {4, 3});
    add("pairwise_distance", uniform_array(rng, {3, 3}), [y](Tape& t, NodeId x) {
      return probe(t, ops::pairwise_distance(t, x, t.constant(y)), 13);
    });
    add("pairwise_distance self", uniform_array(rng, {4, 3}), [](Tape& t, NodeId x) {
      // Diagonal entries sit at the stabilized zero; only their value is checked.
      return probe(t, ops::pairwise_distance(t, x, x), 14);
    });
  }
  add("soft_saturate", uniform_array(rng, {3, 3}, 0.0, 4.0),
      [](Tape& t, NodeId x) { return probe(t, ops::soft_saturate(t, x), 15); });
  add("softmax_cross_entropy", uniform_array(rng, {4, 5}, -2.0, 2.0), [](Tape& t, NodeId x) {
    return ops::softmax_cross_entropy(t, x, {0, 4, 2, 2});
  });
  add("softmax", uniform_array(rng, {3, 4}, -2.0, 2.0),
      [](Tape& t, NodeId x) { return probe(t, ops::softmax(t, x), 16); });
  {
    std::mt19937_64 qr(seed + 1);
    const Array qlogits = uniform_array(qr, {3, 4}, -2.0, 2.0);
    add("kl_divergence p", uniform_array(rng, {3, 4}, -2.0, 2.0), [qlogits](Tape& t, NodeId x) {
      return ops::kl_divergence(t, ops::softmax(t, x), ops::softmax(t, t.constant(qlogits)));
    });
    add("kl_divergence q", uniform_array(rng, {3, 4}, -2.0, 2.0), [qlogits](Tape& t, NodeId x) {
      return ops::kl_divergence(t, ops::softmax(t, t.constant(qlogits)), ops::softmax(t, x));
    });
  }
  add("square", uniform_array(rng, {5}),
      [](Tape& t, NodeId x) { return probe(t, ops::square(t, x), 17); });
  add("sum", uniform_array(rng, {2, 3}), [](Tape& t, NodeId x) {
    return ops::mul(t, ops::sum(t, x), ops::sum(t, x));
  });
  add("mean", uniform_array(rng, {2, 3}), [](Tape& t, NodeId x) {
    return ops::square(t, ops::add_scalar(t, ops::mean(t, x), 0.3));
  });
  {
    const Array y = uniform_array(rng, {2, 3});
    add("add", uniform_array(rng, {2, 3}),
        [y](Tape& t, NodeId x) { return probe(t, ops::square(t, ops::add(t, x, t.constant(y))), 18); });
    add("sub right", uniform_array(rng, {2, 3}),
        [y](Tape& t, NodeId x) { return probe(t, ops::square(t, ops::sub(t, t.constant(y), x)), 19); });
    add("mul", uniform_array(rng, {2, 3}),
        [y](Tape& t, NodeId x) { return probe(t, ops::mul(t, x, ops::mul(t, x, t.constant(y))), 20); });
  }
  add("scale", uniform_array(rng, {4}),
      [](Tape& t, NodeId x) { return probe(t, ops::square(t, ops::scale(t, x, -1.7)), 21); });
  add("add_scalar", uniform_array(rng, {4}),
      [](Tape& t, NodeId x) { return probe(t, ops::square(t, ops::add_scalar(t, x, 0.4)), 22); });
  {
    const std::vector<std::pair<std::size_t, std::size_t>> pairs = {{0, 1}, {2, 0}, {1, 1}, {0, 1}};
    add("gather_pairs", uniform_array(rng, {3, 2}),
        [pairs](Tape& t, NodeId x) { return probe(t, ops::gather_pairs(t, x, pairs), 23); });
  }
  // Two row blocks by three column blocks of 4x4 part distances. Uniform
  // entries make ties between paths a measure-zero event.
  add("block_path_cost", uniform_array(rng, {8, 12}, 0.0, 1.0),
      [](Tape& t, NodeId x) { return probe(t, ops::block_path_cost(t, x, 4), 24); });
  add("block_diag_sum", uniform_array(rng, {8, 12}, 0.0, 1.0),
      [](Tape& t, NodeId x) { return probe(t, ops::block_diag_sum(t, x, 4), 25); });
  return out;
}

inline std::vector<GradCase> composite_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCase> out;

  // Normalized part distance: soft saturation over the stabilized norm.
  {
    const Array g = uniform_array(rng, {5, 4});
    out.push_back({"normalized distance", [g](Tape& t, NodeId f) {
                     return probe(t, ops::soft_saturate(t, ops::pairwise_distance(t, f, t.constant(g))), 30);
                   },
                   uniform_array(rng, {5, 4})});
  }
  // Aligned local distance of a batch of three images with five stripes.
  out.push_back({"aligned local distance", [](Tape& t, NodeId locals) {
                   return probe(t, areid::local_distance_matrix(t, locals, 5, areid::LocalMetric::kAligned), 31);
                 },
                 uniform_array(rng, {15, 3})});
  out.push_back({"indexed local distance", [](Tape& t, NodeId locals) {
                   return probe(t, areid::local_distance_matrix(t, locals, 5, areid::LocalMetric::kIndexed), 32);
                 },
                 uniform_array(rng, {15, 3})});

  // TriHard batch loss through the whole aligned model, wrt the first stage.
  {
    const areid::Model model(tiny_model(0), seed + 5);
    const Array images = uniform_array(rng, {8, 3, 12, 12});
    const std::vector<std::size_t> labels = {0, 0, 1, 1, 2, 2, 3, 3};
    areid::TrainConfig tc;
    tc.variant = areid::Variant::kAligned;
    out.push_back({"trihard batch loss", [model, images, labels, tc](Tape& t, NodeId w) {
                     const auto bound = bind_with(t, model, "stage0.weight", w);
                     const auto bl = areid::build_batch_loss(t, model, bound, t.constant(images), labels, tc);
                     return ops::add(t, *bl.terms.metric_global, *bl.terms.metric_local);
                   },
                   model.params().get("stage0.weight")});
  }

  // Full mutual objective of one model of a pair, wrt its last stage.
  {
    const areid::Model model(tiny_model(4), seed + 6);
    const areid::Model partner(tiny_model(4), seed + 7);
    const Array images = uniform_array(rng, {8, 3, 12, 12});
    const std::vector<std::size_t> labels = {0, 0, 1, 1, 2, 2, 3, 3};
    areid::TrainConfig tc;
    tc.variant = areid::Variant::kAligned;
    tc.weights.metric_mutual = 0.3;  // large enough to dominate rounding
    tc.weights.cls_mutual = 0.2;
    Tape pt;
    const auto pb = areid::build_batch_loss(pt, partner, partner.bind(pt, false), pt.constant(images),
                                            labels, tc);
    const Array partner_global = pt.value(pb.distances.global);
    const Array partner_probs = pt.value(ops::softmax(pt, *pb.outputs.logits));
    // Operands under sg() are frozen at x0: finite differences would
    // otherwise see them move.
    Tape ft;
    const auto fb = areid::build_batch_loss(ft, model, model.bind(ft, false), ft.constant(images),
                                            labels, tc);
    const Array own_global = ft.value(fb.distances.global);
    const Array own_probs = ft.value(ops::softmax(ft, *fb.outputs.logits));
    out.push_back({"full mutual loss",
                   [model, images, labels, tc, partner_global, partner_probs, own_global,
                    own_probs](Tape& t, NodeId w) {
                     const auto bound = bind_with(t, model, "stage1.weight", w);
                     const auto bl = areid::build_batch_loss(t, model, bound, t.constant(images), labels, tc);
                     const NodeId partner_m = t.constant(partner_global);
                     const NodeId partner_p = t.constant(partner_probs);
                     areid::LossTerms terms = bl.terms;
                     terms.metric_mutual = areid::metric_mutual_loss(
                         t, bl.distances.global, partner_m, t.constant(own_global), partner_m);
                     const NodeId p = ops::softmax(t, *bl.outputs.logits);
                     terms.cls_mutual = ops::add(t, ops::kl_divergence(t, p, partner_p),
                                                 ops::kl_divergence(t, partner_p, t.constant(own_probs)));
                     return areid::total_loss(t, terms, tc.weights).total;
                   },
                   model.params().get("stage1.weight")});
  }
  return out;
}

}  // namespace cases
