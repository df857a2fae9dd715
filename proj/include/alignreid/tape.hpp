#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "alignreid/array.hpp"

namespace areid {

// The closed set of differentiable primitives.
enum class Op : std::uint8_t {
  kParameter,
  kConstant,
  kConv2d,             // x[N,Ci,H,W], w[Co,Ci,k,k], b[Co]
  kMatMul,             // a[m,k], b[k,n]
  kAddBias,            // x[..., n], b[n]
  kRelu,
  kMeanPool,           // mean over attrs.axes
  kReshape,            // to attrs.shape
  kPermute,            // axes order attrs.axes
  kL2Norm,             // sqrt(sum_last_axis(x^2) + eps)
  kPairwiseDistance,   // x[n,d], y[m,d] -> [n,m] stabilized Euclidean
  kSoftSaturate,       // (e^x - 1) / (e^x + 1)
  kSoftmaxCrossEntropy,// logits[N,K], attrs.indices = labels -> mean NLL
  kSoftmax,            // rows of [N,K]
  kKLDivergence,       // p[N,K], q[N,K] -> mean_rows sum p log(p/q)
  kSquare,
  kSum,
  kMean,
  kAdd,
  kSub,
  kMul,
  kScale,              // x * attrs.scalar
  kAddScalar,          // x + attrs.scalar
  kStopGradient,
  kGatherPairs,        // m[n,m], attrs.indices = (i0,j0,i1,j1,...) -> [K]
  kBlockPathCost,      // stacked part-distance blocks -> [N,M] shortest path
  kBlockDiagSum,       // stacked part-distance blocks -> [N,M] trace
};

const char* op_name(Op op);

// Norm stabilizer shared by every Euclidean primitive.
inline constexpr double kNormEpsilon = 1e-12;
// Floor applied to probabilities inside the KL primitive.
inline constexpr double kProbabilityFloor = 1e-12;

struct NodeId {
  std::uint32_t index = 0;
  bool operator==(const NodeId&) const = default;
};

struct OpAttrs {
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::vector<std::size_t> axes;
  Shape shape;
  double scalar = 0.0;
  std::vector<std::size_t> indices;
  std::size_t parts = 0;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Gradients {
 public:
  Gradients(std::vector<Array> grads, std::vector<bool> present)
      : grads_(std::move(grads)), present_(std::move(present)) {}

  bool has(NodeId id) const { return id.index < present_.size() && present_[id.index]; }
  // Zero array of the node's shape when no gradient reached it.
  const Array& of(NodeId id) const { return grads_.at(id.index); }

 private:
  std::vector<Array> grads_;
  std::vector<bool> present_;
};

// Records primitive applications in topological order. Single writer; a const
// Tape may be read concurrently.
class Tape {
 public:
  NodeId parameter(Array value);
  NodeId constant(Array value);

  NodeId apply(Op op, std::initializer_list<NodeId> inputs, OpAttrs attrs = {});

  const Array& value(NodeId id) const { return nodes_.at(id.index).value; }
  Op op(NodeId id) const { return nodes_.at(id.index).op; }
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(NodeId id) const { return nodes_.at(id.index).requires_grad; }

  // Reverse sweep from a scalar node.
  Gradients backprop(NodeId loss) const;

 private:
  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    OpAttrs attrs;
    Array value;
    bool requires_grad = false;
    std::vector<std::uint8_t> bits;
  };

  NodeId push(Node node);
  Array forward(Node& node) const;
  void backward(const Node& node, const Array& upstream,
                std::vector<Array>& grads, std::vector<bool>& present) const;

  std::vector<Node> nodes_;
};

// Convenience wrappers, one per primitive.
namespace ops {

NodeId conv2d(Tape& t, NodeId x, NodeId w, NodeId b, std::size_t stride,
              std::size_t pad);
NodeId matmul(Tape& t, NodeId a, NodeId b);
NodeId add_bias(Tape& t, NodeId x, NodeId b);
NodeId relu(Tape& t, NodeId x);
NodeId mean_pool(Tape& t, NodeId x, std::vector<std::size_t> axes);
NodeId reshape(Tape& t, NodeId x, Shape shape);
NodeId permute(Tape& t, NodeId x, std::vector<std::size_t> order);
NodeId l2_norm(Tape& t, NodeId x);
NodeId pairwise_distance(Tape& t, NodeId x, NodeId y);
NodeId soft_saturate(Tape& t, NodeId x);
NodeId softmax_cross_entropy(Tape& t, NodeId logits,
                             std::vector<std::size_t> labels);
NodeId softmax(Tape& t, NodeId logits);
NodeId kl_divergence(Tape& t, NodeId p, NodeId q);
NodeId square(Tape& t, NodeId x);
NodeId sum(Tape& t, NodeId x);
NodeId mean(Tape& t, NodeId x);
NodeId add(Tape& t, NodeId a, NodeId b);
NodeId sub(Tape& t, NodeId a, NodeId b);
NodeId mul(Tape& t, NodeId a, NodeId b);
NodeId scale(Tape& t, NodeId x, double factor);
NodeId add_scalar(Tape& t, NodeId x, double offset);
NodeId stop_gradient(Tape& t, NodeId x);
NodeId gather_pairs(Tape& t, NodeId m,
                    std::span<const std::pair<std::size_t, std::size_t>> pairs);
NodeId block_path_cost(Tape& t, NodeId stacked, std::size_t parts);
NodeId block_diag_sum(Tape& t, NodeId stacked, std::size_t parts);

}  // namespace ops

}  // namespace areid
