#include "alignreid/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "alignreid/kernels/kernels.hpp"

namespace areid {

namespace {

[[noreturn]] void shape_fail(Op op, const std::string& what) {
  throw ShapeError(std::string(op_name(op)) + ": " + what);
}

void expect_rank(Op op, const Array& a, std::size_t rank, const char* name) {
  if (a.rank() != rank) {
    shape_fail(op, std::string(name) + " must have rank " + std::to_string(rank) +
                       ", got " + shape_str(a.shape()));
  }
}

void expect_same(Op op, const Array& a, const Array& b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "operand shapes differ: " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
  }
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Output flat offset for every input element when the given axes are averaged.
std::vector<std::size_t> pool_targets(const Shape& in, const std::vector<std::size_t>& axes,
                                      Shape& out_shape, std::size_t& count) {
  std::vector<bool> reduced(in.size(), false);
  for (auto ax : axes) reduced[ax] = true;
  out_shape.clear();
  count = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (reduced[i]) {
      count *= in[i];
    } else {
      out_shape.push_back(in[i]);
    }
  }
  const auto out_strides = strides_of(out_shape);
  std::vector<std::size_t> axis_stride(in.size(), 0);
  for (std::size_t i = 0, k = 0; i < in.size(); ++i) {
    if (!reduced[i]) axis_stride[i] = out_strides[k++];
  }
  const std::size_t total = shape_size(in);
  std::vector<std::size_t> target(total);
  std::vector<std::size_t> idx(in.size(), 0);
  std::size_t off = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    target[flat] = off;
    for (std::size_t ax = in.size(); ax-- > 0;) {
      ++idx[ax];
      off += axis_stride[ax];
      if (idx[ax] < in[ax]) break;
      off -= axis_stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return target;
}

// Source flat offset for every output element of a permutation.
std::vector<std::size_t> permute_sources(const Shape& in, const std::vector<std::size_t>& order,
                                         Shape& out_shape) {
  const auto in_strides = strides_of(in);
  out_shape.resize(order.size());
  std::vector<std::size_t> step(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    out_shape[k] = in[order[k]];
    step[k] = in_strides[order[k]];
  }
  const std::size_t total = shape_size(in);
  std::vector<std::size_t> source(total);
  std::vector<std::size_t> idx(order.size(), 0);
  std::size_t off = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    source[flat] = off;
    for (std::size_t ax = order.size(); ax-- > 0;) {
      ++idx[ax];
      off += step[ax];
      if (idx[ax] < out_shape[ax]) break;
      off -= step[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return source;
}

double saturate(double x) {
  // Largest double below one keeps the [0, 1) contract at extreme inputs.
  static const double kBelowOne = std::nextafter(1.0, 0.0);
  return std::min(std::tanh(0.5 * x), kBelowOne);
}

kernels::ConvGeometry conv_geometry(const Array& x, const Array& w, const OpAttrs& a) {
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.in_h = x.dim(2);
  g.in_w = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel = w.dim(2);
  g.stride = a.stride;
  g.pad = a.pad;
  return g;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kParameter: return "parameter";
    case Op::kConstant: return "constant";
    case Op::kConv2d: return "conv2d";
    case Op::kMatMul: return "matmul";
    case Op::kAddBias: return "add_bias";
    case Op::kRelu: return "relu";
    case Op::kMeanPool: return "mean_pool";
    case Op::kReshape: return "reshape";
    case Op::kPermute: return "permute";
    case Op::kL2Norm: return "l2_norm";
    case Op::kPairwiseDistance: return "pairwise_distance";
    case Op::kSoftSaturate: return "soft_saturate";
    case Op::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case Op::kSoftmax: return "softmax";
    case Op::kKLDivergence: return "kl_divergence";
    case Op::kSquare: return "square";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kStopGradient: return "stop_gradient";
    case Op::kGatherPairs: return "gather_pairs";
    case Op::kBlockPathCost: return "block_path_cost";
    case Op::kBlockDiagSum: return "block_diag_sum";
  }
  return "unknown";
}

NodeId Tape::push(Node node) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw std::length_error("tape full");
  }
  nodes_.push_back(std::move(node));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Tape::parameter(Array value) {
  Node n{Op::kParameter, {}, {}, std::move(value), true, {}};
  return push(std::move(n));
}

NodeId Tape::constant(Array value) {
  Node n{Op::kConstant, {}, {}, std::move(value), false, {}};
  return push(std::move(n));
}

NodeId Tape::apply(Op op, std::initializer_list<NodeId> inputs, OpAttrs attrs) {
  if (op == Op::kParameter || op == Op::kConstant) {
    throw std::invalid_argument("leaves are created with parameter()/constant()");
  }
  Node n{op, std::vector<NodeId>(inputs), std::move(attrs), {}, false, {}};
  for (auto id : n.inputs) {
    if (id.index >= nodes_.size()) {
      throw std::out_of_range(std::string(op_name(op)) + ": unknown input node");
    }
    n.requires_grad = n.requires_grad || nodes_[id.index].requires_grad;
  }
  if (op == Op::kStopGradient) n.requires_grad = false;
  n.value = forward(n);
  return push(std::move(n));
}

Array Tape::forward(Node& node) const {
  const Op op = node.op;
  auto in = [&](std::size_t i) -> const Array& { return nodes_[node.inputs[i].index].value; };
  auto expect_arity = [&](std::size_t n) {
    if (node.inputs.size() != n) {
      shape_fail(op, "expects " + std::to_string(n) + " inputs, got " +
                         std::to_string(node.inputs.size()));
    }
  };
  const OpAttrs& at = node.attrs;

  switch (op) {
    case Op::kParameter:
    case Op::kConstant:
      break;

    case Op::kConv2d: {
      expect_arity(3);
      const Array& x = in(0);
      const Array& w = in(1);
      const Array& b = in(2);
      expect_rank(op, x, 4, "input");
      expect_rank(op, w, 4, "weight");
      expect_rank(op, b, 1, "bias");
      if (w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3) || b.dim(0) != w.dim(0) ||
          at.stride == 0 || x.dim(2) + 2 * at.pad < w.dim(2) ||
          x.dim(3) + 2 * at.pad < w.dim(3)) {
        shape_fail(op, "incompatible input " + shape_str(x.shape()) + ", weight " +
                           shape_str(w.shape()) + ", bias " + shape_str(b.shape()));
      }
      const auto g = conv_geometry(x, w, at);
      Array out({g.batch, g.out_channels, g.out_h(), g.out_w()});
      kernels::omp::conv2d_forward(g, x.values(), w.values(), b.values(), out.values());
      return out;
    }

    case Op::kMatMul: {
      expect_arity(2);
      const Array& a = in(0);
      const Array& b = in(1);
      expect_rank(op, a, 2, "lhs");
      expect_rank(op, b, 2, "rhs");
      if (a.dim(1) != b.dim(0)) {
        shape_fail(op, "inner extents differ: " + shape_str(a.shape()) + " x " +
                           shape_str(b.shape()));
      }
      const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
      Array out({m, n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a[i * k + p];
          for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b[p * n + j];
        }
      return out;
    }

    case Op::kAddBias: {
      expect_arity(2);
      const Array& x = in(0);
      const Array& b = in(1);
      expect_rank(op, b, 1, "bias");
      if (x.rank() == 0 || x.shape().back() != b.dim(0)) {
        shape_fail(op, "bias " + shape_str(b.shape()) + " does not match last axis of " +
                           shape_str(x.shape()));
      }
      Array out = x;
      const std::size_t n = b.dim(0);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % n];
      return out;
    }

    case Op::kRelu: {
      expect_arity(1);
      Array out = in(0);
      for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
      return out;
    }

    case Op::kMeanPool: {
      expect_arity(1);
      const Array& x = in(0);
      auto axes = at.axes;
      std::sort(axes.begin(), axes.end());
      if (axes.empty() || std::adjacent_find(axes.begin(), axes.end()) != axes.end() ||
          axes.back() >= x.rank()) {
        shape_fail(op, "invalid pooling axes for " + shape_str(x.shape()));
      }
      node.attrs.axes = axes;
      Shape out_shape;
      std::size_t count = 0;
      const auto target = pool_targets(x.shape(), axes, out_shape, count);
      Array out(out_shape);
      for (std::size_t i = 0; i < x.size(); ++i) out[target[i]] += x[i];
      const double inv = 1.0 / static_cast<double>(count);
      for (auto& v : out.values()) v *= inv;
      return out;
    }

    case Op::kReshape: {
      expect_arity(1);
      if (shape_size(at.shape) != in(0).size()) {
        shape_fail(op, "cannot view " + shape_str(in(0).shape()) + " as " +
                           shape_str(at.shape));
      }
      return in(0).reshaped(at.shape);
    }

    case Op::kPermute: {
      expect_arity(1);
      const Array& x = in(0);
      auto sorted = at.axes;
      std::sort(sorted.begin(), sorted.end());
      bool ok = sorted.size() == x.rank();
      for (std::size_t i = 0; ok && i < sorted.size(); ++i) ok = sorted[i] == i;
      if (!ok) shape_fail(op, "order is not a permutation of the axes of " + shape_str(x.shape()));
      Shape out_shape;
      const auto source = permute_sources(x.shape(), at.axes, out_shape);
      Array out(out_shape);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[source[i]];
      return out;
    }

    case Op::kL2Norm: {
      expect_arity(1);
      const Array& x = in(0);
      if (x.rank() == 0) shape_fail(op, "needs at least one axis");
      const std::size_t d = x.shape().back();
      Shape out_shape(x.shape().begin(), x.shape().end() - 1);
      Array out(out_shape);
      for (std::size_t r = 0; r < out.size(); ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) acc += x[r * d + k] * x[r * d + k];
        out[r] = std::sqrt(acc + kNormEpsilon);
      }
      return out;
    }

    case Op::kPairwiseDistance: {
      expect_arity(2);
      const Array& x = in(0);
      const Array& y = in(1);
      expect_rank(op, x, 2, "lhs");
      expect_rank(op, y, 2, "rhs");
      if (x.dim(1) != y.dim(1)) {
        shape_fail(op, "feature dimensions differ: " + shape_str(x.shape()) + " vs " +
                           shape_str(y.shape()));
      }
      Array out({x.dim(0), y.dim(0)});
      kernels::omp::pairwise_distance(x.values(), x.dim(0), y.values(), y.dim(0),
                                      x.dim(1), kNormEpsilon, out.values());
      return out;
    }

    case Op::kSoftSaturate: {
      expect_arity(1);
      Array out = in(0);
      for (auto& v : out.values()) v = saturate(v);
      return out;
    }

    case Op::kSoftmaxCrossEntropy: {
      expect_arity(1);
      const Array& z = in(0);
      expect_rank(op, z, 2, "logits");
      const std::size_t n = z.dim(0), k = z.dim(1);
      if (at.indices.size() != n) {
        shape_fail(op, "expects " + std::to_string(n) + " labels, got " +
                           std::to_string(at.indices.size()));
      }
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (at.indices[i] >= k) shape_fail(op, "label out of range");
        const double* row = z.values().data() + i * k;
        const double mx = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
        total += std::log(s) + mx - row[at.indices[i]];
      }
      return Array::scalar(total / static_cast<double>(n));
    }

    case Op::kSoftmax: {
      expect_arity(1);
      const Array& z = in(0);
      expect_rank(op, z, 2, "logits");
      const std::size_t n = z.dim(0), k = z.dim(1);
      Array out(z.shape());
      for (std::size_t i = 0; i < n; ++i) {
        const double* row = z.values().data() + i * k;
        const double mx = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          out[i * k + j] = std::exp(row[j] - mx);
          s += out[i * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= s;
      }
      return out;
    }

    case Op::kKLDivergence: {
      expect_arity(2);
      const Array& p = in(0);
      const Array& q = in(1);
      expect_rank(op, p, 2, "p");
      expect_same(op, p, q);
      double total = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double pv = std::max(p[i], kProbabilityFloor);
        const double qv = std::max(q[i], kProbabilityFloor);
        total += pv * std::log(pv / qv);
      }
      return Array::scalar(total / static_cast<double>(p.dim(0)));
    }

    case Op::kSquare: {
      expect_arity(1);
      Array out = in(0);
      for (auto& v : out.values()) v *= v;
      return out;
    }

    case Op::kSum:
    case Op::kMean: {
      expect_arity(1);
      const Array& x = in(0);
      double s = 0.0;
      for (double v : x.values()) s += v;
      if (op == Op::kMean) {
        if (x.size() == 0) shape_fail(op, "empty input");
        s /= static_cast<double>(x.size());
      }
      return Array::scalar(s);
    }

    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      expect_arity(2);
      expect_same(op, in(0), in(1));
      Array out = in(0);
      const Array& b = in(1);
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (op == Op::kAdd) out[i] += b[i];
        else if (op == Op::kSub) out[i] -= b[i];
        else out[i] *= b[i];
      }
      return out;
    }

    case Op::kScale: {
      expect_arity(1);
      Array out = in(0);
      for (auto& v : out.values()) v *= at.scalar;
      return out;
    }

    case Op::kAddScalar: {
      expect_arity(1);
      Array out = in(0);
      for (auto& v : out.values()) v += at.scalar;
      return out;
    }

    case Op::kStopGradient:
      expect_arity(1);
      return in(0);

    case Op::kGatherPairs: {
      expect_arity(1);
      const Array& m = in(0);
      expect_rank(op, m, 2, "matrix");
      if (at.indices.size() % 2 != 0) shape_fail(op, "index list must hold pairs");
      const std::size_t count = at.indices.size() / 2;
      Array out({count});
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t r = at.indices[2 * k], c = at.indices[2 * k + 1];
        if (r >= m.dim(0) || c >= m.dim(1)) {
          shape_fail(op, "pair index out of range for " + shape_str(m.shape()));
        }
        out[k] = m.at(r, c);
      }
      return out;
    }

    case Op::kBlockPathCost:
    case Op::kBlockDiagSum: {
      expect_arity(1);
      const Array& d = in(0);
      expect_rank(op, d, 2, "stacked distances");
      const std::size_t h = at.parts;
      if (h == 0 || d.dim(0) % h != 0 || d.dim(1) % h != 0) {
        shape_fail(op, "extents of " + shape_str(d.shape()) +
                           " are not multiples of parts=" + std::to_string(h));
      }
      kernels::BlockLayout layout{d.dim(0) / h, d.dim(1) / h, h};
      Array out({layout.row_blocks, layout.col_blocks});
      if (op == Op::kBlockPathCost) {
        node.bits.assign(layout.row_blocks * layout.col_blocks * h * h, 0);
        kernels::omp::block_path_cost(layout, d.values(), out.values(), node.bits);
      } else {
        const std::size_t stride = layout.row_stride();
        for (std::size_t a = 0; a < layout.row_blocks; ++a)
          for (std::size_t b = 0; b < layout.col_blocks; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < h; ++i) s += d[(a * h + i) * stride + b * h + i];
            out.at(a, b) = s;
          }
      }
      return out;
    }
  }
  shape_fail(op, "unhandled primitive");
}

Gradients Tape::backprop(NodeId loss) const {
  if (loss.index >= nodes_.size()) throw std::out_of_range("backprop: unknown loss node");
  const Array& lv = nodes_[loss.index].value;
  if (lv.size() != 1) {
    throw ShapeError("backprop: loss must be scalar, got " + shape_str(lv.shape()));
  }
  std::vector<Array> grads(nodes_.size());
  std::vector<bool> present(nodes_.size(), false);
  grads[loss.index] = Array(lv.shape(), 1.0);
  present[loss.index] = true;

  for (std::size_t i = loss.index + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!present[i] || !node.requires_grad || node.inputs.empty()) continue;
    backward(node, grads[i], grads, present);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!present[i]) grads[i] = Array(nodes_[i].value.shape());
  }
  return Gradients(std::move(grads), std::move(present));
}

void Tape::backward(const Node& node, const Array& up, std::vector<Array>& grads,
                    std::vector<bool>& present) const {
  auto in = [&](std::size_t i) -> const Array& { return nodes_[node.inputs[i].index].value; };
  auto wants = [&](std::size_t i) { return nodes_[node.inputs[i].index].requires_grad; };
  auto give = [&](std::size_t i, Array g) {
    const auto idx = node.inputs[i].index;
    if (present[idx]) {
      grads[idx] += g;
    } else {
      grads[idx] = std::move(g);
      present[idx] = true;
    }
  };
  const OpAttrs& at = node.attrs;
  const Array& out = node.value;

  switch (node.op) {
    case Op::kParameter:
    case Op::kConstant:
    case Op::kStopGradient:
      return;

    case Op::kConv2d: {
      const Array& x = in(0);
      const Array& w = in(1);
      const auto g = conv_geometry(x, w, at);
      if (wants(0)) {
        Array gx(x.shape());
        kernels::omp::conv2d_backward_input(g, w.values(), up.values(), gx.values());
        give(0, std::move(gx));
      }
      if (wants(1) || wants(2)) {
        Array gw(w.shape());
        Array gb({w.dim(0)});
        kernels::omp::conv2d_backward_weight(g, x.values(), up.values(), gw.values(),
                                             gb.values());
        if (wants(1)) give(1, std::move(gw));
        if (wants(2)) give(2, std::move(gb));
      }
      return;
    }

    case Op::kMatMul: {
      const Array& a = in(0);
      const Array& b = in(1);
      const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
      if (wants(0)) {
        Array ga(a.shape());
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += up[i * n + j] * b[p * n + j];
            ga[i * k + p] = acc;
          }
        give(0, std::move(ga));
      }
      if (wants(1)) {
        Array gb(b.shape());
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * up[i * n + j];
          }
        give(1, std::move(gb));
      }
      return;
    }

    case Op::kAddBias: {
      if (wants(0)) give(0, up);
      if (wants(1)) {
        const std::size_t n = in(1).dim(0);
        Array gb({n});
        for (std::size_t i = 0; i < up.size(); ++i) gb[i % n] += up[i];
        give(1, std::move(gb));
      }
      return;
    }

    case Op::kRelu: {
      Array g = up;
      const Array& x = in(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(x[i] > 0.0)) g[i] = 0.0;
      }
      give(0, std::move(g));
      return;
    }

    case Op::kMeanPool: {
      const Array& x = in(0);
      Shape out_shape;
      std::size_t count = 0;
      const auto target = pool_targets(x.shape(), at.axes, out_shape, count);
      const double inv = 1.0 / static_cast<double>(count);
      Array g(x.shape());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = up[target[i]] * inv;
      give(0, std::move(g));
      return;
    }

    case Op::kReshape:
      give(0, up.reshaped(in(0).shape()));
      return;

    case Op::kPermute: {
      const Array& x = in(0);
      Shape out_shape;
      const auto source = permute_sources(x.shape(), at.axes, out_shape);
      Array g(x.shape());
      for (std::size_t i = 0; i < up.size(); ++i) g[source[i]] = up[i];
      give(0, std::move(g));
      return;
    }

    case Op::kL2Norm: {
      const Array& x = in(0);
      const std::size_t d = x.shape().back();
      Array g(x.shape());
      for (std::size_t r = 0; r < out.size(); ++r) {
        const double f = up[r] / out[r];
        for (std::size_t k = 0; k < d; ++k) g[r * d + k] = f * x[r * d + k];
      }
      give(0, std::move(g));
      return;
    }

    case Op::kPairwiseDistance: {
      const Array& x = in(0);
      const Array& y = in(1);
      const std::size_t n = x.dim(0), m = y.dim(0), d = x.dim(1);
      Array gx(x.shape());
      Array gy(y.shape());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double f = up[i * m + j] / out[i * m + j];
          if (f == 0.0) continue;
          for (std::size_t k = 0; k < d; ++k) {
            const double diff = f * (x[i * d + k] - y[j * d + k]);
            gx[i * d + k] += diff;
            gy[j * d + k] -= diff;
          }
        }
      if (wants(0)) give(0, std::move(gx));
      if (wants(1)) give(1, std::move(gy));
      return;
    }

    case Op::kSoftSaturate: {
      Array g = up;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 0.5 * (1.0 - out[i] * out[i]);
      give(0, std::move(g));
      return;
    }

    case Op::kSoftmaxCrossEntropy: {
      const Array& z = in(0);
      const std::size_t n = z.dim(0), k = z.dim(1);
      Array g(z.shape());
      const double scale = up.item() / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double* row = z.values().data() + i * k;
        const double mx = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < k; ++j) {
          const double p = std::exp(row[j] - mx) / s;
          g[i * k + j] = scale * (p - (j == at.indices[i] ? 1.0 : 0.0));
        }
      }
      give(0, std::move(g));
      return;
    }

    case Op::kSoftmax: {
      const std::size_t n = out.dim(0), k = out.dim(1);
      Array g(out.shape());
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += up[i * k + j] * out[i * k + j];
        for (std::size_t j = 0; j < k; ++j)
          g[i * k + j] = out[i * k + j] * (up[i * k + j] - dot);
      }
      give(0, std::move(g));
      return;
    }

    case Op::kKLDivergence: {
      const Array& p = in(0);
      const Array& q = in(1);
      const double scale = up.item() / static_cast<double>(p.dim(0));
      if (wants(0)) {
        Array g(p.shape());
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (p[i] < kProbabilityFloor) continue;
          const double qv = std::max(q[i], kProbabilityFloor);
          g[i] = scale * (std::log(p[i] / qv) + 1.0);
        }
        give(0, std::move(g));
      }
      if (wants(1)) {
        Array g(q.shape());
        for (std::size_t i = 0; i < q.size(); ++i) {
          if (q[i] < kProbabilityFloor) continue;
          g[i] = -scale * std::max(p[i], kProbabilityFloor) / q[i];
        }
        give(1, std::move(g));
      }
      return;
    }

    case Op::kSquare: {
      Array g = up;
      const Array& x = in(0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 2.0 * x[i];
      give(0, std::move(g));
      return;
    }

    case Op::kSum:
    case Op::kMean: {
      const Array& x = in(0);
      double v = up.item();
      if (node.op == Op::kMean) v /= static_cast<double>(x.size());
      give(0, Array(x.shape(), v));
      return;
    }

    case Op::kAdd:
      if (wants(0)) give(0, up);
      if (wants(1)) give(1, up);
      return;

    case Op::kSub:
      if (wants(0)) give(0, up);
      if (wants(1)) {
        Array g = up;
        for (auto& v : g.values()) v = -v;
        give(1, std::move(g));
      }
      return;

    case Op::kMul: {
      if (wants(0)) {
        Array g = up;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= in(1)[i];
        give(0, std::move(g));
      }
      if (wants(1)) {
        Array g = up;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= in(0)[i];
        give(1, std::move(g));
      }
      return;
    }

    case Op::kScale: {
      Array g = up;
      for (auto& v : g.values()) v *= at.scalar;
      give(0, std::move(g));
      return;
    }

    case Op::kAddScalar:
      give(0, up);
      return;

    case Op::kGatherPairs: {
      const Array& m = in(0);
      Array g(m.shape());
      for (std::size_t k = 0; k < up.size(); ++k) {
        g.at(at.indices[2 * k], at.indices[2 * k + 1]) += up[k];
      }
      give(0, std::move(g));
      return;
    }

    case Op::kBlockPathCost: {
      const Array& d = in(0);
      const std::size_t h = at.parts;
      kernels::BlockLayout layout{d.dim(0) / h, d.dim(1) / h, h};
      Array g(d.shape());
      kernels::block_path_backward(layout, node.bits, up.values(), g.values());
      give(0, std::move(g));
      return;
    }

    case Op::kBlockDiagSum: {
      const Array& d = in(0);
      const std::size_t h = at.parts;
      const std::size_t rb = d.dim(0) / h, cb = d.dim(1) / h, stride = d.dim(1);
      Array g(d.shape());
      for (std::size_t a = 0; a < rb; ++a)
        for (std::size_t b = 0; b < cb; ++b)
          for (std::size_t i = 0; i < h; ++i)
            g[(a * h + i) * stride + b * h + i] += up[a * cb + b];
      give(0, std::move(g));
      return;
    }
  }
}

namespace ops {

NodeId conv2d(Tape& t, NodeId x, NodeId w, NodeId b, std::size_t stride, std::size_t pad) {
  OpAttrs a;
  a.stride = stride;
  a.pad = pad;
  return t.apply(Op::kConv2d, {x, w, b}, std::move(a));
}
NodeId matmul(Tape& t, NodeId a, NodeId b) { return t.apply(Op::kMatMul, {a, b}); }
NodeId add_bias(Tape& t, NodeId x, NodeId b) { return t.apply(Op::kAddBias, {x, b}); }
NodeId relu(Tape& t, NodeId x) { return t.apply(Op::kRelu, {x}); }
NodeId mean_pool(Tape& t, NodeId x, std::vector<std::size_t> axes) {
  OpAttrs a;
  a.axes = std::move(axes);
  return t.apply(Op::kMeanPool, {x}, std::move(a));
}
NodeId reshape(Tape& t, NodeId x, Shape shape) {
  OpAttrs a;
  a.shape = std::move(shape);
  return t.apply(Op::kReshape, {x}, std::move(a));
}
NodeId permute(Tape& t, NodeId x, std::vector<std::size_t> order) {
  OpAttrs a;
  a.axes = std::move(order);
  return t.apply(Op::kPermute, {x}, std::move(a));
}
NodeId l2_norm(Tape& t, NodeId x) { return t.apply(Op::kL2Norm, {x}); }
NodeId pairwise_distance(Tape& t, NodeId x, NodeId y) {
  return t.apply(Op::kPairwiseDistance, {x, y});
}
NodeId soft_saturate(Tape& t, NodeId x) { return t.apply(Op::kSoftSaturate, {x}); }
NodeId softmax_cross_entropy(Tape& t, NodeId logits, std::vector<std::size_t> labels) {
  OpAttrs a;
  a.indices = std::move(labels);
  return t.apply(Op::kSoftmaxCrossEntropy, {logits}, std::move(a));
}
NodeId softmax(Tape& t, NodeId logits) { return t.apply(Op::kSoftmax, {logits}); }
NodeId kl_divergence(Tape& t, NodeId p, NodeId q) { return t.apply(Op::kKLDivergence, {p, q}); }
NodeId square(Tape& t, NodeId x) { return t.apply(Op::kSquare, {x}); }
NodeId sum(Tape& t, NodeId x) { return t.apply(Op::kSum, {x}); }
NodeId mean(Tape& t, NodeId x) { return t.apply(Op::kMean, {x}); }
NodeId add(Tape& t, NodeId a, NodeId b) { return t.apply(Op::kAdd, {a, b}); }
NodeId sub(Tape& t, NodeId a, NodeId b) { return t.apply(Op::kSub, {a, b}); }
NodeId mul(Tape& t, NodeId a, NodeId b) { return t.apply(Op::kMul, {a, b}); }
NodeId scale(Tape& t, NodeId x, double factor) {
  OpAttrs a;
  a.scalar = factor;
  return t.apply(Op::kScale, {x}, std::move(a));
}
NodeId add_scalar(Tape& t, NodeId x, double offset) {
  OpAttrs a;
  a.scalar = offset;
  return t.apply(Op::kAddScalar, {x}, std::move(a));
}
NodeId stop_gradient(Tape& t, NodeId x) { return t.apply(Op::kStopGradient, {x}); }
NodeId gather_pairs(Tape& t, NodeId m,
                    std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  OpAttrs a;
  a.indices.reserve(pairs.size() * 2);
  for (const auto& [r, c] : pairs) {
    a.indices.push_back(r);
    a.indices.push_back(c);
  }
  return t.apply(Op::kGatherPairs, {m}, std::move(a));
}
NodeId block_path_cost(Tape& t, NodeId stacked, std::size_t parts) {
  OpAttrs a;
  a.parts = parts;
  return t.apply(Op::kBlockPathCost, {stacked}, std::move(a));
}
NodeId block_diag_sum(Tape& t, NodeId stacked, std::size_t parts) {
  OpAttrs a;
  a.parts = parts;
  return t.apply(Op::kBlockDiagSum, {stacked}, std::move(a));
}

}  // namespace ops
}  // namespace areid
