#include "alignreid/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace areid {

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kPad = 1;

std::string stage_name(std::size_t i, const char* what) {
  return "stage" + std::to_string(i) + "." + what;
}

Array normal_array(Shape shape, double stddev, std::mt19937_64& rng) {
  Array a(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : a.values()) v = dist(rng);
  return a;
}

}  // namespace

std::size_t ModelConfig::rows() const {
  std::size_t extent = input_size;
  for (auto s : strides) extent = (extent + 2 * kPad - kKernel) / s + 1;
  return extent;
}

void ModelConfig::validate() const {
  if (channel_plan.empty() || channel_plan.size() != strides.size()) {
    throw std::invalid_argument("model: channel plan and strides must be non-empty and equal length");
  }
  for (auto s : strides)
    if (s == 0) throw std::invalid_argument("model: stride must be >= 1");
  for (auto c : channel_plan)
    if (c == 0) throw std::invalid_argument("model: channel counts must be >= 1");
  if (in_channels == 0 || input_size < kKernel) {
    throw std::invalid_argument("model: input must be at least 3x3 with >= 1 channel");
  }
  if (local_channels < 1 || local_channels > channels()) {
    throw std::invalid_argument("model: need C >= c >= 1, got C=" + std::to_string(channels()) +
                                " c=" + std::to_string(local_channels));
  }
  if (num_identities == 1) {
    throw std::invalid_argument("model: classifier head needs >= 2 identities");
  }
}

ModelConfig ModelConfig::from_keyvalue(const KeyValueConfig& kv) {
  ModelConfig c;
  c.input_size = static_cast<std::size_t>(kv.get_int("input_size", static_cast<long long>(c.input_size)));
  c.in_channels = static_cast<std::size_t>(kv.get_int("in_channels", static_cast<long long>(c.in_channels)));
  c.channel_plan = kv.get_sizes("channel_plan", c.channel_plan);
  c.strides = kv.get_sizes("strides", c.strides);
  c.local_channels = static_cast<std::size_t>(kv.get_int("local_channels", static_cast<long long>(c.local_channels)));
  c.num_identities = static_cast<std::size_t>(kv.get_int("num_identities", static_cast<long long>(c.num_identities)));
  c.validate();
  return c;
}

void ModelConfig::to_keyvalue(KeyValueConfig& kv) const {
  kv.set("input_size", std::to_string(input_size));
  kv.set("in_channels", std::to_string(in_channels));
  kv.set("channel_plan", join_sizes(channel_plan));
  kv.set("strides", join_sizes(strides));
  kv.set("local_channels", std::to_string(local_channels));
  kv.set("num_identities", std::to_string(num_identities));
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  std::size_t in_ch = config_.in_channels;
  for (std::size_t i = 0; i < config_.channel_plan.size(); ++i) {
    const std::size_t out_ch = config_.channel_plan[i];
    const double he = std::sqrt(2.0 / static_cast<double>(in_ch * kKernel * kKernel));
    params_.add(stage_name(i, "weight"), normal_array({out_ch, in_ch, kKernel, kKernel}, he, rng));
    Array bias({out_ch});
    for (auto& v : bias.values()) v = 0.1;
    params_.add(stage_name(i, "bias"), std::move(bias));
    in_ch = out_ch;
  }
  const std::size_t C = config_.channels();
  const double fan_in = 1.0 / std::sqrt(static_cast<double>(C));
  params_.add("local.weight", normal_array({config_.local_channels, C, 1, 1}, fan_in, rng));
  params_.add("local.bias", Array({config_.local_channels}));
  if (config_.num_identities >= 2) {
    params_.add("classifier.weight", normal_array({C, config_.num_identities}, fan_in, rng));
    params_.add("classifier.bias", Array({config_.num_identities}));
  }
}

Model::Model(ModelConfig config, ParamStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const Model reference(config_, 0);
  const auto& want = reference.params().entries();
  if (want.size() != params_.size()) {
    throw std::invalid_argument("model: checkpoint holds " + std::to_string(params_.size()) +
                                " parameters, config expects " + std::to_string(want.size()));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    const auto& have = params_.entries()[i];
    if (have.name != want[i].name || have.value.shape() != want[i].value.shape()) {
      throw std::invalid_argument("model: checkpoint parameter " + have.name + " " +
                                  shape_str(have.value.shape()) + " does not match " +
                                  want[i].name + " " + shape_str(want[i].value.shape()));
    }
  }
}

BoundParams Model::bind(Tape& tape, bool trainable) const {
  BoundParams b;
  for (const auto& e : params_.entries()) {
    b.nodes.push_back(trainable ? tape.parameter(e.value) : tape.constant(e.value));
  }
  return b;
}

NodeId Model::param(const BoundParams& bound, std::string_view name) const {
  const auto& entries = params_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name == name) return bound.nodes.at(i);
  }
  throw std::out_of_range("model has no parameter " + std::string(name));
}

NodeId backbone_forward(Tape& tape, const ModelConfig& config, const Model& model,
                        const BoundParams& bound, NodeId images) {
  const Array& x = tape.value(images);
  if (x.rank() != 4 || x.dim(1) != config.in_channels || x.dim(2) != config.input_size ||
      x.dim(3) != config.input_size) {
    throw std::invalid_argument("backbone: expected [N," + std::to_string(config.in_channels) +
                                "," + std::to_string(config.input_size) + "," +
                                std::to_string(config.input_size) + "] images, got " +
                                shape_str(x.shape()));
  }
  NodeId h = images;
  for (std::size_t i = 0; i < config.channel_plan.size(); ++i) {
    h = ops::conv2d(tape, h, model.param(bound, stage_name(i, "weight")),
                    model.param(bound, stage_name(i, "bias")), config.strides[i], kPad);
    h = ops::relu(tape, h);
  }
  return h;
}

NodeId global_branch(Tape& tape, NodeId feature_map) {
  return ops::mean_pool(tape, feature_map, {2, 3});
}

NodeId local_branch(Tape& tape, NodeId feature_map, NodeId reduce_weight, NodeId reduce_bias) {
  const Shape fshape = tape.value(feature_map).shape();
  const std::size_t n = fshape.at(0), C = fshape.at(1), h = fshape.at(2);
  const std::size_t c = tape.value(reduce_weight).dim(0);
  NodeId rows = ops::mean_pool(tape, feature_map, {3});            // [N, C, H]
  rows = ops::reshape(tape, rows, {n, C, h, 1});
  NodeId reduced = ops::conv2d(tape, rows, reduce_weight, reduce_bias, 1, 0);  // [N, c, H, 1]
  reduced = ops::reshape(tape, reduced, {n, c, h});
  reduced = ops::permute(tape, reduced, {0, 2, 1});                // [N, H, c]
  return ops::reshape(tape, reduced, {n * h, c});
}

NodeId classifier_head(Tape& tape, NodeId global, NodeId weight, NodeId bias) {
  return ops::add_bias(tape, ops::matmul(tape, global, weight), bias);
}

ModelOutputs Model::forward(Tape& tape, const BoundParams& bound, NodeId images,
                            bool with_local, bool with_classifier) const {
  ModelOutputs out;
  out.feature_map = backbone_forward(tape, config_, *this, bound, images);
  out.global = global_branch(tape, out.feature_map);
  if (with_local) {
    out.local = local_branch(tape, out.feature_map, param(bound, "local.weight"),
                             param(bound, "local.bias"));
  }
  if (with_classifier) {
    if (config_.num_identities < 2) {
      throw std::logic_error("model was built without a classifier head");
    }
    out.logits = classifier_head(tape, out.global, param(bound, "classifier.weight"),
                                 param(bound, "classifier.bias"));
  }
  return out;
}

Embeddings embed(const Model& model, const Array& images, bool with_local) {
  Tape tape;
  const auto bound = model.bind(tape, false);
  const NodeId x = tape.constant(images);
  const auto out = model.forward(tape, bound, x, with_local, false);
  Embeddings e;
  e.global = tape.value(out.global);
  if (out.local) {
    const auto& cfg = model.config();
    e.local = tape.value(*out.local)
                  .reshaped({images.dim(0), cfg.rows(), cfg.local_channels});
  }
  return e;
}

}  // namespace areid
