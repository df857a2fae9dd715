#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "alignreid/keyvalue.hpp"
#include "alignreid/params.hpp"
#include "alignreid/tape.hpp"

namespace areid {

// Geometry of the embedding network. The backbone is a stack of 3x3
// convolution + rectifier stages; the last stage's channel count is C and
// its spatial extent is H x W.
struct ModelConfig {
  std::size_t input_size = 56;
  std::size_t in_channels = 3;
  std::vector<std::size_t> channel_plan = {8, 16, 32, 32};
  std::vector<std::size_t> strides = {2, 2, 2, 1};
  std::size_t local_channels = 8;  // c
  std::size_t num_identities = 0;  // 0 disables the classifier head

  std::size_t channels() const { return channel_plan.back(); }  // C
  std::size_t rows() const;                                     // H
  std::size_t cols() const { return rows(); }                   // W

  void validate() const;

  static ModelConfig from_keyvalue(const KeyValueConfig& kv);
  void to_keyvalue(KeyValueConfig& kv) const;
};

// Parameter leaves of one model bound onto a tape, index-aligned with the
// model's ParamStore.
struct BoundParams {
  std::vector<NodeId> nodes;
};

struct ModelOutputs {
  NodeId feature_map;              // [N, C, H, W]
  NodeId global;                   // [N, C]
  std::optional<NodeId> local;     // [N*H, c], rows grouped by image
  std::optional<NodeId> logits;    // [N, num_identities]
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  Model(ModelConfig config, ParamStore params);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  BoundParams bind(Tape& tape, bool trainable = true) const;

  // images: [N, in_channels, S, S]
  ModelOutputs forward(Tape& tape, const BoundParams& bound, NodeId images,
                       bool with_local, bool with_classifier) const;

  NodeId param(const BoundParams& bound, std::string_view name) const;

 private:
  ModelConfig config_;
  ParamStore params_;
};

NodeId backbone_forward(Tape& tape, const ModelConfig& config, const Model& model,
                        const BoundParams& bound, NodeId images);
NodeId global_branch(Tape& tape, NodeId feature_map);
NodeId local_branch(Tape& tape, NodeId feature_map, NodeId reduce_weight,
                    NodeId reduce_bias);
NodeId classifier_head(Tape& tape, NodeId global, NodeId weight, NodeId bias);

// Inference without gradients: global features [N, C] and, when requested,
// local features [N, H, c].
struct Embeddings {
  Array global;
  std::optional<Array> local;
};
Embeddings embed(const Model& model, const Array& images, bool with_local);

}  // namespace areid
