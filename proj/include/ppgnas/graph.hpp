// SPDX-License-Identifier: Apache-2.0
//
// Typed 1D-CNN layer graphs. A Graph is a list of nodes in topological order;
// every node's output shape is inferred when it is added, so an invalid graph
// can never be constructed.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ppgnas {

enum class LayerKind {
  kConv1d,
  kDWBlock,  // depthwise(c_in, k, stride) then pointwise(c_in -> c_out)
  kIdentity,
  kReLU,
  kBatchNorm,
  kMaxPool,
  kAvgPool,
  kUpsample,  // nearest neighbour x2
  kAdd,
  kConcat,  // along channels
  kLinear,
  kGlobalAvgPool,
};

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::kIdentity;
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool has_bias = false;

  static LayerSpec conv1d(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride = 1,
                          std::size_t padding = 0, bool bias = true);
  static LayerSpec dw_block(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride = 1,
                            std::size_t padding = 0, bool bias = true);
  static LayerSpec identity();
  static LayerSpec relu();
  static LayerSpec batch_norm(std::size_t channels);
  static LayerSpec max_pool(std::size_t kernel, std::size_t stride);
  static LayerSpec avg_pool(std::size_t kernel, std::size_t stride);
  static LayerSpec upsample();
  static LayerSpec add();
  static LayerSpec concat();
  static LayerSpec linear(std::size_t in, std::size_t out, bool bias = true);
  static LayerSpec global_avg_pool();

  bool is_conv_like() const { return kind == LayerKind::kConv1d || kind == LayerKind::kDWBlock; }
  bool operator==(const LayerSpec&) const = default;
};

// Trainable scalar count of one layer.
std::size_t param_count(const LayerSpec& spec);

// Per-sample activation shape.
struct FeatureShape {
  std::size_t channels = 0;
  std::size_t length = 0;
  bool operator==(const FeatureShape&) const = default;
};

inline constexpr int kGraphInput = -1;

struct GraphNode {
  LayerSpec spec;
  std::vector<int> inputs;  // earlier node indices or kGraphInput
  FeatureShape out_shape;
};

enum class OutputArity { kScalar, kSeries };

class Graph {
 public:
  Graph() = default;
  Graph(FeatureShape input, OutputArity arity) : input_(input), arity_(arity) {}

  // Appends a node and returns its id. Throws kShape / kGeometry when the
  // layer is inconsistent with its inputs.
  int add(const LayerSpec& spec, std::vector<int> inputs);

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const GraphNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }
  FeatureShape input_shape() const { return input_; }
  OutputArity arity() const { return arity_; }
  FeatureShape shape_of(int id) const { return id == kGraphInput ? input_ : node(id).out_shape; }
  int output_node() const { return static_cast<int>(nodes_.size()) - 1; }
  FeatureShape output_shape() const { return shape_of(output_node()); }

  // Number of nodes consuming the output of `id`.
  std::size_t consumer_count(int id) const;

 private:
  FeatureShape input_;
  OutputArity arity_ = OutputArity::kScalar;
  std::vector<GraphNode> nodes_;
};

// Output shape of `spec` for the given inputs; throws on inconsistency.
FeatureShape infer_shape(const LayerSpec& spec, const std::vector<FeatureShape>& inputs);

std::size_t param_count(const Graph& g);

// Multiply-accumulate count of one inference over a single window.
std::uint64_t mac_count(const Graph& g);

struct ResNetConfig {
  std::size_t input_len = 625;
  std::size_t blocks = 4;  // residual blocks per stage
  std::size_t base_channels = 20;
  std::size_t stages = 4;  // channels double and length halves per stage
  std::size_t kernel = 3;
  std::size_t stem_kernel = 7;
};

struct UNetConfig {
  std::size_t input_len = 624;
  std::size_t depth = 2;
  std::size_t base_channels = 8;
  std::size_t kernel = 9;
};

// Residual scalar regressor: stem conv, stacked conv-BN-ReLU-conv-BN + skip
// blocks, global average pool and a one-output linear head.
Graph build_resnet1d(const ResNetConfig& cfg);

// Encoder/decoder sig2sig reconstructor emitting a 1-channel series of
// input_len samples.
Graph build_unet1d(const UNetConfig& cfg);

}  // namespace ppgnas
