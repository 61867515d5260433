// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/graph.hpp"

#include <array>
#include <utility>

#include "ppgnas/error.hpp"
#include "ppgnas/ops.hpp"

namespace ppgnas {

namespace {

constexpr std::array<std::pair<LayerKind, const char*>, 12> kKindNames{{
    {LayerKind::kConv1d, "conv1d"},
    {LayerKind::kDWBlock, "dw_block"},
    {LayerKind::kIdentity, "identity"},
    {LayerKind::kReLU, "relu"},
    {LayerKind::kBatchNorm, "batch_norm"},
    {LayerKind::kMaxPool, "max_pool"},
    {LayerKind::kAvgPool, "avg_pool"},
    {LayerKind::kUpsample, "upsample"},
    {LayerKind::kAdd, "add"},
    {LayerKind::kConcat, "concat"},
    {LayerKind::kLinear, "linear"},
    {LayerKind::kGlobalAvgPool, "global_avg_pool"},
}};

void expect_inputs(const LayerSpec& spec, const std::vector<FeatureShape>& inputs, std::size_t n) {
  if (inputs.size() != n) {
    fail(ErrorKind::kShape, std::string(layer_kind_name(spec.kind)) + " takes " + std::to_string(n) +
                                " input(s), got " + std::to_string(inputs.size()));
  }
}

void expect_channels(const LayerSpec& spec, const FeatureShape& in, std::size_t c) {
  if (in.channels != c) {
    fail(ErrorKind::kShape, std::string(layer_kind_name(spec.kind)) + " expects " + std::to_string(c) +
                                " input channels, got " + std::to_string(in.channels));
  }
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

LayerKind layer_kind_from_name(const std::string& name) {
  for (const auto& [k, n] : kKindNames)
    if (name == n) return k;
  fail(ErrorKind::kIo, "unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::conv1d(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride,
                            std::size_t padding, bool bias) {
  return {LayerKind::kConv1d, c_in, c_out, kernel, stride, padding, bias};
}
LayerSpec LayerSpec::dw_block(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t stride,
                              std::size_t padding, bool bias) {
  return {LayerKind::kDWBlock, c_in, c_out, kernel, stride, padding, bias};
}
LayerSpec LayerSpec::identity() { return {LayerKind::kIdentity}; }
LayerSpec LayerSpec::relu() { return {LayerKind::kReLU}; }
LayerSpec LayerSpec::batch_norm(std::size_t channels) {
  return {LayerKind::kBatchNorm, channels, channels, 1, 1, 0, false};
}
LayerSpec LayerSpec::max_pool(std::size_t kernel, std::size_t stride) {
  return {LayerKind::kMaxPool, 0, 0, kernel, stride, 0, false};
}
LayerSpec LayerSpec::avg_pool(std::size_t kernel, std::size_t stride) {
  return {LayerKind::kAvgPool, 0, 0, kernel, stride, 0, false};
}
LayerSpec LayerSpec::upsample() { return {LayerKind::kUpsample, 0, 0, 1, 1, 0, false}; }
LayerSpec LayerSpec::add() { return {LayerKind::kAdd}; }
LayerSpec LayerSpec::concat() { return {LayerKind::kConcat}; }
LayerSpec LayerSpec::linear(std::size_t in, std::size_t out, bool bias) {
  return {LayerKind::kLinear, in, out, 1, 1, 0, bias};
}
LayerSpec LayerSpec::global_avg_pool() { return {LayerKind::kGlobalAvgPool}; }

std::size_t param_count(const LayerSpec& s) {
  const std::size_t b = s.has_bias ? 1 : 0;
  switch (s.kind) {
    case LayerKind::kConv1d:
      return s.c_out * s.c_in * s.kernel + b * s.c_out;
    case LayerKind::kDWBlock:
      return (s.c_in * s.kernel + b * s.c_in) + (s.c_out * s.c_in + b * s.c_out);
    case LayerKind::kBatchNorm:
      return 2 * s.c_out;
    case LayerKind::kLinear:
      return s.c_in * s.c_out + b * s.c_out;
    default:
      return 0;
  }
}

FeatureShape infer_shape(const LayerSpec& spec, const std::vector<FeatureShape>& in) {
  switch (spec.kind) {
    case LayerKind::kConv1d:
    case LayerKind::kDWBlock: {
      expect_inputs(spec, in, 1);
      expect_channels(spec, in[0], spec.c_in);
      if (spec.c_out == 0) fail(ErrorKind::kShape, "convolution with zero output channels");
      return {spec.c_out, ops::window_out_len(in[0].length, spec.kernel, spec.stride, spec.padding)};
    }
    case LayerKind::kIdentity:
    case LayerKind::kReLU:
      expect_inputs(spec, in, 1);
      return in[0];
    case LayerKind::kBatchNorm:
      expect_inputs(spec, in, 1);
      expect_channels(spec, in[0], spec.c_out);
      return in[0];
    case LayerKind::kMaxPool:
    case LayerKind::kAvgPool:
      expect_inputs(spec, in, 1);
      return {in[0].channels, ops::window_out_len(in[0].length, spec.kernel, spec.stride, 0)};
    case LayerKind::kUpsample:
      expect_inputs(spec, in, 1);
      return {in[0].channels, in[0].length * 2};
    case LayerKind::kAdd:
      expect_inputs(spec, in, 2);
      if (!(in[0] == in[1])) fail(ErrorKind::kShape, "add: operand shapes differ");
      return in[0];
    case LayerKind::kConcat:
      expect_inputs(spec, in, 2);
      if (in[0].length != in[1].length) fail(ErrorKind::kShape, "concat: operand lengths differ");
      return {in[0].channels + in[1].channels, in[0].length};
    case LayerKind::kLinear:
      expect_inputs(spec, in, 1);
      expect_channels(spec, in[0], spec.c_in);
      if (in[0].length != 1) fail(ErrorKind::kShape, "linear: input length must be 1 (apply global pooling first)");
      return {spec.c_out, 1};
    case LayerKind::kGlobalAvgPool:
      expect_inputs(spec, in, 1);
      return {in[0].channels, 1};
  }
  fail(ErrorKind::kShape, "unhandled layer kind");
}

int Graph::add(const LayerSpec& spec, std::vector<int> inputs) {
  std::vector<FeatureShape> shapes;
  const int next = static_cast<int>(nodes_.size());
  for (int id : inputs) {
    if (id != kGraphInput && (id < 0 || id >= next)) {
      fail(ErrorKind::kShape, "node input " + std::to_string(id) + " does not precede node " + std::to_string(next));
    }
    shapes.push_back(shape_of(id));
  }
  GraphNode node{spec, std::move(inputs), infer_shape(spec, shapes)};
  if (node.out_shape.length == 0 || node.out_shape.channels == 0) {
    fail(ErrorKind::kGeometry, "node " + std::to_string(next) + " has an empty output");
  }
  nodes_.push_back(std::move(node));
  return next;
}

std::size_t Graph::consumer_count(int id) const {
  std::size_t n = 0;
  for (const auto& node : nodes_)
    for (int in : node.inputs)
      if (in == id) ++n;
  return n;
}

std::size_t param_count(const Graph& g) {
  std::size_t total = 0;
  for (const auto& n : g.nodes()) total += param_count(n.spec);
  return total;
}

std::uint64_t mac_count(const Graph& g) {
  std::uint64_t macs = 0;
  for (const auto& n : g.nodes()) {
    const auto& s = n.spec;
    const std::uint64_t lout = n.out_shape.length;
    switch (s.kind) {
      case LayerKind::kConv1d:
        macs += lout * s.c_out * s.c_in * s.kernel;
        break;
      case LayerKind::kDWBlock:
        macs += lout * s.c_in * s.kernel + lout * s.c_out * s.c_in;
        break;
      case LayerKind::kLinear:
        macs += static_cast<std::uint64_t>(s.c_in) * s.c_out;
        break;
      default:
        break;
    }
  }
  return macs;
}

Graph build_resnet1d(const ResNetConfig& cfg) {
  if (cfg.input_len < 32) fail(ErrorKind::kInvalidArgument, "resnet input_len must be >= 32");
  if (cfg.blocks == 0 || cfg.stages == 0 || cfg.base_channels == 0) {
    fail(ErrorKind::kInvalidArgument, "resnet blocks, stages and base_channels must be positive");
  }
  if (cfg.kernel % 2 == 0 || cfg.stem_kernel % 2 == 0) {
    fail(ErrorKind::kInvalidArgument, "resnet kernels must be odd");
  }
  Graph g({1, cfg.input_len}, OutputArity::kScalar);
  const std::size_t k = cfg.kernel, pad = k / 2;
  int x = g.add(LayerSpec::conv1d(1, cfg.base_channels, cfg.stem_kernel, 1, cfg.stem_kernel / 2), {kGraphInput});
  x = g.add(LayerSpec::batch_norm(cfg.base_channels), {x});
  x = g.add(LayerSpec::relu(), {x});
  std::size_t c_in = cfg.base_channels;
  for (std::size_t s = 0; s < cfg.stages; ++s) {
    const std::size_t c = cfg.base_channels << s;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
      const std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
      int y = g.add(LayerSpec::conv1d(c_in, c, k, stride, pad), {x});
      y = g.add(LayerSpec::batch_norm(c), {y});
      y = g.add(LayerSpec::relu(), {y});
      y = g.add(LayerSpec::conv1d(c, c, k, 1, pad), {y});
      y = g.add(LayerSpec::batch_norm(c), {y});
      int skip = x;
      if (c_in != c || stride != 1) {
        skip = g.add(LayerSpec::conv1d(c_in, c, 1, stride, 0), {x});
        skip = g.add(LayerSpec::batch_norm(c), {skip});
      }
      x = g.add(LayerSpec::add(), {y, skip});
      x = g.add(LayerSpec::relu(), {x});
      c_in = c;
    }
  }
  x = g.add(LayerSpec::global_avg_pool(), {x});
  g.add(LayerSpec::linear(c_in, 1), {x});
  return g;
}

Graph build_unet1d(const UNetConfig& cfg) {
  if (cfg.depth == 0 || cfg.base_channels == 0) {
    fail(ErrorKind::kInvalidArgument, "unet depth and base_channels must be positive");
  }
  if (cfg.kernel % 2 == 0) fail(ErrorKind::kInvalidArgument, "unet kernel must be odd");
  const std::size_t div = std::size_t{1} << cfg.depth;
  if (cfg.input_len == 0 || cfg.input_len % div != 0) {
    fail(ErrorKind::kInvalidArgument, "unet input_len " + std::to_string(cfg.input_len) + " is not divisible by 2^" +
                                          std::to_string(cfg.depth));
  }
  Graph g({1, cfg.input_len}, OutputArity::kSeries);
  const std::size_t k = cfg.kernel, pad = k / 2;
  auto conv_bn_relu = [&](int in, std::size_t ci, std::size_t co) {
    int y = g.add(LayerSpec::conv1d(ci, co, k, 1, pad), {in});
    y = g.add(LayerSpec::batch_norm(co), {y});
    return g.add(LayerSpec::relu(), {y});
  };
  int x = kGraphInput;
  std::size_t c_in = 1;
  std::vector<std::pair<int, std::size_t>> skips;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::size_t c = cfg.base_channels << i;
    x = conv_bn_relu(x, c_in, c);
    x = conv_bn_relu(x, c, c);
    skips.emplace_back(x, c);
    x = g.add(LayerSpec::max_pool(2, 2), {x});
    c_in = c;
  }
  const std::size_t c_mid = cfg.base_channels << cfg.depth;
  x = conv_bn_relu(x, c_in, c_mid);
  x = conv_bn_relu(x, c_mid, c_mid);
  c_in = c_mid;
  for (std::size_t i = cfg.depth; i-- > 0;) {
    const auto [skip, c] = skips[i];
    x = g.add(LayerSpec::upsample(), {x});
    x = g.add(LayerSpec::concat(), {x, skip});
    x = conv_bn_relu(x, c_in + c, c);
    x = conv_bn_relu(x, c, c);
    c_in = c;
  }
  g.add(LayerSpec::conv1d(c_in, 1, 1, 1, 0), {x});
  return g;
}

}  // namespace ppgnas
