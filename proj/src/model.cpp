// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/model.hpp"

#include <cmath>

namespace ppgnas {

namespace {

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

template <typename T>
const BasicTensor<T> kNoBias{};

}  // namespace

LayerParams init_layer_params(const LayerSpec& s, std::mt19937_64& rng) {
  LayerParams p;
  switch (s.kind) {
    case LayerKind::kConv1d:
      p.tensors.push_back(kaiming_uniform({s.c_out, s.c_in, s.kernel}, s.c_in * s.kernel, rng));
      if (s.has_bias) p.tensors.push_back(Tensor::zeros({s.c_out}, true));
      break;
    case LayerKind::kDWBlock:
      p.tensors.push_back(kaiming_uniform({s.c_in, 1, s.kernel}, s.kernel, rng));
      if (s.has_bias) p.tensors.push_back(Tensor::zeros({s.c_in}, true));
      p.tensors.push_back(kaiming_uniform({s.c_out, s.c_in, 1}, s.c_in, rng));
      if (s.has_bias) p.tensors.push_back(Tensor::zeros({s.c_out}, true));
      break;
    case LayerKind::kBatchNorm:
      p.tensors.push_back(Tensor::full({s.c_out}, 1.0f, true));
      p.tensors.push_back(Tensor::zeros({s.c_out}, true));
      p.bn.running_mean.assign(s.c_out, 0.0f);
      p.bn.running_var.assign(s.c_out, 1.0f);
      break;
    case LayerKind::kLinear:
      p.tensors.push_back(kaiming_uniform({s.c_out, s.c_in}, s.c_in, rng));
      if (s.has_bias) p.tensors.push_back(Tensor::zeros({s.c_out}, true));
      break;
    default:
      break;
  }
  return p;
}

template <typename T>
BasicTensor<T> forward_layer(const LayerSpec& s, BasicLayerParams<T>& p, const std::vector<BasicTensor<T>>& in,
                             bool training) {
  const auto& t = p.tensors;
  switch (s.kind) {
    case LayerKind::kConv1d:
      return ops::conv1d(in[0], t[0], s.has_bias ? t[1] : kNoBias<T>, s.stride, s.padding);
    case LayerKind::kDWBlock: {
      const std::size_t pw = s.has_bias ? 2 : 1;
      auto mid = ops::depthwise_conv1d(in[0], t[0], s.has_bias ? t[1] : kNoBias<T>, s.stride, s.padding);
      return ops::conv1d(mid, t[pw], s.has_bias ? t[pw + 1] : kNoBias<T>, 1, 0);
    }
    case LayerKind::kIdentity:
      return in[0];
    case LayerKind::kReLU:
      return ops::relu(in[0]);
    case LayerKind::kBatchNorm:
      return ops::batch_norm(in[0], t[0], t[1], p.bn, training);
    case LayerKind::kMaxPool:
      return ops::max_pool1d(in[0], s.kernel, s.stride);
    case LayerKind::kAvgPool:
      return ops::avg_pool1d(in[0], s.kernel, s.stride);
    case LayerKind::kUpsample:
      return ops::upsample2(in[0]);
    case LayerKind::kAdd:
      return ops::add(in[0], in[1]);
    case LayerKind::kConcat:
      return ops::concat_channels(in[0], in[1]);
    case LayerKind::kLinear:
      return ops::linear(in[0], t[0], s.has_bias ? t[1] : kNoBias<T>);
    case LayerKind::kGlobalAvgPool:
      return ops::global_avg_pool(in[0]);
  }
  fail(ErrorKind::kShape, "unhandled layer kind");
}

template Tensor forward_layer<float>(const LayerSpec&, LayerParams&, const std::vector<Tensor>&, bool);
template Tensor64 forward_layer<double>(const LayerSpec&, BasicLayerParams<double>&, const std::vector<Tensor64>&,
                                        bool);

LayerParams clone_params(const LayerParams& p, bool requires_grad) {
  LayerParams out;
  for (const auto& t : p.tensors) out.tensors.push_back(t.clone_leaf(requires_grad));
  out.bn = p.bn;
  return out;
}

template <typename To, typename From>
BasicLayerParams<To> convert_params(const BasicLayerParams<From>& p, bool requires_grad) {
  BasicLayerParams<To> out;
  for (const auto& t : p.tensors) {
    std::vector<To> v(t.data().begin(), t.data().end());
    out.tensors.push_back(BasicTensor<To>::from(t.shape(), std::move(v), requires_grad));
  }
  out.bn.running_mean.assign(p.bn.running_mean.begin(), p.bn.running_mean.end());
  out.bn.running_var.assign(p.bn.running_var.begin(), p.bn.running_var.end());
  out.bn.momentum = static_cast<To>(p.bn.momentum);
  out.bn.eps = static_cast<To>(p.bn.eps);
  return out;
}

template BasicLayerParams<double> convert_params<double, float>(const BasicLayerParams<float>&, bool);
template BasicLayerParams<float> convert_params<float, double>(const BasicLayerParams<double>&, bool);

Model::Model(Graph graph, std::vector<LayerParams> params) : graph_(std::move(graph)), params_(std::move(params)) {
  if (params_.size() != graph_.size()) fail(ErrorKind::kShape, "model parameter list does not match graph size");
}

Model Model::initialize(const Graph& graph, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LayerParams> params;
  params.reserve(graph.size());
  for (const auto& n : graph.nodes()) params.push_back(init_layer_params(n.spec, rng));
  return Model(graph, std::move(params));
}

Tensor Model::forward(const Tensor& x, bool training) {
  const auto in = graph_.input_shape();
  if (x.ndim() != 3 || x.dim(1) != in.channels || x.dim(2) != in.length) {
    fail(ErrorKind::kShape, "model input " + shape_str(x.shape()) + " does not match graph input [N," +
                                std::to_string(in.channels) + "," + std::to_string(in.length) + "]");
  }
  std::vector<Tensor> values(graph_.size());
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < graph_.size(); ++i) {
    const auto& node = graph_.nodes()[i];
    inputs.clear();
    for (int id : node.inputs) inputs.push_back(id == kGraphInput ? x : values[static_cast<std::size_t>(id)]);
    values[i] = forward_layer(node.spec, params_[i], inputs, training);
  }
  return values.back();
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (const auto& p : params_)
    for (const auto& t : p.tensors) out.push_back(t);
  return out;
}

void Model::set_trainable(bool on) {
  for (auto& p : params_)
    for (auto& t : p.tensors) t.set_requires_grad(on);
}

Model Model::clone() const {
  std::vector<LayerParams> params;
  params.reserve(params_.size());
  for (const auto& p : params_) params.push_back(clone_params(p, true));
  return Model(graph_, std::move(params));
}

}  // namespace ppgnas
