// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ppgnas/graph.hpp"
#include "ppgnas/ops.hpp"
#include "ppgnas/tensor.hpp"

namespace ppgnas {

// Tensors owned by one layer, in a fixed per-kind order:
//   Conv1d    [weight [Co,Ci,K], bias [Co]?]
//   DWBlock   [dw_weight [Ci,1,K], dw_bias [Ci]?, pw_weight [Co,Ci,1], pw_bias [Co]?]
//   BatchNorm [gamma [C], beta [C]] + running statistics in `bn`
//   Linear    [weight [Out,In], bias [Out]?]
template <typename T>
struct BasicLayerParams {
  std::vector<BasicTensor<T>> tensors;
  ops::BatchNormStats<T> bn;
};

using LayerParams = BasicLayerParams<float>;

// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases, unit BN.
LayerParams init_layer_params(const LayerSpec& spec, std::mt19937_64& rng);

template <typename T>
BasicTensor<T> forward_layer(const LayerSpec& spec, BasicLayerParams<T>& params,
                             const std::vector<BasicTensor<T>>& inputs, bool training);

// Deep copy with fresh leaves.
LayerParams clone_params(const LayerParams& p, bool requires_grad = true);

template <typename To, typename From>
BasicLayerParams<To> convert_params(const BasicLayerParams<From>& p, bool requires_grad = true);

class Model {
 public:
  Model() = default;
  Model(Graph graph, std::vector<LayerParams> params);

  static Model initialize(const Graph& graph, std::uint64_t seed);

  // x is [N, C, L] matching the graph input; returns the output node's value.
  Tensor forward(const Tensor& x, bool training);

  const Graph& graph() const { return graph_; }
  std::vector<LayerParams>& params() { return params_; }
  const std::vector<LayerParams>& params() const { return params_; }

  std::vector<Tensor> parameters() const;
  void set_trainable(bool on);
  Model clone() const;

 private:
  Graph graph_;
  std::vector<LayerParams> params_;
};

}  // namespace ppgnas
