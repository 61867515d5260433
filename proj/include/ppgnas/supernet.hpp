// SPDX-License-Identifier: Apache-2.0
//
// Differentiable architecture search over {Conv1d, DWBlock, Identity} per
// convolution position. Each position mixes its alternatives' outputs with
// softmax(theta); the size regulariser is the softmax-weighted parameter
// count, so d(cost)/d(theta) is exact.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ppgnas/graph.hpp"
#include "ppgnas/model.hpp"
#include "ppgnas/train.hpp"

namespace ppgnas {

struct ChoiceBlock {
  int node = -1;            // the searched Conv1d node in the seed graph
  int companion_bn = -1;    // BatchNorm folded into the C/DW alternatives, or -1
  std::vector<LayerSpec> alternatives;  // C, DW, then ID when legal
  std::vector<LayerParams> alt_params;
  std::vector<LayerParams> alt_bn;  // per alternative; empty tensors for ID
  Tensor theta;                      // one logit per alternative

  // Parameters kept when alternative i is selected (its BatchNorm included).
  std::vector<std::size_t> costs() const;
  bool has_identity() const;
};

class SuperNet {
 public:
  SuperNet() = default;
  SuperNet(Graph base, std::vector<LayerParams> fixed, std::vector<ChoiceBlock> blocks);

  Tensor forward(const Tensor& x, bool training);

  const Graph& base() const { return base_; }
  std::vector<ChoiceBlock>& blocks() { return blocks_; }
  const std::vector<ChoiceBlock>& blocks() const { return blocks_; }
  std::vector<LayerParams>& fixed_params() { return fixed_; }
  const std::vector<LayerParams>& fixed_params() const { return fixed_; }

  // Parameters of layers outside every choice block.
  std::size_t fixed_cost() const;

  std::vector<Tensor> weight_parameters() const;
  std::vector<Tensor> arch_parameters() const;

  // Block index owning node `id` (its conv or its companion BN), or -1.
  int block_of(int id) const { return owner_[static_cast<std::size_t>(id)]; }

 private:
  Graph base_;
  std::vector<LayerParams> fixed_;
  std::vector<ChoiceBlock> blocks_;
  std::vector<int> owner_;
};

// Every Conv1d becomes a choice block {C, DW} plus ID when its input and
// output shapes match. A BatchNorm that is the conv's only consumer moves into
// the block. Thetas start at zero. Throws if the seed has no Conv1d.
SuperNet expand_to_supernet(const Graph& seed, std::uint64_t init_seed);
// As above, with the C alternative (and its BatchNorm) inheriting the seed's weights.
SuperNet expand_to_supernet(const Model& seed, std::uint64_t init_seed);

// y = sum_i softmax(theta)_i * alt_i(x); alt_bn may be null.
template <typename T>
BasicTensor<T> mixture_forward(const std::vector<LayerSpec>& alternatives,
                               std::vector<BasicLayerParams<T>>& alt_params,
                               std::vector<BasicLayerParams<T>>* alt_bn, const BasicTensor<T>& theta,
                               const BasicTensor<T>& x, bool training);

Tensor mixture_forward(ChoiceBlock& block, const Tensor& x, bool training);

// R = sum_blocks sum_i softmax(theta)_i * cost_i + fixed parameters.
Tensor expected_cost(const SuperNet& sn);

// MSE(pred, target) + lambda * R. Throws on negative lambda.
Tensor nas_loss(const Tensor& pred, const Tensor& target, const Tensor& cost, double lambda);
Tensor64 nas_loss(const Tensor64& pred, const Tensor64& target, const Tensor64& cost, double lambda);

struct NasConfig {
  double lambda = 0.0;
  float lr_weights = 1e-3f;
  float lr_theta = 1e-2f;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  bool train_theta = true;  // false freezes the architecture logits
};

// Per epoch: Adam on weights over `train` with theta frozen, then Adam on
// theta over `val` with weights frozen.
std::vector<EpochStats> train_supernet(SuperNet& sn, const TensorDataset& train, const TensorDataset& val,
                                       const NasConfig& cfg);

// Index of the selected alternative: argmax theta, ties to the cheapest.
std::size_t selected_alternative(const ChoiceBlock& block);

// Keeps each block's selected alternative with its weights. Identity
// selections splice the block (and its BatchNorm) out; a ReLU left consuming
// another ReLU's output is dropped as well.
Model discretize(const SuperNet& sn);

struct ParetoPoint {
  double lambda = 0.0;
  std::optional<double> mae_sbp;
  std::optional<double> mae_dbp;
  std::size_t params = 0;
  std::size_t size_bytes = 0;
  std::uint64_t macs = 0;
};

// 18 log-spaced values over [1e-11, 1e-7].
std::vector<double> default_lambda_grid();
std::vector<double> log_grid(double lo, double hi, std::size_t count);

// Indices of points not dominated in (size, error); a point is dominated when
// another is no worse in both coordinates and strictly better in one.
std::vector<std::size_t> pareto_front(const std::vector<std::pair<double, double>>& size_error);

}  // namespace ppgnas
