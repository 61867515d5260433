// SPDX-License-Identifier: Apache-2.0
//
// int8 quantisation: per-tensor min-max affine weights, PaCT-clipped
// activations and 32-bit biases. Rounding is round-half-to-even throughout.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ppgnas/model.hpp"
#include "ppgnas/train.hpp"

namespace ppgnas {

inline constexpr float kMinAlpha = 1e-3f;

struct QuantParams {
  float scale = 1.0f;
  std::int32_t zero_point = 0;
};

// scale = (max - min) / 255 over the range extended to include 0;
// zero_point = round(-128 - min / scale) clamped to [-128, 127]. An all-zero
// tensor yields scale 1, zero_point 0. Throws kNumeric on NaN/Inf.
QuantParams minmax_affine_params(std::span<const float> values);

float round_half_even(float x);
std::int8_t quantize_value(float x, const QuantParams& q, std::int32_t qmin = -128, std::int32_t qmax = 127);
float dequantize_value(std::int32_t q, const QuantParams& p);

// clamp(round(x/scale) + zp, qmin, qmax) dequantised; straight-through
// gradient (1 inside the representable range, 0 outside).
template <typename T>
BasicTensor<T> fake_quant(const BasicTensor<T>& x, const QuantParams& q, std::int32_t qmin = -128,
                          std::int32_t qmax = 127);

// Bias rounded onto the int32 grid of `scale` (zero point 0), straight-through.
template <typename T>
BasicTensor<T> fake_quant_bias(const BasicTensor<T>& b, double scale);

// PaCT: clamp(x, 0, alpha) on a 255-step grid (unsigned) or clamp(x, -alpha,
// alpha) on a 127-step-per-side grid (signed). d/dalpha is +1 above the clip
// (and -1 below -alpha when signed); d/dx is 1 strictly inside the clip.
template <typename T>
BasicTensor<T> pact(const BasicTensor<T>& x, const BasicTensor<T>& alpha, bool is_signed);

// Storage parameters of a PaCT quantiser. Unsigned ranges map onto int8 with
// zero_point -128; signed ranges are symmetric with zero_point 0.
struct ActQuantizer {
  Tensor alpha;  // [1], trainable, kept >= kMinAlpha
  bool is_signed = false;

  QuantParams params() const;
  std::int32_t qmin() const { return is_signed ? -127 : -128; }
  std::int32_t qmax() const { return 127; }
};

// Folds every BatchNorm into the Conv1d / DWBlock (pointwise stage) / Linear
// that feeds it. Throws kInvalidArgument for a BatchNorm with no such producer.
Model fold_batch_norm(const Model& model);

// A BatchNorm-free graph with fake-quantised weights and activations.
class QatModel {
 public:
  // Folds BatchNorm, assigns quantisers and initialises every alpha to the
  // 99.9th percentile of the activations seen on `calibration` (inputs [N,C,L]).
  static QatModel prepare(const Model& float_model, const Tensor& calibration);

  Tensor forward(const Tensor& x, bool training);
  // Float (unquantised) forward of the folded model.
  Tensor forward_float(const Tensor& x);
  // Fake-quantised value of every node (no gradient history).
  std::vector<Tensor> trace(const Tensor& x);

  const Graph& graph() const { return model_.graph(); }
  const Model& folded() const { return model_; }
  Model& folded() { return model_; }

  std::vector<Tensor> parameters() const;
  void clamp_alphas();

  const std::vector<ActQuantizer>& quantizers() const { return quantizers_; }
  std::vector<ActQuantizer>& quantizers() { return quantizers_; }
  // Quantiser defining each node's output grid (0 is the network input).
  int domain_of(int id) const { return id == kGraphInput ? 0 : domain_[static_cast<std::size_t>(id)]; }
  // Quantiser owned by a node (-1 when the node inherits its input grid).
  int own_quantizer(int id) const { return own_[static_cast<std::size_t>(id)]; }
  // Quantiser on the depthwise->pointwise tensor of a DWBlock, or -1.
  int mid_quantizer(int id) const { return mid_[static_cast<std::size_t>(id)]; }
  // True for a ReLU that is absorbed by an unsigned quantiser on its input.
  bool fused_relu(int id) const { return fused_relu_[static_cast<std::size_t>(id)]; }

 private:
  Tensor run(const Tensor& x, bool training, bool quantized, std::vector<std::vector<float>>* observe,
             std::vector<Tensor>* trace = nullptr);

  Model model_;
  std::vector<ActQuantizer> quantizers_;
  std::vector<int> domain_;
  std::vector<int> own_;
  std::vector<int> mid_;
  std::vector<bool> fused_relu_;
};

// Fine-tunes weights and PaCT alphas through the fake-quantised forward pass
// with Adam (default lr 1e-4). Non-finite loss throws kNumeric.
std::vector<EpochStats> qat_finetune(QatModel& qm, const TensorDataset& train, const TrainConfig& cfg);

std::vector<float> predict(QatModel& qm, const TensorDataset& data, std::size_t batch_size = 256);

}  // namespace ppgnas
