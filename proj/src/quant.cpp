// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/quant.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>

#include "ppgnas/adam.hpp"
#include "ppgnas/ops.hpp"

namespace ppgnas {

namespace {

template <typename T>
using Node = typename BasicTensor<T>::Node;

const Tensor kNoBias{};

}  // namespace

float round_half_even(float x) { return std::nearbyint(x); }

QuantParams minmax_affine_params(std::span<const float> values) {
  if (values.empty()) fail(ErrorKind::kInvalidArgument, "cannot quantise an empty tensor");
  float lo = 0.0f, hi = 0.0f;
  for (float v : values) {
    if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "cannot quantise a tensor containing NaN/Inf");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) return {1.0f, 0};
  QuantParams q;
  q.scale = (hi - lo) / 255.0f;
  // Exact range ratio, so ties such as [-1, 1] -> -0.5 are not perturbed by the rounded scale.
  const double zp = std::nearbyint(-128.0 - 255.0 * static_cast<double>(lo) / (static_cast<double>(hi) - lo));
  q.zero_point = static_cast<std::int32_t>(std::clamp(zp, -128.0, 127.0));
  return q;
}

std::int8_t quantize_value(float x, const QuantParams& q, std::int32_t qmin, std::int32_t qmax) {
  const float r = std::nearbyint(x / q.scale) + static_cast<float>(q.zero_point);
  return static_cast<std::int8_t>(std::clamp(r, static_cast<float>(qmin), static_cast<float>(qmax)));
}

float dequantize_value(std::int32_t q, const QuantParams& p) {
  return static_cast<float>(q - p.zero_point) * p.scale;
}

template <typename T>
BasicTensor<T> fake_quant(const BasicTensor<T>& x, const QuantParams& q, std::int32_t qmin, std::int32_t qmax) {
  const T s = static_cast<T>(q.scale);
  const T zp = static_cast<T>(q.zero_point);
  const T lo = (static_cast<T>(qmin) - zp) * s;
  const T hi = (static_cast<T>(qmax) - zp) * s;
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T r = std::clamp(std::nearbyint(x.data()[i] / s) + zp, static_cast<T>(qmin), static_cast<T>(qmax));
    out[i] = (r - zp) * s;
  }
  return BasicTensor<T>::make_result(x.shape(), std::move(out), {x}, [lo, hi](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (px.data[i] >= lo && px.data[i] <= hi) g[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> fake_quant_bias(const BasicTensor<T>& b, double scale) {
  const double lim = static_cast<double>(INT32_MAX);
  std::vector<T> out(b.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = std::clamp(std::nearbyint(static_cast<double>(b.data()[i]) / scale), -lim, lim);
    out[i] = static_cast<T>(r * scale);
  }
  return BasicTensor<T>::make_result(b.shape(), std::move(out), {b}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> pact(const BasicTensor<T>& x, const BasicTensor<T>& alpha, bool is_signed) {
  if (alpha.numel() != 1) fail(ErrorKind::kShape, "pact: alpha must be a single value");
  const T a = alpha.data()[0];
  if (!(a > T(0))) fail(ErrorKind::kNumeric, "pact: alpha must be positive");
  const T levels = is_signed ? T(127) : T(255);
  const T s = a / levels;
  const T lo = is_signed ? -a : T(0);
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T c = std::clamp(x.data()[i], lo, a);
    out[i] = std::nearbyint(c / s) * s;
  }
  return BasicTensor<T>::make_result(x.shape(), std::move(out), {x, alpha}, [a, lo, is_signed](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pa = *self.parents[1];
    T galpha = 0;
    std::vector<T>* gx = px.requires_grad ? &px.grad_buffer() : nullptr;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = px.data[i];
      if (v >= a) {
        galpha += self.grad[i];
      } else if (v <= lo) {
        if (is_signed) galpha -= self.grad[i];
      } else if (gx) {
        (*gx)[i] += self.grad[i];
      }
    }
    if (pa.requires_grad) pa.grad_buffer()[0] += galpha;
  });
}

template BasicTensor<float> fake_quant(const BasicTensor<float>&, const QuantParams&, std::int32_t, std::int32_t);
template BasicTensor<double> fake_quant(const BasicTensor<double>&, const QuantParams&, std::int32_t, std::int32_t);
template BasicTensor<float> fake_quant_bias(const BasicTensor<float>&, double);
template BasicTensor<double> fake_quant_bias(const BasicTensor<double>&, double);
template BasicTensor<float> pact(const BasicTensor<float>&, const BasicTensor<float>&, bool);
template BasicTensor<double> pact(const BasicTensor<double>&, const BasicTensor<double>&, bool);

QuantParams ActQuantizer::params() const {
  const float a = alpha.data()[0];
  return is_signed ? QuantParams{a / 127.0f, 0} : QuantParams{a / 255.0f, -128};
}

// --- BatchNorm folding -----------------------------------------------------

Model fold_batch_norm(const Model& model) {
  const Graph& g = model.graph();
  Graph out(g.input_shape(), g.arity());
  std::vector<LayerParams> params;
  std::vector<int> remap(g.size(), INT_MIN);
  std::vector<bool> folded(g.size(), false);
  auto map_in = [&](int id) { return id == kGraphInput ? kGraphInput : remap[static_cast<std::size_t>(id)]; };

  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& node = g.nodes()[i];
    if (folded[i]) continue;
    if (node.spec.kind == LayerKind::kBatchNorm) {
      fail(ErrorKind::kInvalidArgument,
           "BatchNorm node " + std::to_string(i) + " does not directly follow an exclusive conv/linear layer");
    }
    LayerSpec spec = node.spec;
    LayerParams p = clone_params(model.params()[i]);
    const bool foldable = spec.kind == LayerKind::kConv1d || spec.kind == LayerKind::kDWBlock ||
                          spec.kind == LayerKind::kLinear;
    int bn_id = -1;
    if (foldable && g.consumer_count(static_cast<int>(i)) == 1) {
      for (std::size_t j = i + 1; j < g.size(); ++j) {
        const auto& c = g.nodes()[j];
        if (std::find(c.inputs.begin(), c.inputs.end(), static_cast<int>(i)) == c.inputs.end()) continue;
        if (c.spec.kind == LayerKind::kBatchNorm) bn_id = static_cast<int>(j);
        break;
      }
    }
    if (bn_id >= 0) {
      const auto& bnp = model.params()[static_cast<std::size_t>(bn_id)];
      const std::size_t c_out = spec.c_out;
      if (!spec.has_bias) {
        spec.has_bias = true;
        std::vector<Tensor> t;
        if (spec.kind == LayerKind::kDWBlock) {
          t = {p.tensors[0], Tensor::zeros({spec.c_in}, true), p.tensors[1], Tensor::zeros({c_out}, true)};
        } else {
          t = {p.tensors[0], Tensor::zeros({c_out}, true)};
        }
        p.tensors = std::move(t);
      }
      Tensor& w = spec.kind == LayerKind::kDWBlock ? p.tensors[2] : p.tensors[0];
      Tensor& b = spec.kind == LayerKind::kDWBlock ? p.tensors[3] : p.tensors[1];
      const std::size_t per_out = w.numel() / c_out;
      for (std::size_t co = 0; co < c_out; ++co) {
        const float inv = 1.0f / std::sqrt(bnp.bn.running_var[co] + bnp.bn.eps);
        const float f = bnp.tensors[0].data()[co] * inv;
        for (std::size_t k = 0; k < per_out; ++k) w.data()[co * per_out + k] *= f;
        b.data()[co] = (b.data()[co] - bnp.bn.running_mean[co]) * f + bnp.tensors[1].data()[co];
      }
      folded[static_cast<std::size_t>(bn_id)] = true;
    }
    std::vector<int> ins;
    for (int id : node.inputs) ins.push_back(map_in(id));
    remap[i] = out.add(spec, ins);
    params.push_back(std::move(p));
    if (bn_id >= 0) remap[static_cast<std::size_t>(bn_id)] = remap[i];
  }
  const int last = remap.back();
  if (last != out.output_node()) {
    out.add(LayerSpec::identity(), {last});
    params.emplace_back();
  }
  return Model(std::move(out), std::move(params));
}

// --- QAT model ---------------------------------------------------------------

QatModel QatModel::prepare(const Model& float_model, const Tensor& calibration) {
  QatModel qm;
  qm.model_ = fold_batch_norm(float_model);
  const Graph& g = qm.model_.graph();
  const std::size_t n = g.size();
  qm.domain_.assign(n, -1);
  qm.own_.assign(n, -1);
  qm.mid_.assign(n, -1);
  qm.fused_relu_.assign(n, false);

  auto new_quantizer = [&](bool is_signed) {
    qm.quantizers_.push_back({Tensor::full({1}, 1.0f, true), is_signed});
    return static_cast<int>(qm.quantizers_.size()) - 1;
  };
  new_quantizer(true);  // network input

  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = g.nodes()[i];
    const int id = static_cast<int>(i);
    bool sole_relu = false;
    if (g.consumer_count(id) == 1) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto& c = g.nodes()[j];
        if (std::find(c.inputs.begin(), c.inputs.end(), id) != c.inputs.end()) {
          sole_relu = c.spec.kind == LayerKind::kReLU;
          break;
        }
      }
    }
    auto unsigned_input = [&](std::size_t k) {
      return !qm.quantizers_[static_cast<std::size_t>(qm.domain_of(node.inputs[k]))].is_signed;
    };
    switch (node.spec.kind) {
      case LayerKind::kDWBlock:
        qm.mid_[i] = new_quantizer(true);
        [[fallthrough]];
      case LayerKind::kConv1d:
      case LayerKind::kLinear:
      case LayerKind::kAdd:
        qm.own_[i] = new_quantizer(!sole_relu);
        break;
      case LayerKind::kConcat:
        qm.own_[i] = new_quantizer(!(sole_relu || (unsigned_input(0) && unsigned_input(1))));
        break;
      case LayerKind::kAvgPool:
      case LayerKind::kGlobalAvgPool:
        qm.own_[i] = new_quantizer(!(sole_relu || unsigned_input(0)));
        break;
      case LayerKind::kReLU:
        qm.fused_relu_[i] = unsigned_input(0);
        break;
      case LayerKind::kBatchNorm:
        fail(ErrorKind::kInvalidArgument, "BatchNorm must be folded before quantisation");
      default:
        break;
    }
    qm.domain_[i] = qm.own_[i] >= 0 ? qm.own_[i] : qm.domain_of(node.inputs[0]);
  }

  // Calibrate alphas from float activations.
  std::vector<std::vector<float>> observed(qm.quantizers_.size());
  const std::size_t total = calibration.dim(0);
  const std::size_t chunk = 16;
  {
    NoGradGuard no_grad;
    for (std::size_t s = 0; s < total; s += chunk) {
      const std::size_t e = std::min(total, s + chunk);
      const std::size_t stride = calibration.numel() / total;
      std::vector<float> v(calibration.data().begin() + static_cast<std::ptrdiff_t>(s * stride),
                           calibration.data().begin() + static_cast<std::ptrdiff_t>(e * stride));
      qm.run(Tensor::from({e - s, calibration.dim(1), calibration.dim(2)}, std::move(v)), false, false, &observed);
    }
  }
  for (std::size_t q = 0; q < qm.quantizers_.size(); ++q) {
    auto& vals = observed[q];
    for (auto& v : vals) v = qm.quantizers_[q].is_signed ? std::fabs(v) : std::max(v, 0.0f);
    float alpha = 1.0f;
    if (!vals.empty()) {
      const auto k = static_cast<std::size_t>(0.999 * static_cast<double>(vals.size() - 1));
      std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(k), vals.end());
      alpha = vals[k];
    }
    qm.quantizers_[q].alpha.data()[0] = std::max(alpha, kMinAlpha);
  }
  return qm;
}

Tensor QatModel::run(const Tensor& x, bool training, bool quantized, std::vector<std::vector<float>>* observe,
                     std::vector<Tensor>* trace) {
  const Graph& g = model_.graph();
  auto quant_out = [&](int q, const Tensor& y) {
    if (observe) {
      auto& dst = (*observe)[static_cast<std::size_t>(q)];
      const std::size_t step = std::max<std::size_t>(1, y.numel() / 8192);
      for (std::size_t i = 0; i < y.numel(); i += step) dst.push_back(y.data()[i]);
    }
    if (!quantized) return y;
    const auto& aq = quantizers_[static_cast<std::size_t>(q)];
    return pact(y, aq.alpha, aq.is_signed);
  };
  auto weight_q = [&](const Tensor& w) {
    return quantized ? fake_quant(w, minmax_affine_params(w.data())) : w;
  };
  auto bias_q = [&](const Tensor& b, const Tensor& w, int in_domain) {
    if (!quantized || !b.defined()) return b;
    const double s_in = quantizers_[static_cast<std::size_t>(in_domain)].params().scale;
    const double s_w = minmax_affine_params(w.data()).scale;
    return fake_quant_bias(b, s_in * s_w);
  };

  const Tensor x0 = quant_out(0, x);
  std::vector<Tensor> values(g.size());
  std::vector<Tensor> ins;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& node = g.nodes()[i];
    const auto& s = node.spec;
    auto& p = model_.params()[i];
    ins.clear();
    for (int id : node.inputs) ins.push_back(id == kGraphInput ? x0 : values[static_cast<std::size_t>(id)]);
    const int in_dom = domain_of(node.inputs[0]);
    Tensor y;
    switch (s.kind) {
      case LayerKind::kConv1d: {
        const Tensor& b = s.has_bias ? p.tensors[1] : kNoBias;
        y = ops::conv1d(ins[0], weight_q(p.tensors[0]), bias_q(b, p.tensors[0], in_dom), s.stride, s.padding);
        y = quant_out(own_[i], y);
        break;
      }
      case LayerKind::kLinear: {
        const Tensor& b = s.has_bias ? p.tensors[1] : kNoBias;
        y = ops::linear(ins[0], weight_q(p.tensors[0]), bias_q(b, p.tensors[0], in_dom));
        y = quant_out(own_[i], y);
        break;
      }
      case LayerKind::kDWBlock: {
        const std::size_t pw = s.has_bias ? 2 : 1;
        const Tensor& db = s.has_bias ? p.tensors[1] : kNoBias;
        const Tensor& pb = s.has_bias ? p.tensors[3] : kNoBias;
        Tensor mid = ops::depthwise_conv1d(ins[0], weight_q(p.tensors[0]), bias_q(db, p.tensors[0], in_dom),
                                           s.stride, s.padding);
        mid = quant_out(mid_[i], mid);
        y = ops::conv1d(mid, weight_q(p.tensors[pw]), bias_q(pb, p.tensors[pw], mid_[i]), 1, 0);
        y = quant_out(own_[i], y);
        break;
      }
      case LayerKind::kAdd:
      case LayerKind::kConcat:
      case LayerKind::kAvgPool:
      case LayerKind::kGlobalAvgPool:
        y = quant_out(own_[i], forward_layer(s, p, ins, training));
        break;
      case LayerKind::kReLU:
        y = (quantized && fused_relu_[i]) ? ins[0] : ops::relu(ins[0]);
        break;
      default:
        y = forward_layer(s, p, ins, training);
        break;
    }
    values[i] = std::move(y);
  }
  if (values.empty()) return x0;
  if (trace) *trace = values;
  return values.back();
}

Tensor QatModel::forward(const Tensor& x, bool training) { return run(x, training, true, nullptr); }

Tensor QatModel::forward_float(const Tensor& x) { return run(x, false, false, nullptr); }

std::vector<Tensor> QatModel::trace(const Tensor& x) {
  NoGradGuard no_grad;
  std::vector<Tensor> values;
  run(x, false, true, nullptr, &values);
  return values;
}

std::vector<Tensor> QatModel::parameters() const {
  auto out = model_.parameters();
  for (const auto& q : quantizers_) out.push_back(q.alpha);
  return out;
}

void QatModel::clamp_alphas() {
  for (auto& q : quantizers_) q.alpha.data()[0] = std::max(q.alpha.data()[0], kMinAlpha);
}

std::vector<EpochStats> qat_finetune(QatModel& qm, const TensorDataset& train, const TrainConfig& cfg) {
  Adam opt(qm.parameters(), cfg.lr);
  std::vector<EpochStats> log;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double loss = run_epoch(train, cfg.batch_size, cfg.seed + e, [&](const Tensor& x, const Tensor& y) {
      opt.zero_grad();
      auto pred = qm.forward(x, true);
      auto l = ops::mse(ops::reshape(pred, y.shape()), y);
      const double v = l.item();
      backward(l);
      opt.step();
      qm.clamp_alphas();
      return v;
    });
    log.push_back({e, loss, 0.0, 0.0});
  }
  return log;
}

std::vector<float> predict(QatModel& qm, const TensorDataset& data, std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<float> out;
  out.reserve(data.count * data.target_stride());
  for (std::size_t i = 0; i < data.count; i += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t j = i; j < std::min(data.count, i + batch_size); ++j) idx.push_back(j);
    auto pred = qm.forward(data.input_batch(idx), false);
    out.insert(out.end(), pred.data().begin(), pred.data().end());
  }
  return out;
}

}  // namespace ppgnas
