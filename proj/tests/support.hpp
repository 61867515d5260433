// SPDX-License-Identifier: Apache-2.0
//
// Shared test helpers: random tensors and graphs, a central finite-difference
// gradient checker and a per-layer floating-point oracle for integer kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "ppgnas/graph.hpp"
#include "ppgnas/int_graph.hpp"
#include "ppgnas/quant.hpp"
#include "ppgnas/tensor.hpp"

namespace testsupport {

using namespace ppgnas;

inline std::vector<double> randn(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline std::vector<float> randnf(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<float> d(0.0f, static_cast<float>(sd));
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline Tensor64 leaf64(std::mt19937_64& rng, Shape s, double sd = 1.0) {
  const std::size_t n = shape_numel(s);
  return Tensor64::from(std::move(s), randn(rng, n, sd), true);
}

inline std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

using LossFn = std::function<Tensor64(const std::vector<Tensor64>&)>;

// Largest relative error between the analytic gradient of `loss(leaves)` and
// central differences of `numeric` (defaults to `loss`) with step h. The
// denominator is floored at 1e-3 so near-zero gradients compare absolutely.
inline double grad_check(std::vector<Tensor64> leaves, const LossFn& loss, const LossFn& numeric = {},
                         double h = 1e-3) {
  const LossFn& f = numeric ? numeric : loss;
  for (auto& l : leaves) l.zero_grad();
  backward(loss(leaves));
  double worst = 0.0;
  for (auto& l : leaves) {
    std::vector<double> analytic(l.numel(), 0.0);
    if (l.has_grad()) std::copy(l.grad().begin(), l.grad().end(), analytic.begin());
    for (std::size_t i = 0; i < l.numel(); ++i) {
      const double keep = l.data()[i];
      double fp, fm;
      {
        NoGradGuard ng;
        l.data()[i] = keep + h;
        fp = f(leaves).item();
        l.data()[i] = keep - h;
        fm = f(leaves).item();
      }
      l.data()[i] = keep;
      const double num = (fp - fm) / (2 * h);
      const double err = std::fabs(num - analytic[i]) / std::max({std::fabs(num), std::fabs(analytic[i]), 1e-3});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Random sequential graph with optional residual adds, concat branches,
// pooling, upsampling and BatchNorm. Every layer keeps length >= 4.
inline Graph random_graph(std::mt19937_64& rng, bool scalar_head, bool allow_bn = true) {
  const std::size_t c0 = uniform(rng, 1, 3);
  const std::size_t l0 = 8 * uniform(rng, 2, 4);
  Graph g({c0, l0}, scalar_head ? OutputArity::kScalar : OutputArity::kSeries);
  int cur = kGraphInput;
  auto shape = [&] { return g.shape_of(cur); };
  auto conv_like = [&](std::size_t co, std::size_t stride, int from) {
    const std::size_t k = 1 + 2 * uniform(rng, 0, 2);
    const FeatureShape s = g.shape_of(from);
    if (s.length / stride < 4) stride = 1;
    const bool dw = uniform(rng, 0, 2) == 0;
    LayerSpec spec = dw ? LayerSpec::dw_block(s.channels, co, k, stride, k / 2, uniform(rng, 0, 3) != 0)
                        : LayerSpec::conv1d(s.channels, co, k, stride, k / 2, uniform(rng, 0, 3) != 0);
    int id = g.add(spec, {from});
    if (allow_bn && uniform(rng, 0, 1)) id = g.add(LayerSpec::batch_norm(co), {id});
    return id;
  };
  cur = conv_like(uniform(rng, 2, 6), 1, cur);
  if (uniform(rng, 0, 1)) cur = g.add(LayerSpec::relu(), {cur});
  const std::size_t steps = uniform(rng, 1, 4);
  for (std::size_t s = 0; s < steps; ++s) {
    const FeatureShape sh = shape();
    switch (uniform(rng, 0, 6)) {
      case 0: {
        cur = conv_like(uniform(rng, 2, 6), uniform(rng, 1, 2), cur);
        if (uniform(rng, 0, 2)) cur = g.add(LayerSpec::relu(), {cur});
        break;
      }
      case 1: {  // residual
        int b = conv_like(sh.channels, 1, cur);
        if (uniform(rng, 0, 1)) {
          b = g.add(LayerSpec::relu(), {b});
          b = conv_like(sh.channels, 1, b);
        }
        cur = g.add(LayerSpec::add(), {cur, b});
        if (uniform(rng, 0, 1)) cur = g.add(LayerSpec::relu(), {cur});
        break;
      }
      case 2: {  // concat branch
        int b = conv_like(uniform(rng, 1, 4), 1, cur);
        if (uniform(rng, 0, 1)) b = g.add(LayerSpec::relu(), {b});
        cur = uniform(rng, 0, 1) ? g.add(LayerSpec::concat(), {cur, b}) : g.add(LayerSpec::concat(), {b, cur});
        break;
      }
      case 3:
        if (sh.length >= 8) cur = g.add(LayerSpec::max_pool(2, 2), {cur});
        break;
      case 4:
        if (sh.length >= 8) cur = g.add(LayerSpec::avg_pool(uniform(rng, 2, 3), 2), {cur});
        break;
      case 5:
        if (sh.length <= 32) cur = g.add(LayerSpec::upsample(), {cur});
        break;
      default:
        cur = g.add(LayerSpec::relu(), {cur});
        break;
    }
  }
  if (scalar_head) {
    cur = g.add(LayerSpec::global_avg_pool(), {cur});
    cur = g.add(LayerSpec::linear(shape().channels, 1, uniform(rng, 0, 3) != 0), {cur});
  } else {
    cur = g.add(LayerSpec::conv1d(shape().channels, 1, 1 + 2 * uniform(rng, 0, 1), 1, 0), {cur});
  }
  return g;
}

// Model with non-trivial BatchNorm statistics and biases, prepared for QAT
// with a random calibration batch.
inline QatModel random_qat(std::mt19937_64& rng, const Graph& g, std::uint64_t seed) {
  Model m = Model::initialize(g, seed);
  for (auto& p : m.params()) {
    if (p.bn.running_mean.empty()) continue;
    for (auto& v : p.bn.running_mean) v = 0.2f * static_cast<float>(randn(rng, 1)[0]);
    for (auto& v : p.bn.running_var) v = 0.5f + std::fabs(static_cast<float>(randn(rng, 1)[0]));
  }
  for (auto& p : m.params())
    if (p.bn.running_mean.empty() && p.tensors.size() > 1)
      for (auto& t : p.tensors)
        if (t.ndim() == 1)
          for (auto& v : t.data()) v = 0.1f * static_cast<float>(randn(rng, 1)[0]);
  const auto in = g.input_shape();
  return QatModel::prepare(m, Tensor::from({16, in.channels, in.length}, randnf(rng, 16 * in.channels * in.length)));
}

// Scalar-count oracle: sum of element counts of every trainable tensor.
inline std::size_t enumerate_params(const std::vector<Tensor>& ts) {
  std::size_t n = 0;
  for (const auto& t : ts)
    for (std::size_t i = 0; i < t.numel(); ++i) ++n;
  return n;
}

inline std::int32_t round_even_to_int(double v) { return static_cast<std::int32_t>(std::nearbyint(v)); }

// Float reference of one integer layer computed from the integer inputs:
// real-valued accumulation scaled by the decoded multiplier, rounded to the
// nearest grid point and clamped.
inline std::vector<std::int32_t> reference_layer(const IntGraph& ig, const IntLayer& L,
                                                 const std::vector<std::vector<std::int8_t>>& bufs) {
  const IntBuffer& out = ig.buffers[static_cast<std::size_t>(L.output)];
  const IntBuffer& in = ig.buffers[static_cast<std::size_t>(L.inputs[0])];
  const auto& x = bufs[static_cast<std::size_t>(L.inputs[0])];
  std::vector<std::int32_t> y(out.size());
  auto finish = [&](double v) {
    return std::clamp(round_even_to_int(v) + out.zero_point, out.qmin, out.qmax);
  };
  const std::size_t Ci = in.channels, Li = in.length, Co = out.channels, Lo = out.length;
  auto xv = [&](std::size_t c, long t) -> double {
    if (t < 0 || t >= static_cast<long>(Li)) return 0.0;
    return static_cast<double>(x[c * Li + static_cast<std::size_t>(t)]) - in.zero_point;
  };
  switch (L.op) {
    case IntOp::kConv: {
      const double M = decode_multiplier(L.requant[0]);
      for (std::size_t co = 0; co < Co; ++co)
        for (std::size_t t = 0; t < Lo; ++t) {
          double acc = L.bias.empty() ? 0.0 : L.bias[co];
          for (std::size_t ci = 0; ci < Ci; ++ci)
            for (std::size_t k = 0; k < L.kernel; ++k) {
              const long pos = static_cast<long>(t * L.stride + k) - static_cast<long>(L.padding);
              acc += (static_cast<double>(L.weights[(co * Ci + ci) * L.kernel + k]) - L.zero_w) * xv(ci, pos);
            }
          y[co * Lo + t] = finish(M * acc);
        }
      break;
    }
    case IntOp::kDepthwise: {
      const double M = decode_multiplier(L.requant[0]);
      for (std::size_t c = 0; c < Co; ++c)
        for (std::size_t t = 0; t < Lo; ++t) {
          double acc = L.bias.empty() ? 0.0 : L.bias[c];
          for (std::size_t k = 0; k < L.kernel; ++k) {
            const long pos = static_cast<long>(t * L.stride + k) - static_cast<long>(L.padding);
            acc += (static_cast<double>(L.weights[c * L.kernel + k]) - L.zero_w) * xv(c, pos);
          }
          y[c * Lo + t] = finish(M * acc);
        }
      break;
    }
    case IntOp::kLinear: {
      const double M = decode_multiplier(L.requant[0]);
      const std::size_t In = Ci * Li;
      for (std::size_t o = 0; o < Co; ++o) {
        double acc = L.bias.empty() ? 0.0 : L.bias[o];
        for (std::size_t i = 0; i < In; ++i)
          acc += (static_cast<double>(L.weights[o * In + i]) - L.zero_w) * (static_cast<double>(x[i]) - in.zero_point);
        y[o] = finish(M * acc);
      }
      break;
    }
    case IntOp::kAdd: {
      const IntBuffer& in2 = ig.buffers[static_cast<std::size_t>(L.inputs[1])];
      const auto& x2 = bufs[static_cast<std::size_t>(L.inputs[1])];
      const double M1 = decode_multiplier(L.requant[0]), M2 = decode_multiplier(L.requant[1]);
      for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = finish(M1 * (static_cast<double>(x[i]) - in.zero_point) + M2 * (static_cast<double>(x2[i]) - in2.zero_point));
      break;
    }
    case IntOp::kConcat: {
      std::size_t off = 0;
      for (std::size_t j = 0; j < L.inputs.size(); ++j) {
        const IntBuffer& b = ig.buffers[static_cast<std::size_t>(L.inputs[j])];
        const auto& xb = bufs[static_cast<std::size_t>(L.inputs[j])];
        const double M = decode_multiplier(L.requant[j]);
        for (std::size_t i = 0; i < b.size(); ++i) y[off + i] = finish(M * (static_cast<double>(xb[i]) - b.zero_point));
        off += b.size();
      }
      break;
    }
    case IntOp::kAvgPool:
    case IntOp::kGlobalAvgPool: {
      const double M = decode_multiplier(L.requant[0]);
      const std::size_t k = L.op == IntOp::kGlobalAvgPool ? Li : L.kernel;
      const std::size_t st = L.op == IntOp::kGlobalAvgPool ? 1 : L.stride;
      for (std::size_t c = 0; c < Co; ++c)
        for (std::size_t t = 0; t < Lo; ++t) {
          double acc = 0.0;
          for (std::size_t j = 0; j < k; ++j) acc += xv(c, static_cast<long>(t * st + j));
          y[c * Lo + t] = finish(M * acc);
        }
      break;
    }
    case IntOp::kMaxPool:
      for (std::size_t c = 0; c < Co; ++c)
        for (std::size_t t = 0; t < Lo; ++t) {
          std::int32_t m = -1000;
          for (std::size_t j = 0; j < L.kernel; ++j) m = std::max<std::int32_t>(m, x[c * Li + t * L.stride + j]);
          y[c * Lo + t] = m;
        }
      break;
    case IntOp::kUpsample:
      for (std::size_t c = 0; c < Co; ++c)
        for (std::size_t t = 0; t < Lo; ++t) y[c * Lo + t] = x[c * Li + t / 2];
      break;
    case IntOp::kRelu:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max<std::int32_t>(x[i], in.zero_point);
      break;
  }
  return y;
}

}  // namespace testsupport
