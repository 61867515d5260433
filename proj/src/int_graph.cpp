// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/int_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ppgnas/error.hpp"
#include "ppgnas/quant.hpp"

namespace ppgnas {

namespace {

constexpr std::int64_t kSat = std::int64_t{1} << 30;
constexpr std::int32_t kAddSat = 1 << 29;
constexpr std::pair<IntOp, const char*> kOpNames[] = {
    {IntOp::kConv, "conv"},         {IntOp::kDepthwise, "depthwise"},
    {IntOp::kLinear, "linear"},     {IntOp::kAdd, "add"},
    {IntOp::kConcat, "concat"},     {IntOp::kMaxPool, "max_pool"},
    {IntOp::kAvgPool, "avg_pool"},  {IntOp::kGlobalAvgPool, "global_avg_pool"},
    {IntOp::kUpsample, "upsample"}, {IntOp::kRelu, "relu"},
};

std::int8_t clamp_to(std::int64_t v, const IntBuffer& b) {
  return static_cast<std::int8_t>(std::clamp<std::int64_t>(v, b.qmin, b.qmax));
}

std::size_t out_len(std::size_t len, std::size_t k, std::size_t stride, std::size_t pad) {
  return (len + 2 * pad - k) / stride + 1;
}

}  // namespace

const char* int_op_name(IntOp op) {
  for (const auto& [o, n] : kOpNames)
    if (o == op) return n;
  return "?";
}

IntOp int_op_from_name(const std::string& name) {
  for (const auto& [o, n] : kOpNames)
    if (name == n) return o;
  fail(ErrorKind::kInvalidArgument, "unknown integer op '" + name + "'");
}

Requant encode_multiplier(double m0) {
  if (!(m0 > 0.0) || !std::isfinite(m0)) fail(ErrorKind::kNumeric, "requant multiplier must be positive and finite");
  int e = 0;
  const double f = std::frexp(m0, &e);  // m0 = f * 2^e, f in [0.5, 1)
  std::int64_t m = std::llround(f * 2147483648.0);
  if (m == (std::int64_t{1} << 31)) {
    m >>= 1;
    ++e;
  }
  const int n = 31 - e;
  if (n < 1 || n > 62) {
    fail(ErrorKind::kNumeric, "requant multiplier " + std::to_string(m0) + " needs shift " + std::to_string(n) +
                                  " outside [1, 62]");
  }
  return {static_cast<std::int32_t>(m), n};
}

double decode_multiplier(const Requant& r) { return std::ldexp(static_cast<double>(r.m), -r.n); }

std::int32_t requantize(std::int32_t acc, const Requant& r) {
  const std::int64_t mag = acc < 0 ? -static_cast<std::int64_t>(acc) : acc;
  const std::int64_t half = std::int64_t{1} << (r.n - 1);
  const std::int64_t prod = mag * r.m;
  const std::int64_t q = acc < 0 ? -((prod + half - 1) >> r.n) : ((prod + half) >> r.n);
  return static_cast<std::int32_t>(std::clamp(q, -kSat, kSat));
}

// --- validation ------------------------------------------------------------

void validate(const IntGraph& ig) {
  auto bad = [](const std::string& msg) { fail(ErrorKind::kInvalidArgument, "invalid integer graph: " + msg); };
  if (ig.buffers.empty()) bad("no input buffer");
  const auto nb = static_cast<int>(ig.buffers.size());
  for (const auto& b : ig.buffers) {
    if (b.size() == 0) bad("empty buffer");
    if (!(b.scale > 0.0f) || !std::isfinite(b.scale)) bad("non-positive buffer scale");
    if (b.qmin < -128 || b.qmax > 127 || b.qmin >= b.qmax) bad("buffer range outside int8");
    if (b.zero_point < -128 || b.zero_point > 127) bad("zero point outside int8");
  }
  if (ig.output < 0 || ig.output >= nb) bad("output buffer id out of range");
  std::vector<bool> written(ig.buffers.size(), false);
  written[0] = true;
  for (std::size_t li = 0; li < ig.layers.size(); ++li) {
    const auto& l = ig.layers[li];
    const std::string where = "layer " + std::to_string(li) + " (" + int_op_name(l.op) + "): ";
    if (l.output <= 0 || l.output >= nb || written[static_cast<std::size_t>(l.output)]) bad(where + "bad output buffer");
    for (int in : l.inputs)
      if (in < 0 || in >= nb || !written[static_cast<std::size_t>(in)]) bad(where + "input read before it is written");
    const std::size_t want_inputs = (l.op == IntOp::kAdd || l.op == IntOp::kConcat) ? 2 : 1;
    if (l.inputs.size() != want_inputs) bad(where + "wrong number of inputs");
    const auto& x = ig.buffers[static_cast<std::size_t>(l.inputs[0])];
    const auto& y = ig.buffers[static_cast<std::size_t>(l.output)];
    for (const auto& r : l.requant)
      if (r.m < (1 << 30) || r.n < 1 || r.n > 62) bad(where + "requant multiplier not normalised");
    auto need_requant = [&](std::size_t n) {
      if (l.requant.size() != n) bad(where + "wrong number of requant entries");
    };
    switch (l.op) {
      case IntOp::kConv:
      case IntOp::kDepthwise:
      case IntOp::kLinear: {
        need_requant(1);
        const std::size_t ci = x.channels, co = y.channels;
        std::size_t fan = 0;
        if (l.op == IntOp::kLinear) {
          if (x.length != 1 || y.length != 1 || l.weights.size() != co * ci) bad(where + "linear geometry");
          fan = ci;
        } else {
          if (l.stride == 0 || l.kernel == 0 || l.kernel > x.length + 2 * l.padding) bad(where + "window geometry");
          if (y.length != out_len(x.length, l.kernel, l.stride, l.padding)) bad(where + "output length");
          if (l.op == IntOp::kConv) {
            if (l.weights.size() != co * ci * l.kernel) bad(where + "weight count");
            fan = ci * l.kernel;
          } else {
            if (ci != co || l.weights.size() != ci * l.kernel) bad(where + "depthwise weight count");
            fan = l.kernel;
          }
        }
        if (l.bias.size() != co) bad(where + "bias count");
        if (l.zero_w < -128 || l.zero_w > 127) bad(where + "weight zero point");
        std::int64_t max_bias = 0;
        for (auto b : l.bias) max_bias = std::max<std::int64_t>(max_bias, std::llabs(b));
        const std::int64_t bound = static_cast<std::int64_t>(fan) * 255 * 255 + max_bias;
        if (bound > std::numeric_limits<std::int32_t>::max()) {
          fail(ErrorKind::kNumeric, where + "32-bit accumulator may overflow (bound " + std::to_string(bound) + ")");
        }
        break;
      }
      case IntOp::kAdd: {
        need_requant(2);
        const auto& b = ig.buffers[static_cast<std::size_t>(l.inputs[1])];
        if (x.channels != b.channels || x.length != b.length || !(y.channels == x.channels && y.length == x.length))
          bad(where + "operand shapes");
        break;
      }
      case IntOp::kConcat: {
        need_requant(2);
        const auto& b = ig.buffers[static_cast<std::size_t>(l.inputs[1])];
        if (x.length != b.length || y.length != x.length || y.channels != x.channels + b.channels)
          bad(where + "operand shapes");
        break;
      }
      case IntOp::kMaxPool:
      case IntOp::kAvgPool:
        need_requant(l.op == IntOp::kAvgPool ? 1 : 0);
        if (l.stride == 0 || l.kernel == 0 || l.kernel > x.length || y.channels != x.channels ||
            y.length != out_len(x.length, l.kernel, l.stride, 0))
          bad(where + "pool geometry");
        if (static_cast<std::int64_t>(l.kernel) * 255 > kSat) bad(where + "pool window too large");
        break;
      case IntOp::kGlobalAvgPool:
        need_requant(1);
        if (y.channels != x.channels || y.length != 1) bad(where + "pool geometry");
        if (static_cast<std::int64_t>(x.length) * 255 > kSat) bad(where + "pool window too large");
        break;
      case IntOp::kUpsample:
        need_requant(0);
        if (y.channels != x.channels || y.length != 2 * x.length) bad(where + "upsample geometry");
        break;
      case IntOp::kRelu:
        need_requant(0);
        if (y.channels != x.channels || y.length != x.length) bad(where + "relu geometry");
        break;
    }
    if (l.op == IntOp::kMaxPool || l.op == IntOp::kUpsample || l.op == IntOp::kRelu) {
      if (y.scale != x.scale || y.zero_point != x.zero_point) bad(where + "output grid must match input grid");
    }
    written[static_cast<std::size_t>(l.output)] = true;
  }
  if (!written[static_cast<std::size_t>(ig.output)]) bad("output buffer is never written");
}

// --- export ------------------------------------------------------------------

IntGraph export_int_graph(const QatModel& qm) {
  const Graph& g = qm.graph();
  const auto& params = qm.folded().params();
  const auto& quantizers = qm.quantizers();
  IntGraph ig;
  ig.arity = g.arity();

  auto make_buffer = [&](FeatureShape shape, int quantizer) {
    const auto& aq = quantizers[static_cast<std::size_t>(quantizer)];
    const QuantParams p = aq.params();
    ig.buffers.push_back({shape.channels, shape.length, p.scale, p.zero_point, aq.qmin(), aq.qmax()});
    return static_cast<int>(ig.buffers.size()) - 1;
  };
  auto copy_buffer = [&](FeatureShape shape, int like) {
    IntBuffer b = ig.buffers[static_cast<std::size_t>(like)];
    b.channels = shape.channels;
    b.length = shape.length;
    ig.buffers.push_back(b);
    return static_cast<int>(ig.buffers.size()) - 1;
  };
  auto scale_of = [&](int buf) { return static_cast<double>(ig.buffers[static_cast<std::size_t>(buf)].scale); };

  // Appends a weighted layer reading `in` and writing `out`.
  auto weighted = [&](IntOp op, int in, int out, const Tensor& w, const Tensor* b,
                      std::size_t kernel, std::size_t stride, std::size_t padding) {
    IntLayer l;
    l.op = op;
    l.inputs = {in};
    l.output = out;
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    const QuantParams qw = minmax_affine_params(w.data());
    l.zero_w = qw.zero_point;
    l.weights.reserve(w.numel());
    for (float v : w.data()) l.weights.push_back(quantize_value(v, qw));
    const double s_in = scale_of(in);
    const double bias_scale = s_in * static_cast<double>(qw.scale);
    const std::size_t co = ig.buffers[static_cast<std::size_t>(out)].channels;
    l.bias.assign(co, 0);
    if (b) {
      const double lim = static_cast<double>(std::numeric_limits<std::int32_t>::max());
      for (std::size_t i = 0; i < co; ++i) {
        const double r = std::clamp(std::nearbyint(static_cast<double>(b->data()[i]) / bias_scale), -lim, lim);
        l.bias[i] = static_cast<std::int32_t>(r);
      }
    }
    l.requant = {encode_multiplier(bias_scale / scale_of(out))};
    ig.layers.push_back(std::move(l));
  };

  ig.buffers.clear();
  {
    const auto& aq = quantizers[0];
    const QuantParams p = aq.params();
    const auto in = g.input_shape();
    ig.buffers.push_back({in.channels, in.length, p.scale, p.zero_point, aq.qmin(), aq.qmax()});
  }
  ig.node_buffer.assign(g.size(), -1);
  auto buf_of = [&](int id) { return id == kGraphInput ? 0 : ig.node_buffer[static_cast<std::size_t>(id)]; };

  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& node = g.nodes()[i];
    const auto& s = node.spec;
    const auto& p = params[i];
    const int id = static_cast<int>(i);
    const int in = buf_of(node.inputs[0]);
    int out = -1;
    switch (s.kind) {
      case LayerKind::kConv1d:
        out = make_buffer(node.out_shape, qm.own_quantizer(id));
        weighted(IntOp::kConv, in, out, p.tensors[0], s.has_bias ? &p.tensors[1] : nullptr, s.kernel, s.stride,
                 s.padding);
        break;
      case LayerKind::kLinear:
        out = make_buffer(node.out_shape, qm.own_quantizer(id));
        weighted(IntOp::kLinear, in, out, p.tensors[0], s.has_bias ? &p.tensors[1] : nullptr, 1, 1, 0);
        break;
      case LayerKind::kDWBlock: {
        const auto mid_len = node.out_shape.length;
        const int mid = make_buffer({s.c_in, mid_len}, qm.mid_quantizer(id));
        weighted(IntOp::kDepthwise, in, mid, p.tensors[0], s.has_bias ? &p.tensors[1] : nullptr, s.kernel,
                 s.stride, s.padding);
        out = make_buffer(node.out_shape, qm.own_quantizer(id));
        const std::size_t pw = s.has_bias ? 2 : 1;
        weighted(IntOp::kConv, mid, out, p.tensors[pw], s.has_bias ? &p.tensors[3] : nullptr, 1, 1, 0);
        break;
      }
      case LayerKind::kAdd:
      case LayerKind::kConcat: {
        out = make_buffer(node.out_shape, qm.own_quantizer(id));
        IntLayer l;
        l.op = s.kind == LayerKind::kAdd ? IntOp::kAdd : IntOp::kConcat;
        l.inputs = {in, buf_of(node.inputs[1])};
        l.output = out;
        for (int b : l.inputs) l.requant.push_back(encode_multiplier(scale_of(b) / scale_of(out)));
        ig.layers.push_back(std::move(l));
        break;
      }
      case LayerKind::kAvgPool:
      case LayerKind::kGlobalAvgPool: {
        out = make_buffer(node.out_shape, qm.own_quantizer(id));
        IntLayer l;
        l.op = s.kind == LayerKind::kAvgPool ? IntOp::kAvgPool : IntOp::kGlobalAvgPool;
        l.inputs = {in};
        l.output = out;
        l.kernel = s.kind == LayerKind::kAvgPool ? s.kernel : ig.buffers[static_cast<std::size_t>(in)].length;
        l.stride = s.kind == LayerKind::kAvgPool ? s.stride : 1;
        l.requant = {encode_multiplier(scale_of(in) / (static_cast<double>(l.kernel) * scale_of(out)))};
        ig.layers.push_back(std::move(l));
        break;
      }
      case LayerKind::kMaxPool:
      case LayerKind::kUpsample: {
        out = copy_buffer(node.out_shape, in);
        IntLayer l;
        l.op = s.kind == LayerKind::kMaxPool ? IntOp::kMaxPool : IntOp::kUpsample;
        l.inputs = {in};
        l.output = out;
        l.kernel = s.kind == LayerKind::kMaxPool ? s.kernel : 1;
        l.stride = s.kind == LayerKind::kMaxPool ? s.stride : 1;
        ig.layers.push_back(std::move(l));
        break;
      }
      case LayerKind::kReLU:
        if (qm.fused_relu(id)) {
          out = in;
        } else {
          out = copy_buffer(node.out_shape, in);
          IntLayer l;
          l.op = IntOp::kRelu;
          l.inputs = {in};
          l.output = out;
          ig.layers.push_back(std::move(l));
        }
        break;
      case LayerKind::kIdentity:
        out = in;
        break;
      case LayerKind::kBatchNorm:
        fail(ErrorKind::kInvalidArgument, "cannot export an unfolded BatchNorm");
    }
    ig.node_buffer[i] = out;
  }
  ig.output = g.size() == 0 ? 0 : ig.node_buffer.back();
  validate(ig);
  return ig;
}

// --- interpreter -------------------------------------------------------------

std::vector<std::int8_t> quantize_input(const IntGraph& ig, std::span<const float> x) {
  const auto& b = ig.input_buffer();
  if (x.size() != b.size()) {
    fail(ErrorKind::kShape, "input has " + std::to_string(x.size()) + " values, expected " + std::to_string(b.size()));
  }
  std::vector<std::int8_t> q(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) fail(ErrorKind::kNumeric, "non-finite input value");
    const float r = std::nearbyint(x[i] / b.scale) + static_cast<float>(b.zero_point);
    q[i] = static_cast<std::int8_t>(std::clamp(r, static_cast<float>(b.qmin), static_cast<float>(b.qmax)));
  }
  return q;
}

std::vector<float> dequantize_output(const IntGraph& ig, std::span<const std::int8_t> q) {
  const auto& b = ig.output_buffer();
  std::vector<float> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = static_cast<float>(q[i] - b.zero_point) * b.scale;
  return out;
}

void run_layer(const IntGraph& ig, const IntLayer& l, std::vector<std::vector<std::int8_t>>& bufs) {
  const auto& xb = ig.buffers[static_cast<std::size_t>(l.inputs[0])];
  const auto& yb = ig.buffers[static_cast<std::size_t>(l.output)];
  const auto& x = bufs[static_cast<std::size_t>(l.inputs[0])];
  auto& y = bufs[static_cast<std::size_t>(l.output)];
  y.assign(yb.size(), 0);
  const std::size_t ci = xb.channels, li = xb.length, co = yb.channels, lo = yb.length;
  const std::int32_t zx = xb.zero_point, zy = yb.zero_point;
  switch (l.op) {
    case IntOp::kConv:
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t t = 0; t < lo; ++t) {
          std::int32_t acc = l.bias[o];
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t k = 0; k < l.kernel; ++k) {
              const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * l.stride + k) - static_cast<std::ptrdiff_t>(l.padding);
              if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(li)) continue;
              acc += (x[c * li + static_cast<std::size_t>(pos)] - zx) * (l.weights[(o * ci + c) * l.kernel + k] - l.zero_w);
            }
          y[o * lo + t] = clamp_to(std::int64_t{requantize(acc, l.requant[0])} + zy, yb);
        }
      break;
    case IntOp::kDepthwise:
      for (std::size_t c = 0; c < co; ++c)
        for (std::size_t t = 0; t < lo; ++t) {
          std::int32_t acc = l.bias[c];
          for (std::size_t k = 0; k < l.kernel; ++k) {
            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * l.stride + k) - static_cast<std::ptrdiff_t>(l.padding);
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(li)) continue;
            acc += (x[c * li + static_cast<std::size_t>(pos)] - zx) * (l.weights[c * l.kernel + k] - l.zero_w);
          }
          y[c * lo + t] = clamp_to(std::int64_t{requantize(acc, l.requant[0])} + zy, yb);
        }
      break;
    case IntOp::kLinear:
      for (std::size_t o = 0; o < co; ++o) {
        std::int32_t acc = l.bias[o];
        for (std::size_t c = 0; c < ci; ++c) acc += (x[c] - zx) * (l.weights[o * ci + c] - l.zero_w);
        y[o] = clamp_to(std::int64_t{requantize(acc, l.requant[0])} + zy, yb);
      }
      break;
    case IntOp::kAdd: {
      const auto& bb = ig.buffers[static_cast<std::size_t>(l.inputs[1])];
      const auto& xb2 = bufs[static_cast<std::size_t>(l.inputs[1])];
      const Requant unit{1 << 30, 30 + kAddShift};
      for (std::size_t i = 0; i < y.size(); ++i) {
        const std::int32_t a = std::clamp(requantize((x[i] - zx) * (1 << kAddShift), l.requant[0]), -kAddSat, kAddSat);
        const std::int32_t b =
            std::clamp(requantize((xb2[i] - bb.zero_point) * (1 << kAddShift), l.requant[1]), -kAddSat, kAddSat);
        y[i] = clamp_to(std::int64_t{requantize(a + b, unit)} + zy, yb);
      }
      break;
    }
    case IntOp::kConcat: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < 2; ++k) {
        const auto& sb = ig.buffers[static_cast<std::size_t>(l.inputs[k])];
        const auto& src = bufs[static_cast<std::size_t>(l.inputs[k])];
        for (std::size_t i = 0; i < src.size(); ++i)
          y[off + i] = clamp_to(std::int64_t{requantize(src[i] - sb.zero_point, l.requant[k])} + zy, yb);
        off += src.size();
      }
      break;
    }
    case IntOp::kMaxPool:
      for (std::size_t c = 0; c < co; ++c)
        for (std::size_t t = 0; t < lo; ++t) {
          std::int8_t m = x[c * li + t * l.stride];
          for (std::size_t k = 1; k < l.kernel; ++k) m = std::max(m, x[c * li + t * l.stride + k]);
          y[c * lo + t] = m;
        }
      break;
    case IntOp::kAvgPool:
    case IntOp::kGlobalAvgPool: {
      const std::size_t k_len = l.op == IntOp::kAvgPool ? l.kernel : li;
      const std::size_t stride = l.op == IntOp::kAvgPool ? l.stride : 1;
      for (std::size_t c = 0; c < co; ++c)
        for (std::size_t t = 0; t < lo; ++t) {
          std::int32_t acc = 0;
          for (std::size_t k = 0; k < k_len; ++k) acc += x[c * li + t * stride + k] - zx;
          y[c * lo + t] = clamp_to(std::int64_t{requantize(acc, l.requant[0])} + zy, yb);
        }
      break;
    }
    case IntOp::kUpsample:
      for (std::size_t c = 0; c < co; ++c)
        for (std::size_t t = 0; t < lo; ++t) y[c * lo + t] = x[c * li + t / 2];
      break;
    case IntOp::kRelu:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max<std::int8_t>(x[i], static_cast<std::int8_t>(zx));
      break;
  }
}

std::vector<std::vector<std::int8_t>> run_trace(const IntGraph& ig, std::span<const std::int8_t> input) {
  if (input.size() != ig.input_buffer().size()) {
    fail(ErrorKind::kShape,
         "input has " + std::to_string(input.size()) + " values, expected " + std::to_string(ig.input_buffer().size()));
  }
  std::vector<std::vector<std::int8_t>> bufs(ig.buffers.size());
  bufs[0].assign(input.begin(), input.end());
  for (const auto& l : ig.layers) run_layer(ig, l, bufs);
  return bufs;
}

std::vector<std::int8_t> run(const IntGraph& ig, std::span<const std::int8_t> input) {
  auto bufs = run_trace(ig, input);
  return std::move(bufs[static_cast<std::size_t>(ig.output)]);
}

// --- memory ------------------------------------------------------------------

ActivationPlan plan_activations(const IntGraph& ig) {
  const std::size_t nb = ig.buffers.size();
  // Live range in steps: the input is born at step 0, layer i's output at i+1.
  std::vector<std::size_t> born(nb, 0), dies(nb, 0);
  std::vector<bool> used(nb, false);
  used[0] = true;
  for (std::size_t i = 0; i < ig.layers.size(); ++i) {
    const auto& l = ig.layers[i];
    born[static_cast<std::size_t>(l.output)] = i + 1;
    dies[static_cast<std::size_t>(l.output)] = std::max(dies[static_cast<std::size_t>(l.output)], i + 1);
    used[static_cast<std::size_t>(l.output)] = true;
    for (int in : l.inputs) dies[static_cast<std::size_t>(in)] = std::max(dies[static_cast<std::size_t>(in)], i + 1);
  }
  dies[static_cast<std::size_t>(ig.output)] = ig.layers.size() + 1;

  std::vector<std::size_t> order;
  for (std::size_t b = 0; b < nb; ++b)
    if (used[b]) order.push_back(b);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return born[a] < born[b]; });

  ActivationPlan plan;
  plan.offsets.assign(nb, 0);
  std::vector<std::size_t> placed;
  for (std::size_t b : order) {
    const std::size_t size = ig.buffers[b].size();
    std::vector<std::pair<std::size_t, std::size_t>> busy;  // [start, end) of conflicting buffers
    for (std::size_t p : placed)
      if (born[p] <= dies[b] && born[b] <= dies[p]) busy.emplace_back(plan.offsets[p], plan.offsets[p] + ig.buffers[p].size());
    std::sort(busy.begin(), busy.end());
    std::size_t offset = 0;
    for (const auto& [s, e] : busy) {
      if (offset + size <= s) break;
      offset = std::max(offset, e);
    }
    plan.offsets[b] = offset;
    plan.arena_bytes = std::max(plan.arena_bytes, offset + size);
    placed.push_back(b);
  }
  return plan;
}

MemoryReport memory_report(const IntGraph& ig, std::size_t budget_bytes, std::size_t overhead_bytes) {
  MemoryReport r;
  for (const auto& l : ig.layers) r.weight_bytes += l.weights.size() + 4 * l.bias.size();
  r.peak_activation_bytes = plan_activations(ig).arena_bytes;
  r.overhead_bytes = overhead_bytes;
  r.budget_bytes = budget_bytes;
  r.total_bytes = r.weight_bytes + r.peak_activation_bytes + r.overhead_bytes;
  r.fits = r.total_bytes <= r.budget_bytes;
  return r;
}

std::uint64_t mac_count(const IntGraph& ig) {
  std::uint64_t macs = 0;
  for (const auto& l : ig.layers) {
    const auto& x = ig.buffers[static_cast<std::size_t>(l.inputs[0])];
    const auto& y = ig.buffers[static_cast<std::size_t>(l.output)];
    switch (l.op) {
      case IntOp::kConv:
        macs += static_cast<std::uint64_t>(y.length) * y.channels * x.channels * l.kernel;
        break;
      case IntOp::kDepthwise:
        macs += static_cast<std::uint64_t>(y.length) * y.channels * l.kernel;
        break;
      case IntOp::kLinear:
        macs += static_cast<std::uint64_t>(x.channels) * y.channels;
        break;
      default:
        break;
    }
  }
  return macs;
}

}  // namespace ppgnas
