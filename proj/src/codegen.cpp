// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/codegen.hpp"

#include "ppgnas/error.hpp"
#include "ppgnas/serialize.hpp"

#include <cstdlib>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

namespace ppgnas {

namespace {

constexpr const char* kRequant = R"(/* round(acc * m * 2^-n), ties towards +inf, saturated to +-2^30.
   The 62-bit product is formed from 16-bit limbs in two 32-bit words. */
static int32_t ppg_requant(int32_t acc, int32_t m, int32_t n)
{
    uint32_t a = acc < 0 ? 0u - (uint32_t)acc : (uint32_t)acc;
    uint32_t um = (uint32_t)m;
    uint32_t a0 = a & 0xFFFFu, a1 = a >> 16, m0 = um & 0xFFFFu, m1 = um >> 16;
    uint32_t p00 = a0 * m0, p01 = a0 * m1, p10 = a1 * m0, p11 = a1 * m1;
    uint32_t mid = (p00 >> 16) + (p01 & 0xFFFFu) + (p10 & 0xFFFFu);
    uint32_t lo = (p00 & 0xFFFFu) | (mid << 16);
    uint32_t hi = p11 + (p01 >> 16) + (p10 >> 16) + (mid >> 16);
    uint32_t hlo = 0u, hhi = 0u, r;
    if (n > 32) hhi = 1u << (n - 33); else hlo = 1u << (n - 1);
    if (acc < 0) {
        if (hlo == 0u) { hhi -= 1u; hlo = 0xFFFFFFFFu; } else { hlo -= 1u; }
    }
    lo += hlo;
    hi += hhi + (lo < hlo ? 1u : 0u);
    if (n >= 32) r = hi >> (n - 32);
    else if ((hi >> n) != 0u) r = 0x40000000u;
    else r = (lo >> n) | (hi << (32 - n));
    if (r > 0x40000000u) r = 0x40000000u;
    return acc < 0 ? -(int32_t)r : (int32_t)r;
}

static int8_t ppg_sat(int32_t v, int32_t qmin, int32_t qmax)
{
    return (int8_t)(v < qmin ? qmin : (v > qmax ? qmax : v));
}
)";

constexpr const char* kConv = R"(
static void ppg_conv(const int8_t *x, int8_t *y, const int8_t *w, const int32_t *b,
                     int32_t ci, int32_t li, int32_t co, int32_t lo, int32_t k, int32_t stride, int32_t pad,
                     int32_t zx, int32_t zw, int32_t m, int32_t n, int32_t zy, int32_t qmin, int32_t qmax)
{
    int32_t o, t, c, j;
    for (o = 0; o < co; ++o) {
        for (t = 0; t < lo; ++t) {
            int32_t acc = b[o];
            for (c = 0; c < ci; ++c) {
                for (j = 0; j < k; ++j) {
                    int32_t pos = t * stride + j - pad;
                    if (pos < 0 || pos >= li) continue;
                    acc += ((int32_t)x[c * li + pos] - zx) * ((int32_t)w[(o * ci + c) * k + j] - zw);
                }
            }
            y[o * lo + t] = ppg_sat(ppg_requant(acc, m, n) + zy, qmin, qmax);
        }
    }
}
)";

constexpr const char* kDepthwise = R"(
static void ppg_depthwise(const int8_t *x, int8_t *y, const int8_t *w, const int32_t *b,
                          int32_t ch, int32_t li, int32_t lo, int32_t k, int32_t stride, int32_t pad,
                          int32_t zx, int32_t zw, int32_t m, int32_t n, int32_t zy, int32_t qmin, int32_t qmax)
{
    int32_t c, t, j;
    for (c = 0; c < ch; ++c) {
        for (t = 0; t < lo; ++t) {
            int32_t acc = b[c];
            for (j = 0; j < k; ++j) {
                int32_t pos = t * stride + j - pad;
                if (pos < 0 || pos >= li) continue;
                acc += ((int32_t)x[c * li + pos] - zx) * ((int32_t)w[c * k + j] - zw);
            }
            y[c * lo + t] = ppg_sat(ppg_requant(acc, m, n) + zy, qmin, qmax);
        }
    }
}
)";

constexpr const char* kLinear = R"(
static void ppg_linear(const int8_t *x, int8_t *y, const int8_t *w, const int32_t *b, int32_t ci, int32_t co,
                       int32_t zx, int32_t zw, int32_t m, int32_t n, int32_t zy, int32_t qmin, int32_t qmax)
{
    int32_t o, c;
    for (o = 0; o < co; ++o) {
        int32_t acc = b[o];
        for (c = 0; c < ci; ++c) acc += ((int32_t)x[c] - zx) * ((int32_t)w[o * ci + c] - zw);
        y[o] = ppg_sat(ppg_requant(acc, m, n) + zy, qmin, qmax);
    }
}
)";

constexpr const char* kAdd = R"(
static int32_t ppg_add_term(int8_t v, int32_t z, int32_t m, int32_t n)
{
    int32_t r = ppg_requant(((int32_t)v - z) * 1048576, m, n);
    return r < -536870912 ? -536870912 : (r > 536870912 ? 536870912 : r);
}

static void ppg_add(const int8_t *a, const int8_t *b, int8_t *y, int32_t size, int32_t za, int32_t ma, int32_t na,
                    int32_t zb, int32_t mb, int32_t nb, int32_t zy, int32_t qmin, int32_t qmax)
{
    int32_t i;
    for (i = 0; i < size; ++i) {
        int32_t s = ppg_add_term(a[i], za, ma, na) + ppg_add_term(b[i], zb, mb, nb);
        y[i] = ppg_sat(ppg_requant(s, 1073741824, 50) + zy, qmin, qmax);
    }
}
)";

constexpr const char* kRescale = R"(
static void ppg_rescale(const int8_t *x, int8_t *y, int32_t size, int32_t zx, int32_t m, int32_t n, int32_t zy,
                        int32_t qmin, int32_t qmax)
{
    int32_t i;
    for (i = 0; i < size; ++i) y[i] = ppg_sat(ppg_requant((int32_t)x[i] - zx, m, n) + zy, qmin, qmax);
}
)";

constexpr const char* kMaxPool = R"(
static void ppg_max_pool(const int8_t *x, int8_t *y, int32_t ch, int32_t li, int32_t lo, int32_t k, int32_t stride)
{
    int32_t c, t, j;
    for (c = 0; c < ch; ++c) {
        for (t = 0; t < lo; ++t) {
            int8_t v = x[c * li + t * stride];
            for (j = 1; j < k; ++j) {
                if (x[c * li + t * stride + j] > v) v = x[c * li + t * stride + j];
            }
            y[c * lo + t] = v;
        }
    }
}
)";

constexpr const char* kAvgPool = R"(
static void ppg_avg_pool(const int8_t *x, int8_t *y, int32_t ch, int32_t li, int32_t lo, int32_t k, int32_t stride,
                         int32_t zx, int32_t m, int32_t n, int32_t zy, int32_t qmin, int32_t qmax)
{
    int32_t c, t, j;
    for (c = 0; c < ch; ++c) {
        for (t = 0; t < lo; ++t) {
            int32_t acc = 0;
            for (j = 0; j < k; ++j) acc += (int32_t)x[c * li + t * stride + j] - zx;
            y[c * lo + t] = ppg_sat(ppg_requant(acc, m, n) + zy, qmin, qmax);
        }
    }
}
)";

constexpr const char* kUpsample = R"(
static void ppg_upsample(const int8_t *x, int8_t *y, int32_t ch, int32_t li)
{
    int32_t c, t;
    for (c = 0; c < ch; ++c) {
        for (t = 0; t < 2 * li; ++t) y[c * 2 * li + t] = x[c * li + t / 2];
    }
}
)";

constexpr const char* kRelu = R"(
static void ppg_relu(const int8_t *x, int8_t *y, int32_t size, int32_t zx)
{
    int32_t i;
    for (i = 0; i < size; ++i) y[i] = (int32_t)x[i] > zx ? x[i] : (int8_t)zx;
}
)";

std::string arena_ref(const ActivationPlan& plan, int buf) {
  return "ppg_arena + " + std::to_string(plan.offsets[static_cast<std::size_t>(buf)]);
}

template <typename T>
void emit_array(std::ostringstream& os, const char* type, const std::string& name, const std::vector<T>& v) {
  os << "static const " << type << " " << name << "[" << v.size() << "] = {";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i % 16 == 0) os << "\n    ";
    os << static_cast<long long>(v[i]);
    if (i + 1 < v.size()) os << ", ";
  }
  os << "\n};\n";
}

}  // namespace

EmittedC emit_c(const IntGraph& ig) {
  validate(ig);
  const ActivationPlan plan = plan_activations(ig);
  const auto& in = ig.input_buffer();
  const auto& out = ig.output_buffer();

  std::ostringstream hdr;
  hdr.precision(9);
  hdr << "/* Generated by ppgnas: integer weights and interface of ppg_net. */\n"
      << "#ifndef PPG_NET_WEIGHTS_H\n#define PPG_NET_WEIGHTS_H\n\n#include <stdint.h>\n\n"
      << "#define PPG_NET_INPUT_SIZE " << in.size() << "\n"
      << "#define PPG_NET_OUTPUT_SIZE " << out.size() << "\n"
      << "#define PPG_NET_ARENA_SIZE " << plan.arena_bytes << "\n\n"
      << "/* input: [" << in.channels << "][" << in.length << "] int8, value = (q - " << in.zero_point << ") * "
      << in.scale << "\n   output: [" << out.channels << "][" << out.length << "] int8, value = (q - "
      << out.zero_point << ") * " << out.scale << " */\n"
      << "void ppg_net_run(const int8_t *input, int8_t *output);\n\n"
      << "#ifdef PPG_NET_DEFINE_WEIGHTS\n";

  std::set<std::string> used;
  std::ostringstream body;
  body << "void ppg_net_run(const int8_t *input, int8_t *output)\n{\n    int32_t i;\n"
       << "    for (i = 0; i < PPG_NET_INPUT_SIZE; ++i) (" << arena_ref(plan, 0) << ")[i] = input[i];\n";
  for (std::size_t li = 0; li < ig.layers.size(); ++li) {
    const auto& l = ig.layers[li];
    const auto& x = ig.buffers[static_cast<std::size_t>(l.inputs[0])];
    const auto& y = ig.buffers[static_cast<std::size_t>(l.output)];
    const std::string xs = arena_ref(plan, l.inputs[0]);
    const std::string ys = arena_ref(plan, l.output);
    const std::string w = "ppg_w" + std::to_string(li), b = "ppg_b" + std::to_string(li);
    auto rq = [&](std::size_t k) {
      return std::to_string(l.requant[k].m) + ", " + std::to_string(l.requant[k].n);
    };
    const std::string tail = std::to_string(y.zero_point) + ", " + std::to_string(y.qmin) + ", " +
                             std::to_string(y.qmax);
    if (!l.weights.empty()) {
      emit_array(hdr, "int8_t", w, l.weights);
      emit_array(hdr, "int32_t", b, l.bias);
    }
    body << "    /* layer " << li << ": " << int_op_name(l.op) << " */\n    ";
    switch (l.op) {
      case IntOp::kConv:
        used.insert(kConv);
        body << "ppg_conv(" << xs << ", " << ys << ", " << w << ", " << b << ", " << x.channels << ", " << x.length
             << ", " << y.channels << ", " << y.length << ", " << l.kernel << ", " << l.stride << ", " << l.padding
             << ", " << x.zero_point << ", " << l.zero_w << ", " << rq(0) << ", " << tail << ");\n";
        break;
      case IntOp::kDepthwise:
        used.insert(kDepthwise);
        body << "ppg_depthwise(" << xs << ", " << ys << ", " << w << ", " << b << ", " << x.channels << ", "
             << x.length << ", " << y.length << ", " << l.kernel << ", " << l.stride << ", " << l.padding << ", "
             << x.zero_point << ", " << l.zero_w << ", " << rq(0) << ", " << tail << ");\n";
        break;
      case IntOp::kLinear:
        used.insert(kLinear);
        body << "ppg_linear(" << xs << ", " << ys << ", " << w << ", " << b << ", " << x.channels << ", "
             << y.channels << ", " << x.zero_point << ", " << l.zero_w << ", " << rq(0) << ", " << tail << ");\n";
        break;
      case IntOp::kAdd: {
        used.insert(kAdd);
        const auto& x2 = ig.buffers[static_cast<std::size_t>(l.inputs[1])];
        body << "ppg_add(" << xs << ", " << arena_ref(plan, l.inputs[1]) << ", " << ys << ", " << y.size() << ", "
             << x.zero_point << ", " << rq(0) << ", " << x2.zero_point << ", " << rq(1) << ", " << tail << ");\n";
        break;
      }
      case IntOp::kConcat: {
        used.insert(kRescale);
        const auto& x2 = ig.buffers[static_cast<std::size_t>(l.inputs[1])];
        body << "ppg_rescale(" << xs << ", " << ys << ", " << x.size() << ", " << x.zero_point << ", " << rq(0)
             << ", " << tail << ");\n    ";
        body << "ppg_rescale(" << arena_ref(plan, l.inputs[1]) << ", " << ys << " + " << x.size() << ", "
             << x2.size() << ", " << x2.zero_point << ", " << rq(1) << ", " << tail << ");\n";
        break;
      }
      case IntOp::kMaxPool:
        used.insert(kMaxPool);
        body << "ppg_max_pool(" << xs << ", " << ys << ", " << x.channels << ", " << x.length << ", " << y.length
             << ", " << l.kernel << ", " << l.stride << ");\n";
        break;
      case IntOp::kAvgPool:
      case IntOp::kGlobalAvgPool: {
        used.insert(kAvgPool);
        const std::size_t k = l.op == IntOp::kAvgPool ? l.kernel : x.length;
        const std::size_t stride = l.op == IntOp::kAvgPool ? l.stride : 1;
        body << "ppg_avg_pool(" << xs << ", " << ys << ", " << x.channels << ", " << x.length << ", " << y.length
             << ", " << k << ", " << stride << ", " << x.zero_point << ", " << rq(0) << ", " << tail << ");\n";
        break;
      }
      case IntOp::kUpsample:
        used.insert(kUpsample);
        body << "ppg_upsample(" << xs << ", " << ys << ", " << x.channels << ", " << x.length << ");\n";
        break;
      case IntOp::kRelu:
        used.insert(kRelu);
        body << "ppg_relu(" << xs << ", " << ys << ", " << x.size() << ", " << x.zero_point << ");\n";
        break;
    }
  }
  body << "    for (i = 0; i < PPG_NET_OUTPUT_SIZE; ++i) output[i] = (" << arena_ref(plan, ig.output)
       << ")[i];\n}\n";
  hdr << "#endif /* PPG_NET_DEFINE_WEIGHTS */\n\n#endif /* PPG_NET_WEIGHTS_H */\n";

  std::ostringstream src;
  src << "/* Generated by ppgnas: integer-only inference, C99. */\n"
      << "#define PPG_NET_DEFINE_WEIGHTS\n#include \"" << kEmittedHeaderName << "\"\n\n"
      << "static int8_t ppg_arena[PPG_NET_ARENA_SIZE];\n\n";
  bool any_requant = false;
  for (const char* k : {kConv, kDepthwise, kLinear, kAdd, kRescale, kAvgPool})
    if (used.count(k)) any_requant = true;
  if (any_requant) src << kRequant;
  // Fixed order keeps the output byte-deterministic.
  for (const char* k : {kConv, kDepthwise, kLinear, kAdd, kRescale, kMaxPool, kAvgPool, kUpsample, kRelu})
    if (used.count(k)) src << k;
  src << "\n" << body.str();
  return {src.str(), hdr.str()};
}

std::string emit_driver() {
  return R"(/* Reads int8 windows from stdin and writes ppg_net outputs to stdout. */
#include <stdio.h>
#include "ppg_net_weights.h"

int main(void)
{
    static int8_t in[PPG_NET_INPUT_SIZE];
    static int8_t out[PPG_NET_OUTPUT_SIZE];
    while (fread(in, 1, sizeof in, stdin) == sizeof in) {
        ppg_net_run(in, out);
        if (fwrite(out, 1, sizeof out, stdout) != sizeof out) return 1;
    }
    return 0;
}
)";
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

}  // namespace

CVerifyResult verify_emitted_c(const IntGraph& ig, std::size_t windows, std::uint64_t seed, const std::string& work_dir,
                               const std::string& cc) {
  namespace fs = std::filesystem;
  const fs::path dir(work_dir);
  fs::create_directories(dir);
  const EmittedC e = emit_c(ig);
  write_file_atomic((dir / kEmittedSourceName).string(), e.source);
  write_file_atomic((dir / kEmittedHeaderName).string(), e.weights_header);
  write_file_atomic((dir / "ppg_driver.c").string(), emit_driver());

  CVerifyResult r;
  r.windows = windows;
  const fs::path exe = dir / "ppg_driver";
  const fs::path log = dir / "cc.log";
  const std::string cmd = cc + " -std=c99 -Wall -Wextra -pedantic -Werror -O2 -I" + shell_quote(dir.string()) + " " +
                          shell_quote((dir / kEmittedSourceName).string()) + " " +
                          shell_quote((dir / "ppg_driver.c").string()) + " -o " + shell_quote(exe.string()) + " > " +
                          shell_quote(log.string()) + " 2>&1";
  const int rc = std::system(cmd.c_str());
  r.log = fs::exists(log) ? read_file(log.string()) : std::string();
  if (rc != 0) return r;
  r.compiled = true;

  const IntBuffer& in = ig.input_buffer();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(in.qmin, in.qmax);
  std::string inputs;
  std::vector<std::vector<std::int8_t>> expected;
  for (std::size_t w = 0; w < windows; ++w) {
    std::vector<std::int8_t> x(in.size());
    for (auto& v : x) v = static_cast<std::int8_t>(dist(rng));
    inputs.append(reinterpret_cast<const char*>(x.data()), x.size());
    expected.push_back(run(ig, x));
  }
  const fs::path in_path = dir / "inputs.bin";
  const fs::path out_path = dir / "outputs.bin";
  write_file_atomic(in_path.string(), inputs);
  const std::string run_cmd = shell_quote(exe.string()) + " < " + shell_quote(in_path.string()) + " > " +
                              shell_quote(out_path.string());
  if (std::system(run_cmd.c_str()) != 0) {
    r.log += "driver exited with an error\n";
    r.mismatched_windows = windows;
    return r;
  }
  const std::string got = read_file(out_path.string());
  const std::size_t osz = ig.output_buffer().size();
  if (got.size() != windows * osz) {
    r.log += "driver wrote " + std::to_string(got.size()) + " bytes, expected " + std::to_string(windows * osz) + "\n";
    r.mismatched_windows = windows;
    return r;
  }
  for (std::size_t w = 0; w < windows; ++w) {
    for (std::size_t k = 0; k < osz; ++k) {
      if (static_cast<std::int8_t>(got[w * osz + k]) != expected[w][k]) {
        ++r.mismatched_windows;
        break;
      }
    }
  }
  return r;
}

}  // namespace ppgnas
