// SPDX-License-Identifier: Apache-2.0
//
// Fully-integer lowered graph: int8 activations and weights, int32 biases and
// accumulators, and per-layer requantisation by a normalised multiplier m in
// [2^30, 2^31) with right shift n (real multiplier m * 2^-n).
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ppgnas/graph.hpp"

namespace ppgnas {

class QatModel;

enum class IntOp { kConv, kDepthwise, kLinear, kAdd, kConcat, kMaxPool, kAvgPool, kGlobalAvgPool, kUpsample, kRelu };

const char* int_op_name(IntOp op);
IntOp int_op_from_name(const std::string& name);

struct Requant {
  std::int32_t m = 1 << 30;
  std::int32_t n = 31;
  bool operator==(const Requant&) const = default;
};

// Encodes a positive real multiplier; throws kNumeric when it is not positive
// or needs a shift outside [1, 62].
Requant encode_multiplier(double m0);
double decode_multiplier(const Requant& r);

// round(acc * m * 2^-n) with ties towards +inf, saturated to +-2^30.
std::int32_t requantize(std::int32_t acc, const Requant& r);

// An int8 activation tensor [channels, length] with value (q - zero_point) * scale.
struct IntBuffer {
  std::size_t channels = 0;
  std::size_t length = 0;
  float scale = 1.0f;
  std::int32_t zero_point = 0;
  std::int32_t qmin = -128;
  std::int32_t qmax = 127;

  std::size_t size() const { return channels * length; }
  bool operator==(const IntBuffer&) const = default;
};

// Fractional bits of the intermediate sum in Add layers.
inline constexpr int kAddShift = 20;

// One integer kernel. Convolution kinds use `weights` laid out like the float
// tensors ([Co,Ci,K], [C,1,K] or [Out,In]), `bias` at scale s_in*s_w and one
// requant entry; Add/Concat carry one requant per input (s_in/s_out); pooling
// carries s_in/(k*s_out) for AvgPool/GlobalAvgPool and none otherwise.
struct IntLayer {
  IntOp op = IntOp::kConv;
  std::vector<int> inputs;  // buffer ids
  int output = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::vector<std::int8_t> weights;
  std::vector<std::int32_t> bias;
  std::int32_t zero_w = 0;
  std::vector<Requant> requant;
  bool operator==(const IntLayer&) const = default;
};

struct IntGraph {
  std::vector<IntBuffer> buffers;  // buffer 0 is the network input
  std::vector<IntLayer> layers;    // topological order
  int output = 0;
  OutputArity arity = OutputArity::kScalar;
  // Buffer holding each node of the source graph (for tracing).
  std::vector<int> node_buffer;

  const IntBuffer& input_buffer() const { return buffers.front(); }
  const IntBuffer& output_buffer() const { return buffers.at(static_cast<std::size_t>(output)); }
  bool operator==(const IntGraph&) const = default;
};

// Throws kInvalidArgument / kShape / kNumeric on a malformed graph, including a
// potential 32-bit accumulator overflow.
void validate(const IntGraph& ig);

// Lowers a QAT model using its current weights and PaCT ranges.
IntGraph export_int_graph(const QatModel& qm);

std::vector<std::int8_t> quantize_input(const IntGraph& ig, std::span<const float> x);
std::vector<float> dequantize_output(const IntGraph& ig, std::span<const std::int8_t> q);

// Single-window inference.
std::vector<std::int8_t> run(const IntGraph& ig, std::span<const std::int8_t> input);
// Contents of every buffer after inference.
std::vector<std::vector<std::int8_t>> run_trace(const IntGraph& ig, std::span<const std::int8_t> input);
// Executes one layer given the contents of all buffers it reads.
void run_layer(const IntGraph& ig, const IntLayer& layer, std::vector<std::vector<std::int8_t>>& buffers);

// Arena offsets of every buffer. Buffers are placed first-fit in production
// order; two buffers share bytes only when their live ranges are disjoint.
struct ActivationPlan {
  std::vector<std::size_t> offsets;
  std::size_t arena_bytes = 0;
};
ActivationPlan plan_activations(const IntGraph& ig);

inline constexpr std::size_t kDefaultBudgetBytes = 524288;
inline constexpr std::size_t kRuntimeOverheadBytes = 16384;

struct MemoryReport {
  std::size_t weight_bytes = 0;  // int8 weights + 4 bytes per bias
  std::size_t peak_activation_bytes = 0;
  std::size_t overhead_bytes = kRuntimeOverheadBytes;
  std::size_t total_bytes = 0;
  std::size_t budget_bytes = kDefaultBudgetBytes;
  bool fits = false;
};
MemoryReport memory_report(const IntGraph& ig, std::size_t budget_bytes = kDefaultBudgetBytes,
                           std::size_t overhead_bytes = kRuntimeOverheadBytes);

std::uint64_t mac_count(const IntGraph& ig);

}  // namespace ppgnas
