// SPDX-License-Identifier: Apache-2.0
//
// Portable C99 emitter for an IntGraph. The emitted translation unit uses
// only 8/16/32-bit integer arithmetic and one static activation arena laid
// out by plan_activations(); it reproduces run() bit for bit.
#pragma once

#include <cstdint>
#include <string>

#include "ppgnas/int_graph.hpp"

namespace ppgnas {

struct EmittedC {
  std::string source;          // ppg_net.c
  std::string weights_header;  // ppg_net_weights.h
};

inline constexpr const char* kEmittedSourceName = "ppg_net.c";
inline constexpr const char* kEmittedHeaderName = "ppg_net_weights.h";

// Entry point: void ppg_net_run(const int8_t *input, int8_t *output).
EmittedC emit_c(const IntGraph& ig);

// A stdin/stdout harness: reads PPG_NET_INPUT_SIZE bytes per window until EOF
// and writes PPG_NET_OUTPUT_SIZE bytes per window.
std::string emit_driver();

// Writes the emitted files plus the driver into `work_dir`, compiles them
// with `cc -std=c99 -Wall -Wextra -pedantic -Werror`, feeds `windows` seeded
// random int8 inputs through both the binary and run(), and compares bytes.
struct CVerifyResult {
  bool compiled = false;
  std::size_t windows = 0;
  std::size_t mismatched_windows = 0;
  std::string log;  // compiler / runner diagnostics
  bool bit_exact() const { return compiled && mismatched_windows == 0; }
};
CVerifyResult verify_emitted_c(const IntGraph& ig, std::size_t windows, std::uint64_t seed, const std::string& work_dir,
                               const std::string& cc = "cc");

}  // namespace ppgnas
