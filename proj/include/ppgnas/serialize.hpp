// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint files. Layout (all integers little-endian):
//   8-byte magic, u32 version, u64 descriptor length, UTF-8 JSON descriptor,
//   raw blob.
// Float models use magic "PPGNASM1" and an f32 blob; integer graphs use
// "PPGNASI1" with int8 weights followed by int32 biases. Weights round-trip
// bit-exactly.
#pragma once

#include <string>

#include "ppgnas/int_graph.hpp"
#include "ppgnas/model.hpp"

namespace ppgnas {

// `meta_json` is an optional JSON object stored verbatim under "meta".
void save_model(const std::string& path, const Model& model, const std::string& meta_json = "{}");
Model load_model(const std::string& path, std::string* meta_json = nullptr);

std::string model_to_bytes(const Model& model, const std::string& meta_json = "{}");
Model model_from_bytes(const std::string& bytes, std::string* meta_json = nullptr);

void save_int_graph(const std::string& path, const IntGraph& ig);
IntGraph load_int_graph(const std::string& path);

std::string int_graph_to_bytes(const IntGraph& ig);
IntGraph int_graph_from_bytes(const std::string& bytes);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace ppgnas
