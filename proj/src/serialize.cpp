// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ppgnas/error.hpp"

namespace ppgnas {

namespace {

using nlohmann::json;

constexpr std::uint32_t kVersion = 1;
constexpr char kModelMagic[9] = "PPGNASM1";
constexpr char kIntMagic[9] = "PPGNASI1";

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(b, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) fail(ErrorKind::kIo, "checkpoint truncated");
  char b[sizeof(T)];
  std::memcpy(b, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

std::string frame(const char* magic, const json& desc, const std::string& blob) {
  std::string out(magic, 8);
  put<std::uint32_t>(out, kVersion);
  const std::string d = desc.dump();
  put<std::uint64_t>(out, d.size());
  out += d;
  out += blob;
  return out;
}

// Returns the descriptor and sets `blob_start`.
json unframe(const char* magic, const std::string& bytes, std::size_t& blob_start) {
  if (bytes.size() < 20 || bytes.compare(0, 8, magic) != 0) {
    fail(ErrorKind::kIo, std::string("not a ") + magic + " checkpoint");
  }
  std::size_t pos = 8;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kVersion) fail(ErrorKind::kIo, "unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(bytes, pos);
  if (pos + len > bytes.size()) fail(ErrorKind::kIo, "checkpoint descriptor truncated");
  json desc;
  try {
    desc = json::parse(bytes.substr(pos, len));
  } catch (const json::exception& e) {
    fail(ErrorKind::kIo, std::string("corrupt checkpoint descriptor: ") + e.what());
  }
  blob_start = pos + len;
  return desc;
}

json tensor_ref(const Tensor& t, std::string& blob) {
  json j;
  j["shape"] = t.shape();
  j["offset"] = blob.size() / 4;
  for (float v : t.data()) put(blob, v);
  return j;
}

std::vector<float> read_floats(const std::string& bytes, std::size_t blob_start, std::size_t offset, std::size_t n) {
  std::size_t pos = blob_start + offset * 4;
  std::vector<float> v(n);
  for (auto& x : v) x = get<float>(bytes, pos);
  return v;
}

}  // namespace

std::string model_to_bytes(const Model& model, const std::string& meta_json) {
  const Graph& g = model.graph();
  json desc;
  desc["input"] = {{"channels", g.input_shape().channels}, {"length", g.input_shape().length}};
  desc["arity"] = g.arity() == OutputArity::kScalar ? "scalar" : "series";
  std::string blob;
  json nodes = json::array();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& n = g.nodes()[i];
    const auto& p = model.params()[i];
    json jn;
    jn["kind"] = layer_kind_name(n.spec.kind);
    jn["c_in"] = n.spec.c_in;
    jn["c_out"] = n.spec.c_out;
    jn["kernel"] = n.spec.kernel;
    jn["stride"] = n.spec.stride;
    jn["padding"] = n.spec.padding;
    jn["has_bias"] = n.spec.has_bias;
    jn["inputs"] = n.inputs;
    json ts = json::array();
    for (const auto& t : p.tensors) ts.push_back(tensor_ref(t, blob));
    jn["tensors"] = ts;
    if (n.spec.kind == LayerKind::kBatchNorm) {
      json bn;
      bn["momentum"] = p.bn.momentum;
      bn["eps"] = p.bn.eps;
      bn["mean"] = tensor_ref(Tensor::from({p.bn.running_mean.size()}, p.bn.running_mean), blob);
      bn["var"] = tensor_ref(Tensor::from({p.bn.running_var.size()}, p.bn.running_var), blob);
      jn["bn"] = bn;
    }
    nodes.push_back(jn);
  }
  desc["nodes"] = nodes;
  try {
    desc["meta"] = json::parse(meta_json);
  } catch (const json::exception&) {
    fail(ErrorKind::kInvalidArgument, "checkpoint metadata is not valid JSON");
  }
  return frame(kModelMagic, desc, blob);
}

Model model_from_bytes(const std::string& bytes, std::string* meta_json) {
  std::size_t blob = 0;
  const json desc = unframe(kModelMagic, bytes, blob);
  try {
    const FeatureShape in{desc.at("input").at("channels").get<std::size_t>(),
                          desc.at("input").at("length").get<std::size_t>()};
    Graph g(in, desc.at("arity").get<std::string>() == "scalar" ? OutputArity::kScalar : OutputArity::kSeries);
    std::vector<LayerParams> params;
    auto load_tensor = [&](const json& jt) {
      const Shape shape = jt.at("shape").get<Shape>();
      return Tensor::from(shape, read_floats(bytes, blob, jt.at("offset").get<std::size_t>(), shape_numel(shape)),
                          true);
    };
    for (const auto& jn : desc.at("nodes")) {
      LayerSpec s;
      s.kind = layer_kind_from_name(jn.at("kind").get<std::string>());
      s.c_in = jn.at("c_in");
      s.c_out = jn.at("c_out");
      s.kernel = jn.at("kernel");
      s.stride = jn.at("stride");
      s.padding = jn.at("padding");
      s.has_bias = jn.at("has_bias");
      g.add(s, jn.at("inputs").get<std::vector<int>>());
      LayerParams p;
      for (const auto& jt : jn.at("tensors")) p.tensors.push_back(load_tensor(jt));
      if (jn.contains("bn")) {
        const auto& bn = jn["bn"];
        p.bn.momentum = bn.at("momentum");
        p.bn.eps = bn.at("eps");
        const auto m = load_tensor(bn.at("mean"));
        const auto v = load_tensor(bn.at("var"));
        p.bn.running_mean.assign(m.data().begin(), m.data().end());
        p.bn.running_var.assign(v.data().begin(), v.data().end());
      }
      params.push_back(std::move(p));
    }
    if (meta_json) *meta_json = desc.contains("meta") ? desc["meta"].dump() : "{}";
    return Model(std::move(g), std::move(params));
  } catch (const json::exception& e) {
    fail(ErrorKind::kIo, std::string("corrupt model descriptor: ") + e.what());
  }
}

std::string int_graph_to_bytes(const IntGraph& ig) {
  validate(ig);
  json desc;
  desc["arity"] = ig.arity == OutputArity::kScalar ? "scalar" : "series";
  desc["output"] = ig.output;
  desc["node_buffer"] = ig.node_buffer;
  json bufs = json::array();
  for (const auto& b : ig.buffers) {
    bufs.push_back({{"channels", b.channels},
                    {"length", b.length},
                    {"scale", b.scale},
                    {"zero_point", b.zero_point},
                    {"qmin", b.qmin},
                    {"qmax", b.qmax}});
  }
  desc["buffers"] = bufs;
  std::string weights, biases;
  json layers = json::array();
  for (const auto& l : ig.layers) {
    json jl;
    jl["op"] = int_op_name(l.op);
    jl["inputs"] = l.inputs;
    jl["output"] = l.output;
    jl["kernel"] = l.kernel;
    jl["stride"] = l.stride;
    jl["padding"] = l.padding;
    jl["zero_w"] = l.zero_w;
    json rq = json::array();
    for (const auto& r : l.requant) rq.push_back({r.m, r.n});
    jl["requant"] = rq;
    jl["weights"] = {{"offset", weights.size()}, {"count", l.weights.size()}};
    jl["bias"] = {{"offset", biases.size() / 4}, {"count", l.bias.size()}};
    weights.append(reinterpret_cast<const char*>(l.weights.data()), l.weights.size());
    for (auto b : l.bias) put(biases, b);
    layers.push_back(jl);
  }
  desc["layers"] = layers;
  desc["weight_bytes"] = weights.size();
  return frame(kIntMagic, desc, weights + biases);
}

IntGraph int_graph_from_bytes(const std::string& bytes) {
  std::size_t blob = 0;
  const json desc = unframe(kIntMagic, bytes, blob);
  IntGraph ig;
  try {
    ig.arity = desc.at("arity").get<std::string>() == "scalar" ? OutputArity::kScalar : OutputArity::kSeries;
    ig.output = desc.at("output");
    ig.node_buffer = desc.at("node_buffer").get<std::vector<int>>();
    for (const auto& jb : desc.at("buffers")) {
      IntBuffer b;
      b.channels = jb.at("channels");
      b.length = jb.at("length");
      b.scale = jb.at("scale");
      b.zero_point = jb.at("zero_point");
      b.qmin = jb.at("qmin");
      b.qmax = jb.at("qmax");
      ig.buffers.push_back(b);
    }
    const std::size_t wbytes = desc.at("weight_bytes");
    if (blob + wbytes > bytes.size()) fail(ErrorKind::kIo, "integer graph blob truncated");
    for (const auto& jl : desc.at("layers")) {
      IntLayer l;
      l.op = int_op_from_name(jl.at("op"));
      l.inputs = jl.at("inputs").get<std::vector<int>>();
      l.output = jl.at("output");
      l.kernel = jl.at("kernel");
      l.stride = jl.at("stride");
      l.padding = jl.at("padding");
      l.zero_w = jl.at("zero_w");
      for (const auto& r : jl.at("requant")) l.requant.push_back({r.at(0).get<std::int32_t>(), r.at(1).get<std::int32_t>()});
      const std::size_t wo = jl.at("weights").at("offset"), wc = jl.at("weights").at("count");
      if (wo + wc > wbytes) fail(ErrorKind::kIo, "integer graph weight reference out of range");
      l.weights.resize(wc);
      std::memcpy(l.weights.data(), bytes.data() + blob + wo, wc);
      const std::size_t bo = jl.at("bias").at("offset"), bc = jl.at("bias").at("count");
      std::size_t pos = blob + wbytes + bo * 4;
      for (std::size_t i = 0; i < bc; ++i) l.bias.push_back(get<std::int32_t>(bytes, pos));
      ig.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kIo, std::string("corrupt integer graph descriptor: ") + e.what());
  }
  validate(ig);
  return ig;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::kIo, "cannot write '" + tmp + "'");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) fail(ErrorKind::kIo, "write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void save_model(const std::string& path, const Model& model, const std::string& meta_json) {
  write_file_atomic(path, model_to_bytes(model, meta_json));
}

Model load_model(const std::string& path, std::string* meta_json) {
  try {
    return model_from_bytes(read_file(path), meta_json);
  } catch (const Error& e) {
    fail(e.kind(), path + ": " + e.what());
  }
}

void save_int_graph(const std::string& path, const IntGraph& ig) { write_file_atomic(path, int_graph_to_bytes(ig)); }

IntGraph load_int_graph(const std::string& path) {
  try {
    return int_graph_from_bytes(read_file(path));
  } catch (const Error& e) {
    fail(e.kind(), path + ": " + e.what());
  }
}

}  // namespace ppgnas
