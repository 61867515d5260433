// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/ppgnas.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include "ppgnas/codegen.hpp"
#include "ppgnas/error.hpp"
#include "ppgnas/pipeline.hpp"
#include "ppgnas/serialize.hpp"

struct ppgnas_config {
  ppgnas::PipelineConfig cfg;
};
struct ppgnas_data {
  ppgnas::PreparedData data;
};
struct ppgnas_model {
  ppgnas::Model model;
};
struct ppgnas_int_graph {
  ppgnas::IntGraph ig;
};

namespace {

thread_local std::string g_last_error;

ppgnas_status status_of(ppgnas::ErrorKind k) {
  using ppgnas::ErrorKind;
  switch (k) {
    case ErrorKind::kInvalidArgument: return PPGNAS_E_INVALID_ARGUMENT;
    case ErrorKind::kShape: return PPGNAS_E_SHAPE;
    case ErrorKind::kGeometry: return PPGNAS_E_GEOMETRY;
    case ErrorKind::kNumeric: return PPGNAS_E_NUMERIC;
    case ErrorKind::kIo: return PPGNAS_E_IO;
    case ErrorKind::kBudget: return PPGNAS_E_BUDGET;
    case ErrorKind::kState: return PPGNAS_E_STATE;
  }
  return PPGNAS_E_INTERNAL;
}

template <typename F>
ppgnas_status guard(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const ppgnas::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PPGNAS_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PPGNAS_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return PPGNAS_E_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) ppgnas::fail(ppgnas::ErrorKind::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

ppgnas_eval to_c(const ppgnas::EvalResult& e) {
  ppgnas_eval r{};
  r.has_sbp = e.mae_sbp.has_value();
  r.has_dbp = e.mae_dbp.has_value();
  r.mae_sbp = e.mae_sbp.value_or(0.0);
  r.mae_dbp = e.mae_dbp.value_or(0.0);
  r.primary = e.primary;
  return r;
}

ppgnas::EvalResult from_c(const ppgnas_eval& e) {
  ppgnas::EvalResult r;
  if (e.has_sbp) r.mae_sbp = e.mae_sbp;
  if (e.has_dbp) r.mae_dbp = e.mae_dbp;
  r.primary = e.primary;
  return r;
}

ppgnas_memory to_c(const ppgnas::MemoryReport& m) {
  return ppgnas_memory{m.weight_bytes, m.peak_activation_bytes, m.overhead_bytes, m.total_bytes, m.budget_bytes,
                       m.fits ? 1 : 0};
}

std::size_t output_size(const ppgnas::Graph& g) {
  const auto s = g.output_shape();
  return s.channels * s.length;
}

}  // namespace

extern "C" {

const char* ppgnas_version(void) { return ppgnas::kToolVersion; }

const char* ppgnas_last_error(void) { return g_last_error.c_str(); }

const char* ppgnas_status_name(ppgnas_status s) {
  switch (s) {
    case PPGNAS_OK: return "ok";
    case PPGNAS_E_INVALID_ARGUMENT: return "invalid argument";
    case PPGNAS_E_SHAPE: return "shape error";
    case PPGNAS_E_GEOMETRY: return "geometry error";
    case PPGNAS_E_NUMERIC: return "numeric error";
    case PPGNAS_E_IO: return "i/o error";
    case PPGNAS_E_BUDGET: return "memory budget exceeded";
    case PPGNAS_E_STATE: return "invalid state";
    case PPGNAS_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void ppgnas_string_free(char* s) { std::free(s); }

ppgnas_status ppgnas_config_default(ppgnas_config** out) {
  return guard([&] {
    require(out, "out is null");
    *out = new ppgnas_config{};
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_config_from_json(const char* json, ppgnas_config** out) {
  return guard([&] {
    require(json && out, "null argument");
    *out = nullptr;
    auto cfg = ppgnas::config_from_json(json);
    *out = new ppgnas_config{std::move(cfg)};
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_config_to_json(const ppgnas_config* cfg, char** out) {
  return guard([&] {
    require(cfg && out, "null argument");
    *out = dup_string(ppgnas::config_to_json(cfg->cfg));
    return PPGNAS_OK;
  });
}

void ppgnas_config_free(ppgnas_config* cfg) { delete cfg; }

ppgnas_status ppgnas_data_prepare(const ppgnas_config* cfg, ppgnas_data** out) {
  return guard([&] {
    require(cfg && out, "null argument");
    *out = nullptr;
    auto d = ppgnas::prepare_data(cfg->cfg);
    *out = new ppgnas_data{std::move(d)};
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_data_info(const ppgnas_data* d, size_t* n_train, size_t* n_val, size_t* n_test,
                               size_t* input_len) {
  return guard([&] {
    require(d, "data is null");
    if (n_train) *n_train = d->data.train.count;
    if (n_val) *n_val = d->data.val.count;
    if (n_test) *n_test = d->data.test.count;
    if (input_len) *input_len = d->data.input_len;
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_data_test_inputs(const ppgnas_data* d, float* out, size_t max, size_t* n) {
  return guard([&] {
    require(d && n && (out || max == 0), "null argument");
    const auto& t = d->data.test;
    *n = std::min(max, t.count);
    std::memcpy(out, t.inputs.data(), *n * t.input_stride() * sizeof(float));
    return PPGNAS_OK;
  });
}

void ppgnas_data_free(ppgnas_data* d) { delete d; }

ppgnas_status ppgnas_model_seed(const ppgnas_config* cfg, size_t input_len, uint64_t seed, ppgnas_model** out) {
  return guard([&] {
    require(cfg && out, "null argument");
    *out = nullptr;
    auto m = ppgnas::Model::initialize(ppgnas::build_seed_graph(cfg->cfg, input_len), seed);
    *out = new ppgnas_model{std::move(m)};
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_model_train_seed(const ppgnas_config* cfg, const ppgnas_data* d, ppgnas_model** out,
                                      ppgnas_eval* eval) {
  return guard([&] {
    require(cfg && d && out, "null argument");
    *out = nullptr;
    auto r = ppgnas::train_seed(cfg->cfg, d->data);
    if (eval) *eval = to_c(r.eval);
    *out = new ppgnas_model{std::move(r.model)};
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_model_info(const ppgnas_model* m, size_t* params, uint64_t* macs, size_t* input_len,
                                size_t* out_size) {
  return guard([&] {
    require(m, "model is null");
    const auto& g = m->model.graph();
    if (params) *params = ppgnas::param_count(g);
    if (macs) *macs = ppgnas::mac_count(g);
    if (input_len) *input_len = g.input_shape().length;
    if (out_size) *out_size = output_size(g);
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_model_evaluate(ppgnas_model* m, const ppgnas_data* d, ppgnas_eval* eval) {
  return guard([&] {
    require(m && d && eval, "null argument");
    if (m->model.graph().input_shape().length != d->data.input_len)
      ppgnas::fail(ppgnas::ErrorKind::kShape, "model input length " +
                                                  std::to_string(m->model.graph().input_shape().length) +
                                                  " does not match the data (" + std::to_string(d->data.input_len) + ")");
    *eval = to_c(ppgnas::evaluate(m->model, d->data));
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_model_predict(ppgnas_model* m, const float* x, size_t n, float* out) {
  return guard([&] {
    require(m && x && out, "null argument");
    const auto in = m->model.graph().input_shape();
    ppgnas::TensorDataset ds;
    ds.count = n;
    ds.in_channels = in.channels;
    ds.in_len = in.length;
    ds.inputs.assign(x, x + n * in.channels * in.length);
    const auto y = ppgnas::predict(m->model, ds);
    std::memcpy(out, y.data(), y.size() * sizeof(float));
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_model_save(const ppgnas_model* m, const char* path, const ppgnas_config* cfg,
                                const ppgnas_data* d) {
  return guard([&] {
    require(m && path, "null argument");
    const std::string meta = cfg && d ? ppgnas::checkpoint_meta(cfg->cfg, d->data) : std::string("{}");
    ppgnas::save_model(path, m->model, meta);
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_model_load(const char* path, ppgnas_model** out, char** meta_json) {
  return guard([&] {
    require(path && out, "null argument");
    *out = nullptr;
    std::string meta;
    auto m = ppgnas::load_model(path, &meta);
    if (meta_json) *meta_json = dup_string(meta);
    *out = new ppgnas_model{std::move(m)};
    return PPGNAS_OK;
  });
}

void ppgnas_model_free(ppgnas_model* m) { delete m; }

ppgnas_status ppgnas_write_seed_report(const char* dir, const ppgnas_model* m, const ppgnas_eval* eval) {
  return guard([&] {
    require(dir && m && eval, "null argument");
    ppgnas::SeedResult s;
    s.params = ppgnas::param_count(m->model.graph());
    s.macs = ppgnas::mac_count(m->model.graph());
    s.eval = from_c(*eval);
    ppgnas::write_seed_report(dir, s);
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_sweep(const ppgnas_config* cfg, const ppgnas_data* d, const ppgnas_model* seed,
                           ppgnas_row_callback cb, void* user, size_t* n_rows) {
  return guard([&] {
    require(cfg && d && seed, "null argument");
    if (seed->model.graph().input_shape().length != d->data.input_len)
      ppgnas::fail(ppgnas::ErrorKind::kShape, "seed checkpoint input length does not match the data");
    auto rows = ppgnas::run_sweep(cfg->cfg, d->data, seed->model, [&](const ppgnas::SweepRow& r) {
      if (!cb) return;
      ppgnas_sweep_row c{r.lambda, r.params, r.size_bytes, r.macs, to_c(r.eval), r.seed, r.pareto ? 1 : 0};
      cb(&c, user);
    });
    if (n_rows) *n_rows = rows.size();
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_quantize(const ppgnas_config* cfg, const ppgnas_model* m, const ppgnas_data* d,
                              ppgnas_int_graph** out, ppgnas_deploy_info* info) {
  return guard([&] {
    require(cfg && m && out, "null argument");
    *out = nullptr;
    auto r = ppgnas::quantize_deploy(cfg->cfg, m->model, d ? &d->data : nullptr);
    if (info) {
      *info = ppgnas_deploy_info{};
      info->memory = to_c(r.memory);
      info->macs = r.macs;
      info->evaluated = d ? 1 : 0;
      info->float_eval = to_c(r.float_eval);
      info->qat_eval = to_c(r.qat_eval);
      info->int_eval = to_c(r.int_eval);
    }
    const bool fits = r.memory.fits;
    const std::size_t total = r.memory.total_bytes, budget = r.memory.budget_bytes;
    *out = new ppgnas_int_graph{std::move(r.int_graph)};
    if (!fits) {
      g_last_error = "o.o.m.: deployment needs " + std::to_string(total) + " bytes, budget is " +
                     std::to_string(budget);
      return PPGNAS_E_BUDGET;
    }
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_int_graph_info(const ppgnas_int_graph* g, size_t* input_size, size_t* out_size,
                                    ppgnas_memory* mem, size_t budget_bytes) {
  return guard([&] {
    require(g, "graph is null");
    if (input_size) *input_size = g->ig.input_buffer().size();
    if (out_size) *out_size = g->ig.output_buffer().size();
    if (mem) *mem = to_c(ppgnas::memory_report(g->ig, budget_bytes ? budget_bytes : ppgnas::kDefaultBudgetBytes));
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_int_graph_run(const ppgnas_int_graph* g, const int8_t* input, int8_t* output) {
  return guard([&] {
    require(g && input && output, "null argument");
    const auto y = ppgnas::run(g->ig, std::span<const std::int8_t>(input, g->ig.input_buffer().size()));
    std::memcpy(output, y.data(), y.size());
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_int_graph_quantize_input(const ppgnas_int_graph* g, const float* x, int8_t* q) {
  return guard([&] {
    require(g && x && q, "null argument");
    const auto v = ppgnas::quantize_input(g->ig, std::span<const float>(x, g->ig.input_buffer().size()));
    std::memcpy(q, v.data(), v.size());
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_int_graph_dequantize_output(const ppgnas_int_graph* g, const int8_t* q, float* y) {
  return guard([&] {
    require(g && q && y, "null argument");
    const auto v = ppgnas::dequantize_output(g->ig, std::span<const std::int8_t>(q, g->ig.output_buffer().size()));
    std::memcpy(y, v.data(), v.size() * sizeof(float));
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_int_graph_evaluate(const ppgnas_int_graph* g, const ppgnas_data* d, ppgnas_eval* eval) {
  return guard([&] {
    require(g && d && eval, "null argument");
    if (g->ig.input_buffer().size() != d->data.test.input_stride())
      ppgnas::fail(ppgnas::ErrorKind::kShape, "integer graph input size does not match the data");
    *eval = to_c(ppgnas::evaluate(g->ig, d->data));
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_int_graph_save(const ppgnas_int_graph* g, const char* path) {
  return guard([&] {
    require(g && path, "null argument");
    ppgnas::save_int_graph(path, g->ig);
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_int_graph_load(const char* path, ppgnas_int_graph** out) {
  return guard([&] {
    require(path && out, "null argument");
    *out = nullptr;
    auto ig = ppgnas::load_int_graph(path);
    *out = new ppgnas_int_graph{std::move(ig)};
    return PPGNAS_OK;
  });
}

void ppgnas_int_graph_free(ppgnas_int_graph* g) { delete g; }

ppgnas_status ppgnas_emit_c(const ppgnas_int_graph* g, const char* dir) {
  return guard([&] {
    require(g && dir, "null argument");
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto e = ppgnas::emit_c(g->ig);
    ppgnas::write_file_atomic((fs::path(dir) / ppgnas::kEmittedSourceName).string(), e.source);
    ppgnas::write_file_atomic((fs::path(dir) / ppgnas::kEmittedHeaderName).string(), e.weights_header);
    ppgnas::write_file_atomic((fs::path(dir) / "ppg_driver.c").string(), ppgnas::emit_driver());
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_verify_c(const ppgnas_int_graph* g, size_t windows, uint64_t seed, const char* dir,
                              const char* cc, int* compiled, size_t* mismatched_windows) {
  return guard([&] {
    require(g && dir, "null argument");
    const auto r = ppgnas::verify_emitted_c(g->ig, windows, seed, dir, cc ? cc : "cc");
    if (compiled) *compiled = r.compiled ? 1 : 0;
    if (mismatched_windows) *mismatched_windows = r.mismatched_windows;
    if (!r.compiled) {
      g_last_error = "emitted C failed to compile:\n" + r.log;
      return PPGNAS_E_INTERNAL;
    }
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_report(const char* dir, char** summary) {
  return guard([&] {
    require(dir, "dir is null");
    const auto s = ppgnas::write_report(dir);
    if (summary) *summary = dup_string(s);
    return PPGNAS_OK;
  });
}

ppgnas_status ppgnas_write_manifest(const ppgnas_config* cfg, const char* command) {
  return guard([&] {
    require(cfg && command, "null argument");
    ppgnas::write_manifest(cfg->cfg, command);
    return PPGNAS_OK;
  });
}

}  // extern "C"
