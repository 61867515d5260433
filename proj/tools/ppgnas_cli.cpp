// SPDX-License-Identifier: Apache-2.0
//
// ppgnas: command-line front end over the libppgnas C API.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ppgnas/ppgnas.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kNumeric = 2, kBudget = 3, kOther = 4 };

struct Failure {
  ppgnas_status status;
  std::string message;
};

int exit_code(ppgnas_status s) {
  switch (s) {
    case PPGNAS_OK: return kOk;
    case PPGNAS_E_INVALID_ARGUMENT:
    case PPGNAS_E_SHAPE:
    case PPGNAS_E_GEOMETRY: return kUsage;
    case PPGNAS_E_NUMERIC: return kNumeric;
    case PPGNAS_E_BUDGET: return kBudget;
    default: return kOther;
  }
}

void check(ppgnas_status s) {
  if (s != PPGNAS_OK) throw Failure{s, ppgnas_last_error()};
}

struct ConfigDel {
  void operator()(ppgnas_config* p) const { ppgnas_config_free(p); }
};
struct DataDel {
  void operator()(ppgnas_data* p) const { ppgnas_data_free(p); }
};
struct ModelDel {
  void operator()(ppgnas_model* p) const { ppgnas_model_free(p); }
};
struct IntDel {
  void operator()(ppgnas_int_graph* p) const { ppgnas_int_graph_free(p); }
};
using ConfigPtr = std::unique_ptr<ppgnas_config, ConfigDel>;
using DataPtr = std::unique_ptr<ppgnas_data, DataDel>;
using ModelPtr = std::unique_ptr<ppgnas_model, ModelDel>;
using IntPtr = std::unique_ptr<ppgnas_int_graph, IntDel>;

std::string take(char* s) {
  std::string r = s ? s : "";
  ppgnas_string_free(s);
  return r;
}

// Flags shared by every pipeline command; unset flags leave the config file's value.
struct CommonFlags {
  std::string config_path;
  std::optional<std::string> dataset, profile, target, out_dir, split;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, nas_epochs, qat_epochs, finetune_epochs, workers, budget, fold, subjects;
  std::optional<double> window_seconds, synth_seconds;
  std::vector<double> lambdas;
  bool lambdas_set = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON config file");
    app->add_option("--dataset", dataset, "NDJSON record file or synthetic:<seed>");
    app->add_option("--profile", profile, "seed model: resnet | unet");
    app->add_option("--target", target, "sbp | dbp | sig2sig");
    app->add_option("-o,--out", out_dir, "output directory");
    app->add_option("--split", split, "holdout | kfold");
    app->add_option("--fold", fold, "k-fold index");
    app->add_option("--seed", seed, "root seed");
    app->add_option("--epochs", epochs, "seed training epochs");
    app->add_option("--nas-epochs", nas_epochs, "SuperNet epochs per lambda");
    app->add_option("--finetune-epochs", finetune_epochs, "child fine-tuning epochs");
    app->add_option("--qat-epochs", qat_epochs, "quantisation-aware fine-tuning epochs");
    app->add_option("--workers", workers, "parallel sweep workers");
    app->add_option("--budget", budget, "deployment budget in bytes");
    app->add_option("--window-seconds", window_seconds, "window length in seconds");
    app->add_option("--subjects", subjects, "synthetic subject count");
    app->add_option("--synth-seconds", synth_seconds, "synthetic seconds per subject");
    app->add_option("--lambdas", lambdas, "explicit lambda grid")->each([this](const std::string&) { lambdas_set = true; });
  }

  json document() const {
    json j = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Failure{PPGNAS_E_INVALID_ARGUMENT, "cannot open config " + config_path};
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw Failure{PPGNAS_E_INVALID_ARGUMENT, config_path + ": " + e.what()};
      }
    }
    if (dataset) j["dataset"] = *dataset;
    if (profile) j["profile"] = *profile;
    if (target) j["target"] = *target;
    if (out_dir) j["out_dir"] = *out_dir;
    if (split) j["split"] = *split;
    if (fold) j["fold"] = *fold;
    if (seed) j["seed"] = *seed;
    if (epochs) j["train"]["epochs"] = *epochs;
    if (nas_epochs) j["nas_epochs"] = *nas_epochs;
    if (finetune_epochs) j["finetune_epochs"] = *finetune_epochs;
    if (qat_epochs) j["qat_epochs"] = *qat_epochs;
    if (workers) j["workers"] = *workers;
    if (budget) j["budget_bytes"] = *budget;
    if (window_seconds) j["window_seconds"] = *window_seconds;
    if (subjects) j["synth_subjects"] = *subjects;
    if (synth_seconds) j["synth_seconds"] = *synth_seconds;
    if (lambdas_set) j["lambdas"] = lambdas;
    return j;
  }

  // Returns the parsed config and its normalised JSON.
  std::pair<ConfigPtr, json> load() const {
    ppgnas_config* c = nullptr;
    check(ppgnas_config_from_json(document().dump().c_str(), &c));
    ConfigPtr cfg(c);
    char* s = nullptr;
    check(ppgnas_config_to_json(cfg.get(), &s));
    return {std::move(cfg), json::parse(take(s))};
  }
};

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

std::string eval_text(const ppgnas_eval& e) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  if (e.has_sbp) os << "MAE SBP " << e.mae_sbp << " mmHg  ";
  if (e.has_dbp) os << "MAE DBP " << e.mae_dbp << " mmHg  ";
  return os.str();
}

void print_memory(const ppgnas_memory& m) {
  std::printf("weights %zu B, peak activations %zu B, overhead %zu B, total %zu B, budget %zu B: %s\n",
              m.weight_bytes, m.peak_activation_bytes, m.overhead_bytes, m.total_bytes, m.budget_bytes,
              m.fits ? "fits" : "o.o.m.");
}

DataPtr prepare(const ppgnas_config* cfg) {
  ppgnas_data* d = nullptr;
  check(ppgnas_data_prepare(cfg, &d));
  DataPtr data(d);
  std::size_t tr = 0, va = 0, te = 0, len = 0;
  check(ppgnas_data_info(data.get(), &tr, &va, &te, &len));
  std::printf("data: %zu train / %zu val / %zu test windows, %zu samples each\n", tr, va, te, len);
  return data;
}

ModelPtr load_model(const std::string& path) {
  ppgnas_model* m = nullptr;
  check(ppgnas_model_load(path.c_str(), &m, nullptr));
  return ModelPtr(m);
}

// ------------------------------------------------------------------ commands

int cmd_train_seed(const CommonFlags& f, const std::string& cmdline) {
  auto [cfg, doc] = f.load();
  const fs::path out = doc["out_dir"].get<std::string>();
  fs::create_directories(out);
  auto data = prepare(cfg.get());
  ppgnas_model* m = nullptr;
  ppgnas_eval ev{};
  check(ppgnas_model_train_seed(cfg.get(), data.get(), &m, &ev));
  ModelPtr model(m);
  const std::string ckpt = (out / "seed.ckpt").string();
  check(ppgnas_model_save(model.get(), ckpt.c_str(), cfg.get(), data.get()));
  check(ppgnas_write_seed_report(out.string().c_str(), model.get(), &ev));
  check(ppgnas_write_manifest(cfg.get(), cmdline.c_str()));
  std::size_t params = 0;
  check(ppgnas_model_info(model.get(), &params, nullptr, nullptr, nullptr));
  std::printf("seed: %zu parameters  %s\n", params, eval_text(ev).c_str());
  std::printf("checkpoint: %s\n", ckpt.c_str());
  return kOk;
}

int cmd_nas_sweep(const CommonFlags& f, const std::string& seed_ckpt, const std::string& cmdline) {
  auto [cfg, doc] = f.load();
  const fs::path out = doc["out_dir"].get<std::string>();
  fs::create_directories(out);
  auto data = prepare(cfg.get());
  const std::string ckpt = seed_ckpt.empty() ? (out / "seed.ckpt").string() : seed_ckpt;
  ModelPtr seed;
  if (fs::exists(ckpt)) {
    seed = load_model(ckpt);
    std::printf("seed checkpoint: %s\n", ckpt.c_str());
  } else {
    std::printf("no seed checkpoint at %s; training one\n", ckpt.c_str());
    ppgnas_model* m = nullptr;
    ppgnas_eval ev{};
    check(ppgnas_model_train_seed(cfg.get(), data.get(), &m, &ev));
    seed.reset(m);
    check(ppgnas_model_save(seed.get(), ckpt.c_str(), cfg.get(), data.get()));
    check(ppgnas_write_seed_report(out.string().c_str(), seed.get(), &ev));
    std::printf("seed: %s\n", eval_text(ev).c_str());
  }
  check(ppgnas_write_manifest(cfg.get(), cmdline.c_str()));
  auto on_row = [](const ppgnas_sweep_row* r, void*) {
    std::printf("lambda %.3e: %zu params  %s\n", r->lambda, r->params, eval_text(r->eval).c_str());
    std::fflush(stdout);
  };
  std::size_t n = 0;
  check(ppgnas_sweep(cfg.get(), data.get(), seed.get(), on_row, nullptr, &n));
  std::printf("%zu rows in %s\n", n, (out / "pareto.csv").string().c_str());
  return kOk;
}

int cmd_quantize(const CommonFlags& f, const std::string& ckpt, const std::string& int_out, bool no_eval,
                 const std::string& cmdline) {
  auto [cfg, doc] = f.load();
  const fs::path out = doc["out_dir"].get<std::string>();
  fs::create_directories(out);
  ModelPtr model;
  DataPtr data;
  if (ckpt.empty()) {
    // No checkpoint: size check of a freshly initialised seed graph.
    const bool unet = doc["profile"] == "unet";
    const std::size_t len = doc[unet ? "unet" : "resnet"]["input_len"].get<std::size_t>();
    ppgnas_model* m = nullptr;
    check(ppgnas_model_seed(cfg.get(), len, doc["seed"].get<std::uint64_t>(), &m));
    model.reset(m);
    std::printf("no checkpoint: size-only export of the untrained %s seed\n", unet ? "unet" : "resnet");
  } else {
    model = load_model(ckpt);
    if (!no_eval) data = prepare(cfg.get());
  }
  std::size_t params = 0;
  check(ppgnas_model_info(model.get(), &params, nullptr, nullptr, nullptr));
  std::printf("float model: %zu parameters\n", params);

  ppgnas_int_graph* g = nullptr;
  ppgnas_deploy_info info{};
  const ppgnas_status st = ppgnas_quantize(cfg.get(), model.get(), data.get(), &g, &info);
  if (st != PPGNAS_OK && st != PPGNAS_E_BUDGET) check(st);
  IntPtr ig(g);
  check(ppgnas_write_manifest(cfg.get(), cmdline.c_str()));
  if (info.evaluated) {
    std::printf("float: %s\n", eval_text(info.float_eval).c_str());
    std::printf("qat:   %s\n", eval_text(info.qat_eval).c_str());
    std::printf("int8:  %s\n", eval_text(info.int_eval).c_str());
  }
  std::printf("MACs %llu\n", static_cast<unsigned long long>(info.macs));
  print_memory(info.memory);
  const std::string path = int_out.empty() ? (out / "model.int").string() : int_out;
  check(ppgnas_int_graph_save(ig.get(), path.c_str()));
  std::printf("integer graph: %s\n", path.c_str());
  if (st == PPGNAS_E_BUDGET) {
    std::fprintf(stderr, "error: o.o.m.: %zu bytes needed, budget %zu bytes\n", info.memory.total_bytes,
                 info.memory.budget_bytes);
    return kBudget;
  }
  const std::string cdir = (out / "c").string();
  check(ppgnas_emit_c(ig.get(), cdir.c_str()));
  std::printf("emitted C: %s\n", cdir.c_str());
  return kOk;
}

int cmd_emit_c(const std::string& int_path, const std::string& dir, std::size_t verify, std::uint64_t seed,
               const std::string& cc) {
  ppgnas_int_graph* g = nullptr;
  check(ppgnas_int_graph_load(int_path.c_str(), &g));
  IntPtr ig(g);
  check(ppgnas_emit_c(ig.get(), dir.c_str()));
  std::printf("wrote %s/ppg_net.c, ppg_net_weights.h, ppg_driver.c\n", dir.c_str());
  if (verify == 0) return kOk;
  int compiled = 0;
  std::size_t bad = 0;
  check(ppgnas_verify_c(ig.get(), verify, seed, dir.c_str(), cc.c_str(), &compiled, &bad));
  std::printf("%zu windows, %zu mismatched\n", verify, bad);
  std::printf("bit-exact: %s\n", bad == 0 ? "PASS" : "FAIL");
  return bad == 0 ? kOk : kOther;
}

int cmd_eval(const CommonFlags& f, const std::string& ckpt, const std::string& int_path) {
  if (ckpt.empty() == int_path.empty()) throw Failure{PPGNAS_E_INVALID_ARGUMENT, "give exactly one of --ckpt or --int"};
  auto [cfg, doc] = f.load();
  auto data = prepare(cfg.get());
  ppgnas_eval ev{};
  if (!ckpt.empty()) {
    auto m = load_model(ckpt);
    check(ppgnas_model_evaluate(m.get(), data.get(), &ev));
  } else {
    ppgnas_int_graph* g = nullptr;
    check(ppgnas_int_graph_load(int_path.c_str(), &g));
    IntPtr ig(g);
    check(ppgnas_int_graph_evaluate(ig.get(), data.get(), &ev));
  }
  std::printf("%s\n", eval_text(ev).c_str());
  return kOk;
}

int cmd_report(const std::string& dir) {
  char* s = nullptr;
  check(ppgnas_report(dir.c_str(), &s));
  std::fputs(take(s).c_str(), stdout);
  std::printf("wrote %s/summary.txt, scatter.csv, scatter.svg\n", dir.c_str());
  return kOk;
}

// Small end-to-end pass: synthetic data, short training, int8 export, C check.
int cmd_selftest(const std::string& dir) {
  fs::create_directories(dir);
  json doc = {{"dataset", "synthetic:7"},
              {"synth_subjects", 12},
              {"synth_seconds", 20.0},
              {"window_seconds", 2.0},
              {"profile", "resnet"},
              {"target", "sbp"},
              {"resnet", {{"blocks", 1}, {"stages", 2}, {"base_channels", 4}, {"kernel", 5}}},
              {"train", {{"epochs", 3}, {"batch_size", 32}}},
              {"qat_epochs", 1},
              {"seed", 7},
              {"out_dir", dir}};
  bool ok = true;
  auto line = [&](const char* name, bool pass) {
    std::printf("%s: %s\n", name, pass ? "PASS" : "FAIL");
    ok = ok && pass;
  };
  ppgnas_config* c = nullptr;
  check(ppgnas_config_from_json(doc.dump().c_str(), &c));
  ConfigPtr cfg(c);
  auto data = prepare(cfg.get());
  ppgnas_model* m = nullptr;
  ppgnas_eval ev{};
  check(ppgnas_model_train_seed(cfg.get(), data.get(), &m, &ev));
  ModelPtr model(m);
  line("train", ev.has_sbp && ev.mae_sbp == ev.mae_sbp);
  const std::string ck = (fs::path(dir) / "selftest.ckpt").string();
  check(ppgnas_model_save(model.get(), ck.c_str(), cfg.get(), data.get()));
  auto again = load_model(ck);
  ppgnas_eval ev2{};
  check(ppgnas_model_evaluate(again.get(), data.get(), &ev2));
  line("checkpoint round trip", ev2.mae_sbp == ev.mae_sbp);
  ppgnas_int_graph* g = nullptr;
  ppgnas_deploy_info info{};
  check(ppgnas_quantize(cfg.get(), model.get(), data.get(), &g, &info));
  IntPtr ig(g);
  line("int8 export fits", info.memory.fits != 0);
  int compiled = 0;
  std::size_t bad = 0;
  check(ppgnas_verify_c(ig.get(), 16, 7, (fs::path(dir) / "c").string().c_str(), "cc", &compiled, &bad));
  line("bit-exact", compiled && bad == 0);
  std::printf("selftest: %s\n", ok ? "PASS" : "FAIL");
  return ok ? kOk : kOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PPG blood-pressure network search, int8 quantisation and C deployment"};
  app.set_version_flag("--version", std::string(ppgnas_version()));
  app.require_subcommand(1);
  const std::string cmdline = command_line(argc, argv);

  CommonFlags train_f, sweep_f, quant_f, eval_f;
  auto* train = app.add_subcommand("train-seed", "train the seed model and write seed.ckpt + seed_report.json");
  train_f.attach(train);

  auto* sweep = app.add_subcommand("nas-sweep", "run the lambda sweep and write pareto.csv + child checkpoints");
  sweep_f.attach(sweep);
  std::string sweep_seed;
  sweep->add_option("--seed-ckpt", sweep_seed, "seed checkpoint (default <out>/seed.ckpt, trained if missing)");

  auto* quant = app.add_subcommand("quantize", "QAT, int8 export, memory report and C emission");
  quant_f.attach(quant);
  std::string quant_ckpt, quant_int;
  bool no_eval = false;
  quant->add_option("--ckpt", quant_ckpt, "float checkpoint (omit for a size-only export of the seed profile)");
  quant->add_option("--int-out", quant_int, "integer graph path (default <out>/model.int)");
  quant->add_flag("--no-eval", no_eval, "skip QAT and scoring; calibrate on random windows");

  auto* emit = app.add_subcommand("emit-c", "emit C99 for an integer graph, optionally verifying it");
  std::string emit_int, emit_dir = "ppg_net_c", emit_cc = "cc";
  std::size_t verify = 0;
  std::uint64_t verify_seed = 0;
  emit->add_option("--int", emit_int, "integer graph file")->required();
  emit->add_option("-o,--out", emit_dir, "output directory");
  emit->add_option("--verify", verify, "compile and compare N random windows against the interpreter");
  emit->add_option("--verify-seed", verify_seed, "seed for the verification inputs");
  emit->add_option("--cc", emit_cc, "C compiler");

  auto* eval = app.add_subcommand("eval", "score a float or integer model on the test split");
  eval_f.attach(eval);
  std::string eval_ckpt, eval_int;
  eval->add_option("--ckpt", eval_ckpt, "float checkpoint");
  eval->add_option("--int", eval_int, "integer graph file");

  auto* report = app.add_subcommand("report", "summarise a sweep directory (summary.txt, scatter.csv, scatter.svg)");
  std::string report_dir;
  report->add_option("dir", report_dir, "sweep output directory")->required();

  auto* self = app.add_subcommand("selftest", "short end-to-end check on synthetic data");
  std::string self_dir = "ppgnas_selftest";
  self->add_option("-o,--out", self_dir, "scratch directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (*train) return cmd_train_seed(train_f, cmdline);
    if (*sweep) return cmd_nas_sweep(sweep_f, sweep_seed, cmdline);
    if (*quant) return cmd_quantize(quant_f, quant_ckpt, quant_int, no_eval, cmdline);
    if (*emit) return cmd_emit_c(emit_int, emit_dir, verify, verify_seed, emit_cc);
    if (*eval) return cmd_eval(eval_f, eval_ckpt, eval_int);
    if (*report) return cmd_report(report_dir);
    if (*self) return cmd_selftest(self_dir);
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return exit_code(f.status);
  }
  return kUsage;
}
