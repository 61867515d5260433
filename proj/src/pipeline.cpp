// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "ppgnas/error.hpp"
#include "ppgnas/serialize.hpp"

namespace ppgnas {

namespace fs = std::filesystem;
using nlohmann::json;

const char* profile_name(Profile p) { return p == Profile::kResNet ? "resnet" : "unet"; }

const char* target_name(Target t) {
  switch (t) {
    case Target::kSbp: return "sbp";
    case Target::kDbp: return "dbp";
    case Target::kSig2Sig: return "sig2sig";
  }
  return "?";
}

Profile profile_from_name(const std::string& s) {
  if (s == "resnet") return Profile::kResNet;
  if (s == "unet") return Profile::kUNet;
  fail(ErrorKind::kInvalidArgument, "unknown profile '" + s + "' (expected resnet or unet)");
}

Target target_from_name(const std::string& s) {
  if (s == "sbp") return Target::kSbp;
  if (s == "dbp") return Target::kDbp;
  if (s == "sig2sig") return Target::kSig2Sig;
  fail(ErrorKind::kInvalidArgument, "unknown target '" + s + "' (expected sbp, dbp or sig2sig)");
}

std::vector<double> PipelineConfig::lambda_grid() const {
  if (lambdas) return *lambdas;
  return default_lambda_grid();
}

// ---------------------------------------------------------------- config JSON

namespace {

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::kInvalidArgument, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      fail(ErrorKind::kInvalidArgument, "unknown config key '" + where + it.key() + "'");
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::kInvalidArgument, std::string("config key '") + key + "': " + e.what());
    }
  }
}

}  // namespace

PipelineConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"dataset", "synth_subjects", "synth_seconds", "profile", "target", "window_seconds", "split",
              "folds", "fold", "resnet", "unet", "lambdas", "train", "nas_epochs", "lr_weights", "lr_theta",
              "finetune_epochs", "qat_epochs", "qat_lr", "calibration_windows", "budget_bytes", "seed", "workers",
              "out_dir"},
             "");
  PipelineConfig c;
  get_if(j, "dataset", c.dataset);
  get_if(j, "synth_subjects", c.synth_subjects);
  get_if(j, "synth_seconds", c.synth_seconds);
  if (j.contains("profile")) c.profile = profile_from_name(j["profile"].get<std::string>());
  if (j.contains("target")) c.target = target_from_name(j["target"].get<std::string>());
  get_if(j, "window_seconds", c.window_seconds);
  get_if(j, "split", c.split_mode);
  get_if(j, "folds", c.folds);
  get_if(j, "fold", c.fold);
  if (j.contains("resnet")) {
    const json& r = j["resnet"];
    check_keys(r, {"input_len", "blocks", "base_channels", "stages", "kernel", "stem_kernel"}, "resnet.");
    get_if(r, "input_len", c.resnet.input_len);
    get_if(r, "blocks", c.resnet.blocks);
    get_if(r, "base_channels", c.resnet.base_channels);
    get_if(r, "stages", c.resnet.stages);
    get_if(r, "kernel", c.resnet.kernel);
    get_if(r, "stem_kernel", c.resnet.stem_kernel);
  }
  if (j.contains("unet")) {
    const json& u = j["unet"];
    check_keys(u, {"input_len", "depth", "base_channels", "kernel"}, "unet.");
    get_if(u, "input_len", c.unet.input_len);
    get_if(u, "depth", c.unet.depth);
    get_if(u, "base_channels", c.unet.base_channels);
    get_if(u, "kernel", c.unet.kernel);
  }
  if (j.contains("lambdas") && !j["lambdas"].is_null()) {
    std::vector<double> l;
    get_if(j, "lambdas", l);
    if (l.empty()) fail(ErrorKind::kInvalidArgument, "lambdas is empty; give at least one value or omit the key");
    c.lambdas = l;
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, {"epochs", "batch_size", "lr"}, "train.");
    get_if(t, "epochs", c.train.epochs);
    get_if(t, "batch_size", c.train.batch_size);
    get_if(t, "lr", c.train.lr);
  }
  get_if(j, "nas_epochs", c.nas_epochs);
  get_if(j, "lr_weights", c.lr_weights);
  get_if(j, "lr_theta", c.lr_theta);
  get_if(j, "finetune_epochs", c.finetune_epochs);
  get_if(j, "qat_epochs", c.qat_epochs);
  get_if(j, "qat_lr", c.qat_lr);
  get_if(j, "calibration_windows", c.calibration_windows);
  get_if(j, "budget_bytes", c.budget_bytes);
  get_if(j, "seed", c.seed);
  get_if(j, "workers", c.workers);
  get_if(j, "out_dir", c.out_dir);
  c.train.seed = c.seed;
  if (c.split_mode != "holdout" && c.split_mode != "kfold")
    fail(ErrorKind::kInvalidArgument, "split must be 'holdout' or 'kfold', got '" + c.split_mode + "'");
  if (c.workers == 0) fail(ErrorKind::kInvalidArgument, "workers must be >= 1");
  return c;
}

std::string config_to_json(const PipelineConfig& c) {
  json j;
  j["dataset"] = c.dataset;
  j["synth_subjects"] = c.synth_subjects;
  j["synth_seconds"] = c.synth_seconds;
  j["profile"] = profile_name(c.profile);
  j["target"] = target_name(c.target);
  j["window_seconds"] = c.window_seconds;
  j["split"] = c.split_mode;
  j["folds"] = c.folds;
  j["fold"] = c.fold;
  j["resnet"] = {{"input_len", c.resnet.input_len},         {"blocks", c.resnet.blocks},
                 {"base_channels", c.resnet.base_channels}, {"stages", c.resnet.stages},
                 {"kernel", c.resnet.kernel},               {"stem_kernel", c.resnet.stem_kernel}};
  j["unet"] = {{"input_len", c.unet.input_len},
               {"depth", c.unet.depth},
               {"base_channels", c.unet.base_channels},
               {"kernel", c.unet.kernel}};
  j["lambdas"] = c.lambdas ? json(*c.lambdas) : json(nullptr);
  j["train"] = {{"epochs", c.train.epochs}, {"batch_size", c.train.batch_size}, {"lr", c.train.lr}};
  j["nas_epochs"] = c.nas_epochs;
  j["lr_weights"] = c.lr_weights;
  j["lr_theta"] = c.lr_theta;
  j["finetune_epochs"] = c.finetune_epochs;
  j["qat_epochs"] = c.qat_epochs;
  j["qat_lr"] = c.qat_lr;
  j["calibration_windows"] = c.calibration_windows;
  j["budget_bytes"] = c.budget_bytes;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["out_dir"] = c.out_dir;
  return j.dump(2);
}

// ---------------------------------------------------------------- data

std::vector<Record> load_records(const PipelineConfig& cfg) {
  const std::string prefix = "synthetic:";
  if (cfg.dataset.rfind(prefix, 0) == 0) {
    std::uint64_t s = 0;
    try {
      s = std::stoull(cfg.dataset.substr(prefix.size()));
    } catch (const std::exception&) {
      fail(ErrorKind::kInvalidArgument, "dataset '" + cfg.dataset + "': expected synthetic:<seed>");
    }
    return synth_generate(s, cfg.synth_subjects, cfg.synth_seconds);
  }
  return read_ndjson(cfg.dataset);
}

PreparedData prepare_data(const PipelineConfig& cfg) {
  const auto records = load_records(cfg);
  return prepare_data(cfg, build_windows(records, cfg.window_seconds, cfg.window_seconds));
}

namespace {

void check_profile_target(const PipelineConfig& cfg) {
  if (cfg.profile == Profile::kResNet && cfg.target == Target::kSig2Sig)
    fail(ErrorKind::kInvalidArgument, "the resnet profile regresses a scalar; use target sbp or dbp");
  if (cfg.profile == Profile::kUNet && cfg.target != Target::kSig2Sig)
    fail(ErrorKind::kInvalidArgument, "the unet profile reconstructs a waveform; use target sig2sig");
}

TensorDataset make_split(const WindowSet& ws, const std::vector<std::size_t>& idx, std::size_t len, Target target,
                         const TargetNorm& norm) {
  TensorDataset d;
  d.count = idx.size();
  d.in_channels = 1;
  d.in_len = len;
  d.target_channels = 1;
  d.target_len = target == Target::kSig2Sig ? len : 1;
  d.inputs.reserve(d.count * len);
  d.targets.reserve(d.count * d.target_len);
  for (std::size_t i : idx) {
    const float* p = ws.ppg.data() + i * ws.length;
    d.inputs.insert(d.inputs.end(), p, p + len);
    if (target == Target::kSig2Sig) {
      const float* a = ws.abp.data() + i * ws.length;
      for (std::size_t t = 0; t < len; ++t) d.targets.push_back(static_cast<float>(a[t] * kAbpScale));
    } else {
      const double y = target == Target::kSbp ? ws.sbp[i] : ws.dbp[i];
      d.targets.push_back(static_cast<float>((y - norm.mean) / norm.std));
    }
  }
  return d;
}

}  // namespace

PreparedData prepare_data(const PipelineConfig& cfg, const WindowSet& ws) {
  check_profile_target(cfg);
  if (ws.count() == 0) fail(ErrorKind::kInvalidArgument, "dataset produced no windows");
  if (cfg.target == Target::kSig2Sig && !ws.has_abp)
    fail(ErrorKind::kInvalidArgument,
         "sig2sig needs ABP waveforms but the dataset carries only scalar SBP/DBP labels; use target sbp or dbp");

  Split split;
  if (cfg.split_mode == "kfold") {
    const auto folds = split_kfold(ws, cfg.folds, cfg.seed);
    if (cfg.fold >= folds.size())
      fail(ErrorKind::kInvalidArgument, "fold " + std::to_string(cfg.fold) + " out of range for k=" +
                                            std::to_string(cfg.folds));
    split = folds[cfg.fold];
  } else {
    split = split_holdout(ws, cfg.seed);
  }
  if (split.train.empty() || split.test.empty())
    fail(ErrorKind::kInvalidArgument, "split leaves the train or test set empty; add subjects");

  PreparedData out;
  out.target = cfg.target;
  std::size_t len = ws.length;
  if (cfg.profile == Profile::kUNet) {
    const std::size_t m = std::size_t{1} << cfg.unet.depth;
    len = len / m * m;
  }
  if (len == 0) fail(ErrorKind::kInvalidArgument, "window too short for the configured model");
  out.input_len = len;

  if (cfg.target != Target::kSig2Sig) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i : split.train) {
      const double y = cfg.target == Target::kSbp ? ws.sbp[i] : ws.dbp[i];
      sum += y;
      sq += y * y;
    }
    const double n = static_cast<double>(split.train.size());
    out.norm.mean = sum / n;
    const double var = std::max(0.0, sq / n - out.norm.mean * out.norm.mean);
    out.norm.std = std::sqrt(var) > 1e-6 ? std::sqrt(var) : 1.0;
  }
  out.train = make_split(ws, split.train, len, cfg.target, out.norm);
  out.val = make_split(ws, split.val, len, cfg.target, out.norm);
  out.test = make_split(ws, split.test, len, cfg.target, out.norm);
  for (std::size_t i : split.test) {
    if (cfg.target == Target::kSig2Sig) {
      const auto [s, d] = extract_labels(std::span<const float>(ws.abp.data() + i * ws.length, len));
      out.test_sbp.push_back(s);
      out.test_dbp.push_back(d);
    } else {
      out.test_sbp.push_back(ws.sbp[i]);
      out.test_dbp.push_back(ws.dbp[i]);
    }
  }
  return out;
}

Graph build_seed_graph(const PipelineConfig& cfg, std::size_t input_len) {
  if (cfg.profile == Profile::kResNet) {
    ResNetConfig r = cfg.resnet;
    r.input_len = input_len;
    return build_resnet1d(r);
  }
  UNetConfig u = cfg.unet;
  u.input_len = input_len;
  return build_unet1d(u);
}

// ---------------------------------------------------------------- evaluation

EvalResult score_predictions(const PreparedData& data, const std::vector<float>& outputs) {
  const std::size_t n = data.test.count;
  EvalResult r;
  if (data.target == Target::kSig2Sig) {
    const std::size_t len = data.test.target_len;
    if (outputs.size() != n * len) fail(ErrorKind::kShape, "prediction count does not match the test split");
    std::vector<double> ps(n), pd(n), wave(len);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < len; ++t) wave[t] = outputs[i * len + t] / kAbpScale;
      std::tie(ps[i], pd[i]) = extract_labels(std::span<const double>(wave));
    }
    r.mae_sbp = mae(ps, data.test_sbp);
    r.mae_dbp = mae(pd, data.test_dbp);
    r.primary = 0.5 * (*r.mae_sbp + *r.mae_dbp);
    return r;
  }
  if (outputs.size() != n) fail(ErrorKind::kShape, "prediction count does not match the test split");
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = outputs[i] * data.norm.std + data.norm.mean;
  if (data.target == Target::kSbp) {
    r.mae_sbp = mae(p, data.test_sbp);
    r.primary = *r.mae_sbp;
  } else {
    r.mae_dbp = mae(p, data.test_dbp);
    r.primary = *r.mae_dbp;
  }
  return r;
}

EvalResult evaluate(Model& model, const PreparedData& data) { return score_predictions(data, predict(model, data.test)); }

EvalResult evaluate(QatModel& model, const PreparedData& data) {
  return score_predictions(data, predict(model, data.test));
}

EvalResult evaluate(const IntGraph& ig, const PreparedData& data) {
  const std::size_t stride = data.test.input_stride();
  std::vector<float> out;
  for (std::size_t i = 0; i < data.test.count; ++i) {
    const auto q = quantize_input(ig, std::span<const float>(data.test.inputs.data() + i * stride, stride));
    const auto y = dequantize_output(ig, run(ig, q));
    out.insert(out.end(), y.begin(), y.end());
  }
  return score_predictions(data, out);
}

// ---------------------------------------------------------------- seed

SeedResult train_seed(const PipelineConfig& cfg, const PreparedData& data) {
  SeedResult r;
  r.model = Model::initialize(build_seed_graph(cfg, data.input_len), cfg.seed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  fit(r.model, data.train, tc);
  r.eval = evaluate(r.model, data);
  r.params = param_count(r.model.graph());
  r.macs = mac_count(r.model.graph());
  return r;
}

namespace {

json eval_json(const EvalResult& e) {
  json j;
  j["mae_sbp"] = e.mae_sbp ? json(*e.mae_sbp) : json(nullptr);
  j["mae_dbp"] = e.mae_dbp ? json(*e.mae_dbp) : json(nullptr);
  j["primary"] = e.primary;
  return j;
}

}  // namespace

void write_seed_report(const std::string& dir, const SeedResult& seed) {
  json j = eval_json(seed.eval);
  j["params"] = seed.params;
  j["size_bytes"] = seed.params * 4;
  j["macs"] = seed.macs;
  fs::create_directories(dir);
  write_file_atomic((fs::path(dir) / "seed_report.json").string(), j.dump(2) + "\n");
}

std::string checkpoint_meta(const PipelineConfig& cfg, const PreparedData& data) {
  json j;
  j["profile"] = profile_name(cfg.profile);
  j["target"] = target_name(cfg.target);
  j["input_len"] = data.input_len;
  j["norm_mean"] = data.norm.mean;
  j["norm_std"] = data.norm.std;
  j["window_seconds"] = cfg.window_seconds;
  return j.dump();
}

// ---------------------------------------------------------------- sweep

ChildResult run_lambda(const PipelineConfig& cfg, const PreparedData& data, const Model& seed_model, double lambda,
                       std::uint64_t seed) {
  SuperNet sn = expand_to_supernet(seed_model, seed);
  NasConfig nc;
  nc.lambda = lambda;
  nc.lr_weights = cfg.lr_weights;
  nc.lr_theta = cfg.lr_theta;
  nc.epochs = cfg.nas_epochs;
  nc.batch_size = cfg.train.batch_size;
  nc.seed = seed;
  // Without a validation split the architecture step reuses the train split.
  const TensorDataset& val = data.val.count > 0 ? data.val : data.train;
  ChildResult r;
  r.nas_log = train_supernet(sn, data.train, val, nc);
  r.model = discretize(sn);
  if (cfg.finetune_epochs > 0) {
    TrainConfig tc{cfg.finetune_epochs, cfg.train.batch_size, cfg.lr_weights, seed};
    fit(r.model, data.train, tc);
  }
  r.row.lambda = lambda;
  r.row.params = param_count(r.model.graph());
  r.row.size_bytes = 4 * r.row.params;
  r.row.macs = mac_count(r.model.graph());
  r.row.eval = evaluate(r.model, data);
  r.row.seed = seed;
  return r;
}

void flag_pareto(std::vector<SweepRow>& rows) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows) pts.emplace_back(static_cast<double>(r.params), r.eval.primary);
  for (auto& r : rows) r.pareto = false;
  for (std::size_t i : pareto_front(pts)) rows[i].pareto = true;
}

std::string sweep_csv_header() { return "lambda,params,size_bytes,macs,mae_sbp,mae_dbp,seed,pareto"; }

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string opt_field(const std::optional<double>& v) { return v ? fmt("%.6f", *v) : std::string(); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

bool same_lambda(double a, double b) { return std::fabs(a - b) <= 1e-9 * std::max(std::fabs(a), std::fabs(b)); }

}  // namespace

std::string sweep_csv_row(const SweepRow& r) {
  std::ostringstream os;
  os << fmt("%.17g", r.lambda) << ',' << r.params << ',' << r.size_bytes << ',' << r.macs << ','
     << opt_field(r.eval.mae_sbp) << ',' << opt_field(r.eval.mae_dbp) << ',' << r.seed << ',' << (r.pareto ? 1 : 0);
  return os.str();
}

std::vector<SweepRow> read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != split_csv(sweep_csv_header()))
    fail(ErrorKind::kIo, path + ": unexpected header (want " + sweep_csv_header() + ")");
  std::vector<SweepRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 8) fail(ErrorKind::kIo, path + ":" + std::to_string(lineno) + ": expected 8 fields");
    try {
      SweepRow r;
      r.lambda = std::stod(f[0]);
      r.params = std::stoull(f[1]);
      r.size_bytes = std::stoull(f[2]);
      r.macs = std::stoull(f[3]);
      if (!f[4].empty()) r.eval.mae_sbp = std::stod(f[4]);
      if (!f[5].empty()) r.eval.mae_dbp = std::stod(f[5]);
      if (r.eval.mae_sbp && r.eval.mae_dbp)
        r.eval.primary = 0.5 * (*r.eval.mae_sbp + *r.eval.mae_dbp);
      else
        r.eval.primary = r.eval.mae_sbp ? *r.eval.mae_sbp : r.eval.mae_dbp.value_or(0.0);
      r.seed = std::stoull(f[6]);
      r.pareto = f[7] == "1";
      rows.push_back(r);
    } catch (const std::logic_error&) {
      fail(ErrorKind::kIo, path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::string s = sweep_csv_header() + "\n";
  for (const auto& r : rows) s += sweep_csv_row(r) + "\n";
  write_file_atomic(path, s);
}

std::vector<SweepRow> run_sweep(const PipelineConfig& cfg, const PreparedData& data, const Model& seed_model,
                                const std::function<void(const SweepRow&)>& on_row) {
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir / "children");
  const std::string csv = (dir / "pareto.csv").string();
  std::vector<SweepRow> rows;
  if (fs::exists(csv)) rows = read_sweep_csv(csv);

  const auto grid = cfg.lambda_grid();
  if (grid.empty()) fail(ErrorKind::kInvalidArgument, "empty lambda grid");
  for (double l : grid)
    if (!(l >= 0.0) || !std::isfinite(l)) fail(ErrorKind::kInvalidArgument, "lambda values must be finite and >= 0");
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const bool done = std::any_of(rows.begin(), rows.end(), [&](const SweepRow& r) { return same_lambda(r.lambda, grid[i]); });
    if (!done) todo.push_back(i);
  }

  const std::string meta = checkpoint_meta(cfg, data);
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  auto worker = [&] {
    for (;;) {
      {
        std::lock_guard<std::mutex> lock(mu);
        if (err) return;
      }
      const std::size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const std::size_t gi = todo[k];
      try {
        ChildResult c = run_lambda(cfg, data, seed_model, grid[gi], cfg.seed + 1 + gi);
        save_model((dir / "children" / ("lambda_" + std::to_string(gi) + ".ckpt")).string(), c.model, meta);
        std::lock_guard<std::mutex> lock(mu);
        rows.push_back(c.row);
        std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.lambda < b.lambda; });
        flag_pareto(rows);
        write_sweep_csv(csv, rows);
        if (on_row) on_row(c.row);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  const std::size_t nw = std::min(cfg.workers, std::max<std::size_t>(todo.size(), 1));
  if (nw <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < nw; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (err) std::rethrow_exception(err);
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.lambda < b.lambda; });
  flag_pareto(rows);
  write_sweep_csv(csv, rows);
  return rows;
}

// ---------------------------------------------------------------- deploy

DeployResult quantize_deploy(const PipelineConfig& cfg, const Model& float_model, const PreparedData* data) {
  const FeatureShape in = float_model.graph().input_shape();
  const std::size_t stride = in.channels * in.length;
  Tensor calib;
  if (data) {
    const std::size_t n = std::min(cfg.calibration_windows, data->train.count);
    if (n == 0) fail(ErrorKind::kInvalidArgument, "no training windows for calibration");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    calib = data->train.input_batch(idx);
  } else {
    const std::size_t n = std::max<std::size_t>(1, std::min<std::size_t>(cfg.calibration_windows, 32));
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<float> nd(0.0f, 1.0f);
    std::vector<float> v(n * stride);
    for (auto& x : v) x = nd(rng);
    calib = Tensor::from({n, in.channels, in.length}, std::move(v));
  }
  QatModel qm = QatModel::prepare(float_model, calib);
  if (data && cfg.qat_epochs > 0) {
    TrainConfig tc{cfg.qat_epochs, cfg.train.batch_size, cfg.qat_lr, cfg.seed};
    qat_finetune(qm, data->train, tc);
  }
  DeployResult r;
  r.int_graph = export_int_graph(qm);
  r.memory = memory_report(r.int_graph, cfg.budget_bytes);
  r.macs = mac_count(r.int_graph);
  if (data) {
    Model m = float_model.clone();
    r.float_eval = evaluate(m, *data);
    r.qat_eval = evaluate(qm, *data);
    r.int_eval = evaluate(r.int_graph, *data);
  }
  return r;
}

// ---------------------------------------------------------------- report

std::string write_report(const std::string& dir) {
  const fs::path d(dir);
  const fs::path csv = d / "pareto.csv";
  if (!fs::exists(csv))
    fail(ErrorKind::kIo, "report: " + csv.string() + " not found; run nas-sweep with this --out directory first");
  auto rows = read_sweep_csv(csv.string());
  flag_pareto(rows);

  std::optional<std::pair<double, double>> seed_pt;  // (params, error)
  const fs::path sr = d / "seed_report.json";
  if (fs::exists(sr)) {
    try {
      const json j = json::parse(read_file(sr.string()));
      seed_pt = std::make_pair(j.at("params").get<double>(), j.at("primary").get<double>());
    } catch (const json::exception& e) {
      fail(ErrorKind::kIo, sr.string() + ": " + e.what());
    }
  }

  std::vector<const SweepRow*> front;
  for (const auto& r : rows)
    if (r.pareto) front.push_back(&r);
  std::sort(front.begin(), front.end(), [](const SweepRow* a, const SweepRow* b) { return a->params < b->params; });

  std::ostringstream sum;
  sum << "points: " << rows.size() << "\n";
  sum << "pareto points: " << front.size() << "\n";
  if (seed_pt) sum << "seed: params=" << static_cast<std::uint64_t>(seed_pt->first) << " mae=" << fmt("%.4f", seed_pt->second) << "\n";
  sum << "lambda,params,size_bytes,macs,mae\n";
  for (const auto* r : front)
    sum << fmt("%.6g", r->lambda) << ',' << r->params << ',' << r->size_bytes << ',' << r->macs << ','
        << fmt("%.4f", r->eval.primary) << "\n";
  if (seed_pt) {
    for (const auto* r : front) {
      if (r->eval.primary <= seed_pt->second) {
        sum << "smallest child at or below seed error: params=" << r->params << " ("
            << fmt("%.2f", seed_pt->first / static_cast<double>(std::max<std::size_t>(r->params, 1)))
            << "x smaller)\n";
        break;
      }
    }
  }

  std::ostringstream sc;
  sc << "kind,lambda,params,mae,pareto\n";
  if (seed_pt) sc << "seed,," << static_cast<std::uint64_t>(seed_pt->first) << ',' << fmt("%.6f", seed_pt->second) << ",0\n";
  for (const auto& r : rows)
    sc << "child," << fmt("%.17g", r.lambda) << ',' << r.params << ',' << fmt("%.6f", r.eval.primary) << ','
       << (r.pareto ? 1 : 0) << "\n";

  // Log-scale params on x, linear error on y.
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  auto extend = [&](double p, double e) {
    const double lx = std::log10(std::max(p, 1.0));
    xmin = std::min(xmin, lx);
    xmax = std::max(xmax, lx);
    ymin = std::min(ymin, e);
    ymax = std::max(ymax, e);
  };
  for (const auto& r : rows) extend(static_cast<double>(r.params), r.eval.primary);
  if (seed_pt) extend(seed_pt->first, seed_pt->second);
  if (xmin > xmax) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax - xmin < 1e-9) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-9) ymin -= 0.5, ymax += 0.5;
  const double W = 640, H = 480, M = 60;
  auto px = [&](double p) { return M + (std::log10(std::max(p, 1.0)) - xmin) / (xmax - xmin) * (W - 2 * M); };
  auto py = [&](double e) { return H - M - (e - ymin) / (ymax - ymin) * (H - 2 * M); };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n";
  svg << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  svg << "<line x1=\"60\" y1=\"420\" x2=\"580\" y2=\"420\" stroke=\"black\"/>\n";
  svg << "<line x1=\"60\" y1=\"60\" x2=\"60\" y2=\"420\" stroke=\"black\"/>\n";
  svg << "<text x=\"320\" y=\"460\" text-anchor=\"middle\" font-size=\"14\">parameters (log10 "
      << fmt("%.2f", xmin) << " to " << fmt("%.2f", xmax) << ")</text>\n";
  svg << "<text x=\"20\" y=\"240\" font-size=\"14\" transform=\"rotate(-90 20 240)\" text-anchor=\"middle\">MAE mmHg ("
      << fmt("%.2f", ymin) << " to " << fmt("%.2f", ymax) << ")</text>\n";
  if (!front.empty()) {
    svg << "<polyline fill=\"none\" stroke=\"steelblue\" points=\"";
    for (const auto* r : front)
      svg << fmt("%.1f", px(static_cast<double>(r->params))) << ',' << fmt("%.1f", py(r->eval.primary)) << ' ';
    svg << "\"/>\n";
  }
  for (const auto& r : rows)
    svg << "<circle cx=\"" << fmt("%.1f", px(static_cast<double>(r.params))) << "\" cy=\""
        << fmt("%.1f", py(r.eval.primary)) << "\" r=\"4\" fill=\"" << (r.pareto ? "steelblue" : "gray") << "\"/>\n";
  if (seed_pt)
    svg << "<rect x=\"" << fmt("%.1f", px(seed_pt->first) - 5) << "\" y=\"" << fmt("%.1f", py(seed_pt->second) - 5)
        << "\" width=\"10\" height=\"10\" fill=\"crimson\"/>\n";
  svg << "</svg>\n";

  write_file_atomic((d / "summary.txt").string(), sum.str());
  write_file_atomic((d / "scatter.csv").string(), sc.str());
  write_file_atomic((d / "scatter.svg").string(), svg.str());
  return sum.str();
}

void write_manifest(const PipelineConfig& cfg, const std::string& command) {
  json j;
  j["command"] = command;
  j["tool_version"] = kToolVersion;
  j["seed"] = cfg.seed;
  j["config"] = json::parse(config_to_json(cfg));
  fs::create_directories(cfg.out_dir);
  write_file_atomic((fs::path(cfg.out_dir) / "manifest.json").string(), j.dump(2) + "\n");
}

}  // namespace ppgnas
