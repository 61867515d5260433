// SPDX-License-Identifier: Apache-2.0
//
// End-to-end flow: data preparation, seed training, lambda sweep with Pareto
// flags, QAT + integer export + C emission, and reporting.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ppgnas/data.hpp"
#include "ppgnas/graph.hpp"
#include "ppgnas/int_graph.hpp"
#include "ppgnas/model.hpp"
#include "ppgnas/quant.hpp"
#include "ppgnas/supernet.hpp"
#include "ppgnas/train.hpp"

namespace ppgnas {

enum class Profile { kResNet, kUNet };
enum class Target { kSbp, kDbp, kSig2Sig };

const char* profile_name(Profile p);
const char* target_name(Target t);
Profile profile_from_name(const std::string& s);
Target target_from_name(const std::string& s);

struct PipelineConfig {
  std::string dataset = "synthetic:0";  // NDJSON path or synthetic:<seed>
  std::size_t synth_subjects = 40;
  double synth_seconds = 60.0;
  Profile profile = Profile::kResNet;
  Target target = Target::kSbp;
  double window_seconds = 5.0;
  std::string split_mode = "holdout";  // holdout | kfold
  std::size_t folds = 5;
  std::size_t fold = 0;
  ResNetConfig resnet;
  UNetConfig unet;
  std::optional<std::vector<double>> lambdas;  // unset: 18-point default grid
  TrainConfig train;                           // seed training
  std::size_t nas_epochs = 50;
  float lr_weights = 1e-3f;
  float lr_theta = 1e-2f;
  std::size_t finetune_epochs = 10;
  std::size_t qat_epochs = 10;
  float qat_lr = 1e-4f;
  std::size_t calibration_windows = 256;
  std::size_t budget_bytes = kDefaultBudgetBytes;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out_dir = "runs/default";

  std::vector<double> lambda_grid() const;
};

// JSON config documents; unknown keys are rejected.
PipelineConfig config_from_json(const std::string& text);
std::string config_to_json(const PipelineConfig& cfg);

// Per-target scalar normalisation (train-split mean and std).
struct TargetNorm {
  double mean = 0.0;
  double std = 1.0;
};

// Sig2sig targets are ABP in mmHg times this factor.
inline constexpr double kAbpScale = 1.0 / 200.0;

struct PreparedData {
  Target target = Target::kSbp;
  std::size_t input_len = 0;
  TensorDataset train, val, test;
  TargetNorm norm;
  std::vector<double> test_sbp, test_dbp;  // mmHg ground truth of the test windows
};

std::vector<Record> load_records(const PipelineConfig& cfg);
PreparedData prepare_data(const PipelineConfig& cfg);
PreparedData prepare_data(const PipelineConfig& cfg, const WindowSet& ws);

// Seed graph for the configured profile at `input_len` samples.
Graph build_seed_graph(const PipelineConfig& cfg, std::size_t input_len);

struct EvalResult {
  std::optional<double> mae_sbp;
  std::optional<double> mae_dbp;
  // Error used for Pareto ranking: the target's MAE, or the mean of both for sig2sig.
  double primary = 0.0;
};

// Converts raw network outputs for the test split to mmHg and scores them.
EvalResult score_predictions(const PreparedData& data, const std::vector<float>& outputs);
EvalResult evaluate(Model& model, const PreparedData& data);
EvalResult evaluate(QatModel& model, const PreparedData& data);
EvalResult evaluate(const IntGraph& ig, const PreparedData& data);

struct SeedResult {
  Model model;
  EvalResult eval;
  std::size_t params = 0;
  std::uint64_t macs = 0;
};

// Trains the seed on the train split and scores it on the test split.
SeedResult train_seed(const PipelineConfig& cfg, const PreparedData& data);

// seed_report.json next to a sweep: params, size_bytes, macs and MAEs.
void write_seed_report(const std::string& dir, const SeedResult& seed);

// Checkpoint metadata (profile, target, input length, target normalisation).
std::string checkpoint_meta(const PipelineConfig& cfg, const PreparedData& data);

struct SweepRow {
  double lambda = 0.0;
  std::size_t params = 0;
  std::size_t size_bytes = 0;  // float32 storage
  std::uint64_t macs = 0;
  EvalResult eval;
  std::uint64_t seed = 0;
  bool pareto = false;
};

struct ChildResult {
  Model model;
  SweepRow row;
  std::vector<EpochStats> nas_log;
};

// Expands `seed_model`, trains the SuperNet at `lambda`, discretises and
// fine-tunes the child, then scores it on the test split.
ChildResult run_lambda(const PipelineConfig& cfg, const PreparedData& data, const Model& seed_model, double lambda,
                       std::uint64_t seed);

// Sets the pareto flag of every row from (params, primary error).
void flag_pareto(std::vector<SweepRow>& rows);

std::string sweep_csv_header();
std::string sweep_csv_row(const SweepRow& row);
std::vector<SweepRow> read_sweep_csv(const std::string& path);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

// Runs every lambda of the grid not already present in out_dir/pareto.csv,
// writing child checkpoints and rewriting the CSV after each point.
std::vector<SweepRow> run_sweep(const PipelineConfig& cfg, const PreparedData& data, const Model& seed_model,
                                const std::function<void(const SweepRow&)>& on_row = {});

struct DeployResult {
  IntGraph int_graph;
  MemoryReport memory;
  std::uint64_t macs = 0;
  EvalResult float_eval;
  EvalResult qat_eval;
  EvalResult int_eval;
};

// QAT fine-tune, integer export and scoring. Pass data == nullptr for a
// size-only export (no fine-tuning, calibration on random windows).
DeployResult quantize_deploy(const PipelineConfig& cfg, const Model& float_model, const PreparedData* data);

// Reads out_dir/pareto.csv (+ seed_report.json when present) and writes
// summary.txt, scatter.csv and scatter.svg. Returns the summary text.
std::string write_report(const std::string& dir);

// Writes manifest.json (config, seed, tool version, command) into out_dir.
void write_manifest(const PipelineConfig& cfg, const std::string& command);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace ppgnas
