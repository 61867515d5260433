// SPDX-License-Identifier: Apache-2.0
//
// Dataset ingestion and preprocessing: NDJSON records, resampling to 125 Hz,
// windowing with per-window z-scoring, SBP/DBP extraction, per-subject
// splits, MAE and a seeded synthetic PPG/ABP generator.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ppgnas {

inline constexpr double kTargetRateHz = 125.0;

struct Record {
  std::string subject_id;
  double fs_hz = kTargetRateHz;
  std::vector<double> ppg;
  std::optional<std::vector<double>> abp;  // mmHg, same length as ppg
  std::optional<double> sbp;
  std::optional<double> dbp;
};

// Throws kInvalidArgument when the record breaks its invariants.
void validate_record(const Record& r);

// One JSON object per line: {"subject_id", "fs_hz", "ppg", "abp"|null, "sbp"|null, "dbp"|null}.
Record parse_record(const std::string& line);
std::string record_to_json(const Record& r);
std::vector<Record> read_ndjson(const std::string& path);
void write_ndjson(const std::string& path, const std::vector<Record>& records);

// Linear-interpolation resampling; output length round(len * fs_out / fs_in).
std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out = kTargetRateHz);

// Samples per window: round(seconds * fs).
std::size_t window_length(double seconds, double fs = kTargetRateHz);

struct WindowSet {
  std::size_t length = 0;
  double fs_hz = kTargetRateHz;
  std::vector<float> ppg;  // [count, length], z-scored per window
  bool has_abp = false;
  std::vector<float> abp;  // [count, length] mmHg when has_abp
  std::vector<float> sbp;
  std::vector<float> dbp;
  std::vector<std::size_t> subject;   // index into `subjects`, per window
  std::vector<std::string> subjects;  // distinct subject ids, first-seen order
  std::vector<std::string> warnings;

  std::size_t count() const { return sbp.size(); }
  void append(const WindowSet& other);
  WindowSet select(const std::vector<std::size_t>& idx) const;
};

// Non-overlapping (or strided) windows of a 125 Hz record. Labels come from
// the ABP extrema when ABP is present, else from the record's scalars. A
// record shorter than one window yields no windows and a warning.
WindowSet window(const Record& rec, double seconds = 5.0, double stride_seconds = 5.0);

// Resamples every record to 125 Hz and windows it.
WindowSet build_windows(const std::vector<Record>& records, double seconds = 5.0, double stride_seconds = 5.0);

// (max, min) of an ABP window.
std::pair<double, double> extract_labels(std::span<const float> abp);
std::pair<double, double> extract_labels(std::span<const double> abp);

double mae(std::span<const double> pred, std::span<const double> target);

// Window indices of one evaluation split.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Subjects shuffled with `seed` then dealt round-robin into k folds.
std::vector<std::vector<std::size_t>> subject_folds(std::size_t n_subjects, std::size_t k, std::uint64_t seed);

// Fold f tests on subject fold f, validates on fold (f+1) mod k and trains on
// the rest. Throws when there are fewer subjects than k.
std::vector<Split> split_kfold(const WindowSet& ws, std::size_t k, std::uint64_t seed);

// Subjects shuffled and cut 70/15/15 (train/val/test by default).
Split split_holdout(const WindowSet& ws, std::uint64_t seed, double train_frac = 0.70, double val_frac = 0.15);

// Deterministic synthetic subjects: HR 50-100 bpm, SBP in [90,180], DBP in
// [50,110] and at least 20 mmHg below SBP. ABP = DBP + (SBP-DBP) * pulse
// with the pulse normalised to [0,1]; the PPG pulse shape depends on the
// pressures, plus baseline wander and noise.
std::vector<Record> synth_generate(std::uint64_t seed, std::size_t n_subjects, double seconds_per_subject,
                                   double fs_hz = kTargetRateHz);

// Binary cache, little-endian: "PPGWSET1", u32 version, u64 count, u64 length,
// f64 fs, u8 has_abp, u64 subject count + (u32 size, bytes) per subject id,
// then f32 ppg [count*length], f32 abp (if present), f32 sbp, f32 dbp and
// u64 subject index per window.
void save_window_set(const std::string& path, const WindowSet& ws);
WindowSet load_window_set(const std::string& path);

}  // namespace ppgnas
