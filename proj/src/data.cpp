// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ppgnas/error.hpp"

namespace ppgnas {

namespace {

using nlohmann::json;

constexpr char kCacheMagic[8] = {'P', 'P', 'G', 'W', 'S', 'E', 'T', '1'};
constexpr std::uint32_t kCacheVersion = 1;
constexpr double kTwoPi = 6.283185307179586;

template <typename T>
void put(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) fail(ErrorKind::kIo, "window cache truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

void zscore(std::span<float> w) {
  double mean = 0.0;
  for (float v : w) mean += v;
  mean /= static_cast<double>(w.size());
  double var = 0.0;
  for (float v : w) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(w.size())), 1e-6);
  for (float& v : w) v = static_cast<float>((v - mean) / sd);
}

template <typename T>
std::pair<double, double> extrema(std::span<const T> w) {
  if (w.empty()) fail(ErrorKind::kInvalidArgument, "extract_labels: empty window");
  double hi = -INFINITY, lo = INFINITY;
  for (T v : w) {
    if (!std::isfinite(static_cast<double>(v))) fail(ErrorKind::kNumeric, "extract_labels: non-finite ABP sample");
    hi = std::max(hi, static_cast<double>(v));
    lo = std::min(lo, static_cast<double>(v));
  }
  return {hi, lo};
}

// Periodic Gaussian bump on the unit phase circle.
double bump(double phase, double mu, double sigma) {
  double s = 0.0;
  for (int k = -1; k <= 1; ++k) {
    const double d = phase - mu + k;
    s += std::exp(-0.5 * d * d / (sigma * sigma));
  }
  return s;
}

double abp_shape(double phase) { return bump(phase, 0.15, 0.07) + 0.35 * bump(phase, 0.45, 0.07); }

}  // namespace

void validate_record(const Record& r) {
  auto bad = [&](const std::string& m) { fail(ErrorKind::kInvalidArgument, "record '" + r.subject_id + "': " + m); };
  if (!(r.fs_hz > 0.0) || !std::isfinite(r.fs_hz)) bad("fs_hz must be positive");
  if (r.ppg.empty()) bad("empty ppg series");
  for (double v : r.ppg)
    if (!std::isfinite(v)) bad("non-finite ppg sample");
  if (r.abp) {
    if (r.abp->size() != r.ppg.size()) bad("abp and ppg lengths differ");
    for (double v : *r.abp)
      if (!std::isfinite(v)) bad("non-finite abp sample");
  }
  if (!r.abp && !(r.sbp && r.dbp)) bad("needs an abp series or both sbp and dbp");
  if ((r.sbp && !std::isfinite(*r.sbp)) || (r.dbp && !std::isfinite(*r.dbp))) bad("non-finite label");
}

Record parse_record(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorKind::kIo, std::string("malformed NDJSON record: ") + e.what());
  }
  Record r;
  try {
    r.subject_id = j.at("subject_id").is_string() ? j.at("subject_id").get<std::string>()
                                                  : j.at("subject_id").dump();
    r.fs_hz = j.at("fs_hz").get<double>();
    r.ppg = j.at("ppg").get<std::vector<double>>();
    if (j.contains("abp") && !j["abp"].is_null()) r.abp = j["abp"].get<std::vector<double>>();
    if (j.contains("sbp") && !j["sbp"].is_null()) r.sbp = j["sbp"].get<double>();
    if (j.contains("dbp") && !j["dbp"].is_null()) r.dbp = j["dbp"].get<double>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kIo, std::string("NDJSON record has a missing or mistyped field: ") + e.what());
  }
  validate_record(r);
  return r;
}

std::string record_to_json(const Record& r) {
  json j;
  j["subject_id"] = r.subject_id;
  j["fs_hz"] = r.fs_hz;
  j["ppg"] = r.ppg;
  j["abp"] = r.abp ? json(*r.abp) : json(nullptr);
  j["sbp"] = r.sbp ? json(*r.sbp) : json(nullptr);
  j["dbp"] = r.dbp ? json(*r.dbp) : json(nullptr);
  return j.dump();
}

std::vector<Record> read_ndjson(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open dataset '" + path + "'");
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const Error& e) {
      fail(e.kind(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_ndjson(const std::string& path, const std::vector<Record>& records) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path + "'");
  for (const auto& r : records) out << record_to_json(r) << '\n';
  if (!out) fail(ErrorKind::kIo, "write failed for '" + path + "'");
}

std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out) {
  if (x.empty()) fail(ErrorKind::kInvalidArgument, "resample: empty series");
  if (!(fs_in > 0.0) || !(fs_out > 0.0)) fail(ErrorKind::kInvalidArgument, "resample: rates must be positive");
  if (fs_in == fs_out) return {x.begin(), x.end()};
  const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) * fs_out / fs_in));
  std::vector<double> y(n);
  const double ratio = fs_in / fs_out;
  for (std::size_t j = 0; j < n; ++j) {
    const double pos = static_cast<double>(j) * ratio;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= x.size()) {
      y[j] = x.back();
      continue;
    }
    const double f = pos - static_cast<double>(i);
    y[j] = x[i] + f * (x[i + 1] - x[i]);
  }
  return y;
}

std::size_t window_length(double seconds, double fs) {
  if (!(seconds > 0.0)) fail(ErrorKind::kInvalidArgument, "window length must be positive");
  return static_cast<std::size_t>(std::llround(seconds * fs));
}

void WindowSet::append(const WindowSet& o) {
  if (o.count() == 0) {
    warnings.insert(warnings.end(), o.warnings.begin(), o.warnings.end());
    return;
  }
  if (count() == 0 && subjects.empty()) {
    length = o.length;
    fs_hz = o.fs_hz;
    has_abp = o.has_abp;
  }
  if (o.length != length) fail(ErrorKind::kShape, "cannot merge windows of different lengths");
  if (o.has_abp != has_abp) {
    // Mixed sources: keep scalar labels only.
    has_abp = false;
    abp.clear();
  }
  ppg.insert(ppg.end(), o.ppg.begin(), o.ppg.end());
  if (has_abp) abp.insert(abp.end(), o.abp.begin(), o.abp.end());
  sbp.insert(sbp.end(), o.sbp.begin(), o.sbp.end());
  dbp.insert(dbp.end(), o.dbp.begin(), o.dbp.end());
  for (std::size_t s : o.subject) {
    const std::string& id = o.subjects[s];
    auto it = std::find(subjects.begin(), subjects.end(), id);
    if (it == subjects.end()) {
      subjects.push_back(id);
      it = subjects.end() - 1;
    }
    subject.push_back(static_cast<std::size_t>(it - subjects.begin()));
  }
  warnings.insert(warnings.end(), o.warnings.begin(), o.warnings.end());
}

WindowSet WindowSet::select(const std::vector<std::size_t>& idx) const {
  WindowSet out;
  out.length = length;
  out.fs_hz = fs_hz;
  out.has_abp = has_abp;
  out.subjects = subjects;
  for (std::size_t i : idx) {
    if (i >= count()) fail(ErrorKind::kInvalidArgument, "window index out of range");
    out.ppg.insert(out.ppg.end(), ppg.begin() + static_cast<std::ptrdiff_t>(i * length),
                   ppg.begin() + static_cast<std::ptrdiff_t>((i + 1) * length));
    if (has_abp)
      out.abp.insert(out.abp.end(), abp.begin() + static_cast<std::ptrdiff_t>(i * length),
                     abp.begin() + static_cast<std::ptrdiff_t>((i + 1) * length));
    out.sbp.push_back(sbp[i]);
    out.dbp.push_back(dbp[i]);
    out.subject.push_back(subject[i]);
  }
  return out;
}

WindowSet window(const Record& rec, double seconds, double stride_seconds) {
  validate_record(rec);
  if (std::fabs(rec.fs_hz - kTargetRateHz) > 1e-9) {
    fail(ErrorKind::kInvalidArgument, "window: record '" + rec.subject_id + "' is at " + std::to_string(rec.fs_hz) +
                                          " Hz; resample to 125 Hz first");
  }
  WindowSet ws;
  ws.length = window_length(seconds);
  const std::size_t stride = window_length(stride_seconds);
  ws.has_abp = rec.abp.has_value();
  ws.subjects = {rec.subject_id};
  if (rec.ppg.size() < ws.length) {
    ws.warnings.push_back("record '" + rec.subject_id + "' is shorter than one window; skipped");
    return ws;
  }
  for (std::size_t s = 0; s + ws.length <= rec.ppg.size(); s += stride) {
    std::vector<float> w(rec.ppg.begin() + static_cast<std::ptrdiff_t>(s),
                         rec.ppg.begin() + static_cast<std::ptrdiff_t>(s + ws.length));
    zscore(w);
    ws.ppg.insert(ws.ppg.end(), w.begin(), w.end());
    if (rec.abp) {
      const auto first = rec.abp->begin() + static_cast<std::ptrdiff_t>(s);
      std::vector<float> a(first, first + static_cast<std::ptrdiff_t>(ws.length));
      const auto [hi, lo] = extract_labels(std::span<const float>(a));
      ws.abp.insert(ws.abp.end(), a.begin(), a.end());
      ws.sbp.push_back(static_cast<float>(hi));
      ws.dbp.push_back(static_cast<float>(lo));
    } else {
      ws.sbp.push_back(static_cast<float>(*rec.sbp));
      ws.dbp.push_back(static_cast<float>(*rec.dbp));
    }
    ws.subject.push_back(0);
  }
  return ws;
}

WindowSet build_windows(const std::vector<Record>& records, double seconds, double stride_seconds) {
  WindowSet all;
  for (const auto& r : records) {
    Record rs = r;
    if (std::fabs(r.fs_hz - kTargetRateHz) > 1e-9) {
      rs.ppg = resample(r.ppg, r.fs_hz);
      if (r.abp) rs.abp = resample(*r.abp, r.fs_hz);
      rs.fs_hz = kTargetRateHz;
    }
    all.append(window(rs, seconds, stride_seconds));
  }
  return all;
}

std::pair<double, double> extract_labels(std::span<const float> abp) { return extrema(abp); }
std::pair<double, double> extract_labels(std::span<const double> abp) { return extrema(abp); }

double mae(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    fail(ErrorKind::kShape, "mae: " + std::to_string(pred.size()) + " predictions vs " +
                                std::to_string(target.size()) + " targets");
  }
  if (pred.empty()) fail(ErrorKind::kInvalidArgument, "mae: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::fabs(pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

std::vector<std::vector<std::size_t>> subject_folds(std::size_t n_subjects, std::size_t k, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::kInvalidArgument, "k-fold needs k >= 2");
  if (n_subjects < k) {
    fail(ErrorKind::kInvalidArgument, "k-fold needs at least k subjects (" + std::to_string(n_subjects) + " < " +
                                          std::to_string(k) + ")");
  }
  std::vector<std::size_t> order(n_subjects);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < n_subjects; ++i) folds[i % k].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<Split> split_kfold(const WindowSet& ws, std::size_t k, std::uint64_t seed) {
  const auto folds = subject_folds(ws.subjects.size(), k, seed);
  std::vector<std::size_t> fold_of(ws.subjects.size());
  for (std::size_t f = 0; f < k; ++f)
    for (std::size_t s : folds[f]) fold_of[s] = f;
  std::vector<Split> out(k);
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t i = 0; i < ws.count(); ++i) {
      const std::size_t g = fold_of[ws.subject[i]];
      if (g == f) {
        out[f].test.push_back(i);
      } else if (g == (f + 1) % k) {
        out[f].val.push_back(i);
      } else {
        out[f].train.push_back(i);
      }
    }
  }
  return out;
}

Split split_holdout(const WindowSet& ws, std::uint64_t seed, double train_frac, double val_frac) {
  const std::size_t n = ws.subjects.size();
  if (n < 3) fail(ErrorKind::kInvalidArgument, "holdout split needs at least 3 subjects");
  if (!(train_frac > 0.0) || !(val_frac > 0.0) || train_frac + val_frac >= 1.0) {
    fail(ErrorKind::kInvalidArgument, "holdout fractions must be positive and sum below 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
  n_val = std::clamp<std::size_t>(n_val, 1, n - n_train - 1);
  std::vector<int> part(n);
  for (std::size_t i = 0; i < n; ++i) part[order[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
  Split s;
  for (std::size_t i = 0; i < ws.count(); ++i) {
    switch (part[ws.subject[i]]) {
      case 0:
        s.train.push_back(i);
        break;
      case 1:
        s.val.push_back(i);
        break;
      default:
        s.test.push_back(i);
        break;
    }
  }
  return s;
}

std::vector<Record> synth_generate(std::uint64_t seed, std::size_t n_subjects, double seconds, double fs_hz) {
  if (n_subjects == 0) fail(ErrorKind::kInvalidArgument, "synth_generate needs at least one subject");
  if (!(seconds > 0.0) || !(fs_hz > 0.0)) fail(ErrorKind::kInvalidArgument, "duration and rate must be positive");

  // Normalise the ABP pulse to exactly [0, 1] over one period.
  double smin = INFINITY, smax = -INFINITY;
  for (int i = 0; i < 8192; ++i) {
    const double v = abp_shape(i / 8192.0);
    smin = std::min(smin, v);
    smax = std::max(smax, v);
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto n = static_cast<std::size_t>(std::llround(seconds * fs_hz));
  std::vector<Record> out;
  for (std::size_t s = 0; s < n_subjects; ++s) {
    const double hr = 50.0 + 50.0 * u01(rng);
    const double sbp = 90.0 + 90.0 * u01(rng);
    const double dbp_hi = std::min(110.0, sbp - 20.0);
    const double dbp = 50.0 + (dbp_hi - 50.0) * u01(rng);
    const double phase0 = u01(rng);
    const double wander_hz = 0.1 + 0.2 * u01(rng);
    const double wander_phase = kTwoPi * u01(rng);

    // PPG morphology follows the pressures: a stiffer (high SBP) vessel gives
    // a narrower systolic wave, a higher DBP a stronger reflected wave.
    const double sys_width = 0.06 + 0.06 * (180.0 - sbp) / 90.0;
    const double refl_amp = 0.15 + 0.5 * (dbp - 50.0) / 60.0;
    const double refl_delay = 0.32 + 0.2 * (sbp - dbp - 20.0) / 110.0;

    Record r;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%04zu", s);
    r.subject_id = id;
    r.fs_hz = fs_hz;
    r.sbp = sbp;
    r.dbp = dbp;
    r.ppg.resize(n);
    std::vector<double> abp(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs_hz;
      double ph = hr / 60.0 * t + phase0;
      ph -= std::floor(ph);
      abp[i] = dbp + (sbp - dbp) * (abp_shape(ph) - smin) / (smax - smin);
      r.ppg[i] = bump(ph, 0.2, sys_width) + refl_amp * bump(ph, 0.2 + refl_delay, 0.08) +
                 0.1 * std::sin(kTwoPi * wander_hz * t + wander_phase) + 0.02 * noise(rng);
    }
    r.abp = std::move(abp);
    out.push_back(std::move(r));
  }
  return out;
}

void save_window_set(const std::string& path, const WindowSet& ws) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kIo, "cannot write '" + path + "'");
  os.write(kCacheMagic, sizeof kCacheMagic);
  put<std::uint32_t>(os, kCacheVersion);
  put<std::uint64_t>(os, ws.count());
  put<std::uint64_t>(os, ws.length);
  put<double>(os, ws.fs_hz);
  put<std::uint8_t>(os, ws.has_abp ? 1 : 0);
  put<std::uint64_t>(os, ws.subjects.size());
  for (const auto& s : ws.subjects) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  for (float v : ws.ppg) put(os, v);
  if (ws.has_abp)
    for (float v : ws.abp) put(os, v);
  for (float v : ws.sbp) put(os, v);
  for (float v : ws.dbp) put(os, v);
  for (std::size_t v : ws.subject) put<std::uint64_t>(os, v);
  if (!os) fail(ErrorKind::kIo, "write failed for '" + path + "'");
}

WindowSet load_window_set(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) {
    fail(ErrorKind::kIo, "'" + path + "' is not a window cache");
  }
  if (get<std::uint32_t>(is) != kCacheVersion) fail(ErrorKind::kIo, "unsupported window cache version");
  WindowSet ws;
  const auto count = get<std::uint64_t>(is);
  ws.length = get<std::uint64_t>(is);
  ws.fs_hz = get<double>(is);
  ws.has_abp = get<std::uint8_t>(is) != 0;
  const auto n_subjects = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n_subjects; ++i) {
    std::string s(get<std::uint32_t>(is), '\0');
    if (!is.read(s.data(), static_cast<std::streamsize>(s.size()))) fail(ErrorKind::kIo, "window cache truncated");
    ws.subjects.push_back(std::move(s));
  }
  ws.ppg.resize(count * ws.length);
  for (float& v : ws.ppg) v = get<float>(is);
  if (ws.has_abp) {
    ws.abp.resize(count * ws.length);
    for (float& v : ws.abp) v = get<float>(is);
  }
  ws.sbp.resize(count);
  ws.dbp.resize(count);
  ws.subject.resize(count);
  for (float& v : ws.sbp) v = get<float>(is);
  for (float& v : ws.dbp) v = get<float>(is);
  for (std::size_t& v : ws.subject) {
    v = get<std::uint64_t>(is);
    if (v >= n_subjects) fail(ErrorKind::kIo, "window cache subject index out of range");
  }
  return ws;
}

}  // namespace ppgnas
