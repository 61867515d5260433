// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ppgnas/model.hpp"
#include "ppgnas/tensor.hpp"

namespace ppgnas {

// In-memory supervised pairs: inputs [N, C, L], targets [N, Ct, Lt].
struct TensorDataset {
  std::vector<float> inputs;
  std::vector<float> targets;
  std::size_t count = 0;
  std::size_t in_channels = 1;
  std::size_t in_len = 0;
  std::size_t target_channels = 1;
  std::size_t target_len = 1;

  std::size_t input_stride() const { return in_channels * in_len; }
  std::size_t target_stride() const { return target_channels * target_len; }

  Tensor input_batch(const std::vector<std::size_t>& idx) const;
  Tensor target_batch(const std::vector<std::size_t>& idx) const;
  TensorDataset subset(const std::vector<std::size_t>& idx) const;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  float lr = 1e-3f;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double cost = 0.0;
};

// Seeded shuffled mini-batches over [0, count).
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, std::uint64_t seed);

// Mean training loss over one epoch. `step` runs forward/backward for one
// batch and returns the loss value; a non-finite loss throws kNumeric.
double run_epoch(const TensorDataset& data, std::size_t batch_size, std::uint64_t seed,
                 const std::function<double(const Tensor&, const Tensor&)>& step);

// Adam on every model parameter with MSE loss.
std::vector<EpochStats> fit(Model& model, const TensorDataset& train, const TrainConfig& cfg);

// Eval-mode predictions, one flattened output row per sample.
std::vector<float> predict(Model& model, const TensorDataset& data, std::size_t batch_size = 256);

// Eval-mode MSE over a dataset.
double evaluate_mse(Model& model, const TensorDataset& data, std::size_t batch_size = 256);

}  // namespace ppgnas
