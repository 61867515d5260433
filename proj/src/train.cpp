// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ppgnas/adam.hpp"
#include "ppgnas/ops.hpp"

namespace ppgnas {

Tensor TensorDataset::input_batch(const std::vector<std::size_t>& idx) const {
  const std::size_t stride = input_stride();
  std::vector<float> v(idx.size() * stride);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(inputs.begin() + static_cast<std::ptrdiff_t>(idx[i] * stride), stride, v.begin() + static_cast<std::ptrdiff_t>(i * stride));
  return Tensor::from({idx.size(), in_channels, in_len}, std::move(v));
}

Tensor TensorDataset::target_batch(const std::vector<std::size_t>& idx) const {
  const std::size_t stride = target_stride();
  std::vector<float> v(idx.size() * stride);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(targets.begin() + static_cast<std::ptrdiff_t>(idx[i] * stride), stride, v.begin() + static_cast<std::ptrdiff_t>(i * stride));
  return Tensor::from({idx.size(), target_channels, target_len}, std::move(v));
}

TensorDataset TensorDataset::subset(const std::vector<std::size_t>& idx) const {
  TensorDataset out = *this;
  out.count = idx.size();
  out.inputs.resize(idx.size() * input_stride());
  out.targets.resize(idx.size() * target_stride());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(inputs.begin() + static_cast<std::ptrdiff_t>(idx[i] * input_stride()), input_stride(),
                out.inputs.begin() + static_cast<std::ptrdiff_t>(i * input_stride()));
    std::copy_n(targets.begin() + static_cast<std::ptrdiff_t>(idx[i] * target_stride()), target_stride(),
                out.targets.begin() + static_cast<std::ptrdiff_t>(i * target_stride()));
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) fail(ErrorKind::kInvalidArgument, "batch size must be positive");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < count; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
  }
  return batches;
}

double run_epoch(const TensorDataset& data, std::size_t batch_size, std::uint64_t seed,
                 const std::function<double(const Tensor&, const Tensor&)>& step) {
  if (data.count == 0) fail(ErrorKind::kInvalidArgument, "training split is empty");
  double total = 0.0;
  for (const auto& batch : make_batches(data.count, batch_size, seed)) {
    const double loss = step(data.input_batch(batch), data.target_batch(batch));
    if (!std::isfinite(loss)) {
      fail(ErrorKind::kNumeric, "non-finite training loss (" + std::to_string(loss) + "); lower the learning rate");
    }
    total += loss * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(data.count);
}

std::vector<EpochStats> fit(Model& model, const TensorDataset& train, const TrainConfig& cfg) {
  Adam opt(model.parameters(), cfg.lr);
  std::vector<EpochStats> log;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double loss = run_epoch(train, cfg.batch_size, cfg.seed + e, [&](const Tensor& x, const Tensor& y) {
      opt.zero_grad();
      auto pred = model.forward(x, true);
      auto l = ops::mse(ops::reshape(pred, y.shape()), y);
      const double v = l.item();
      backward(l);
      opt.step();
      return v;
    });
    log.push_back({e, loss, 0.0, 0.0});
  }
  return log;
}

std::vector<float> predict(Model& model, const TensorDataset& data, std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<float> out;
  out.reserve(data.count * data.target_stride());
  for (std::size_t i = 0; i < data.count; i += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t j = i; j < std::min(data.count, i + batch_size); ++j) idx.push_back(j);
    auto pred = model.forward(data.input_batch(idx), false);
    out.insert(out.end(), pred.data().begin(), pred.data().end());
  }
  return out;
}

double evaluate_mse(Model& model, const TensorDataset& data, std::size_t batch_size) {
  const auto pred = predict(model, data, batch_size);
  if (pred.size() != data.targets.size()) fail(ErrorKind::kShape, "prediction size does not match targets");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - data.targets[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace ppgnas
