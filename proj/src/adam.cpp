// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/adam.hpp"

#include <cmath>

namespace ppgnas {

void adam_step(Tensor& param, AdamState& state) {
  if (!param.has_grad()) fail(ErrorKind::kState, "adam_step: parameter has no gradient");
  const std::size_t n = param.numel();
  if (state.m.empty()) {
    state.m.assign(n, 0.0f);
    state.v.assign(n, 0.0f);
  }
  if (state.m.size() != n || state.v.size() != n) {
    fail(ErrorKind::kShape, "adam_step: optimizer state does not match parameter size");
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta1), t));
  const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta2), t));
  auto p = param.data();
  auto g = param.grad();
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0f - state.beta1) * g[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0f - state.beta2) * g[i] * g[i];
    const float mhat = state.m[i] / bc1;
    const float vhat = state.v[i] / bc2;
    p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

Adam::Adam(std::vector<Tensor> params, float lr) : params_(std::move(params)), lr_(lr) {
  states_.resize(params_.size());
  for (auto& s : states_) s.lr = lr;
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].has_grad()) adam_step(params_[i], states_[i]);
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace ppgnas
