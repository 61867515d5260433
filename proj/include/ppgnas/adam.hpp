// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ppgnas/tensor.hpp"

namespace ppgnas {

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::uint64_t t = 0;
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// One bias-corrected Adam update of `param` in place. Throws kState when the
// parameter carries no gradient.
void adam_step(Tensor& param, AdamState& state);

// Adam over a fixed parameter list, one state per parameter. Parameters that
// received no gradient in the last pass are skipped.
class Adam {
 public:
  Adam(std::vector<Tensor> params, float lr);

  void step();
  void zero_grad();
  float lr() const { return lr_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamState> states_;
  float lr_;
};

}  // namespace ppgnas
