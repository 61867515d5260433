// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operator set for 1D CNNs. Activations are laid out
// [batch, channels, length]; convolutions use cross-correlation semantics with
// zero padding.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ppgnas/tensor.hpp"

namespace ppgnas::ops {

// Output length of a sliding window, or throws kGeometry if it would be < 1.
std::size_t window_out_len(std::size_t len, std::size_t kernel, std::size_t stride, std::size_t padding);

// x [N,Cin,L], w [Cout,Cin,K], bias [Cout] or undefined.
template <typename T>
BasicTensor<T> conv1d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias,
                      std::size_t stride, std::size_t padding);

// x [N,C,L], w [C,1,K]: channel c convolves only with filter c.
template <typename T>
BasicTensor<T> depthwise_conv1d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& bias, std::size_t stride, std::size_t padding);

// x [N,In,1], w [Out,In] -> [N,Out,1].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T value);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);

// mean((pred - target)^2); target never receives a gradient.
template <typename T>
BasicTensor<T> mse(const BasicTensor<T>& pred, const BasicTensor<T>& target);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

// Channel concatenation of [N,Ca,L] and [N,Cb,L].
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> max_pool1d(const BasicTensor<T>& x, std::size_t kernel, std::size_t stride);

template <typename T>
BasicTensor<T> avg_pool1d(const BasicTensor<T>& x, std::size_t kernel, std::size_t stride);

// Nearest-neighbour x2 along length.
template <typename T>
BasicTensor<T> upsample2(const BasicTensor<T>& x);

// [N,C,L] -> [N,C,1]
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

template <typename T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

// Per-channel normalisation over (N,L). Training mode uses batch statistics
// and updates the running buffers; eval mode uses the running buffers.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          BatchNormStats<T>& stats, bool training);

// Softmax of a 1-D logit vector.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

// sum_i weights[i] * ys[i]; all ys share one shape.
template <typename T>
BasicTensor<T> weighted_sum(const std::vector<BasicTensor<T>>& ys, const BasicTensor<T>& weights);

// sum_i v[i] * coeffs[i] as a scalar.
template <typename T>
BasicTensor<T> dot_const(const BasicTensor<T>& v, std::span<const T> coeffs);

}  // namespace ppgnas::ops
