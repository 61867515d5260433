// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with tape-free reverse-mode autodiff. Every op
// result keeps shared ownership of its parents plus a closure that pushes its
// gradient back into them; backward() walks that DAG in reverse topological
// order. The engine is instantiated for float (training) and double
// (gradient-check mode).
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ppgnas/error.hpp"

namespace ppgnas {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class BasicTensor {
 public:
  struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a gradient reaches this node
    bool requires_grad = false;
    bool leaf = true;
    bool consumed = false;  // set once backward has run through the node
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    // Lazily sized gradient buffer for accumulation.
    std::vector<T>& grad_buffer() {
      if (grad.empty()) grad.assign(data.size(), T(0));
      return grad;
    }
  };

  BasicTensor() = default;

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor from(Shape shape, std::vector<T> data, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  // Builds an op result. `parents` are retained only when at least one of them
  // requires a gradient.
  static BasicTensor make_result(Shape shape, std::vector<T> data,
                                 std::vector<BasicTensor> parents,
                                 std::function<void(Node&)> backward_fn);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  // Copy of the values with no history; keeps requires_grad for leaves.
  BasicTensor detach() const;
  BasicTensor clone_leaf(bool requires_grad) const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  explicit BasicTensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate; the graph
// is released afterwards, so a second call on the same loss is an error.
template <typename T>
void backward(const BasicTensor<T>& loss);

template <typename T>
bool all_finite(std::span<const T> values);

// While alive, op results on this thread record no history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace ppgnas
