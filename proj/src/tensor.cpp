// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace ppgnas {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) fail(ErrorKind::kShape, "tensor dimensions must be positive, got " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) fail(ErrorKind::kShape, "tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (data.size() != shape_numel(shape)) {
    fail(ErrorKind::kShape, "data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::make_result(Shape shape, std::vector<T> data,
                                           std::vector<BasicTensor> parents,
                                           std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->leaf = false;
  bool needs = false;
  for (const auto& p : parents) {
    if (p.node_->consumed) {
      fail(ErrorKind::kState, "tensor belongs to a graph already consumed by backward; re-run forward");
    }
    needs = needs || p.node_->requires_grad;
  }
  needs = needs && g_grad_enabled;
  node->requires_grad = needs;
  if (needs) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward_fn = std::move(backward_fn);
  }
  return BasicTensor(std::move(node));
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) fail(ErrorKind::kShape, "item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool on) {
  if (!node_->leaf) fail(ErrorKind::kState, "requires_grad can only be toggled on leaf tensors");
  node_->requires_grad = on;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return from(node_->shape, node_->data, false);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone_leaf(bool requires_grad) const {
  return from(node_->shape, node_->data, requires_grad);
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  using Node = typename BasicTensor<T>::Node;
  if (!loss.defined()) fail(ErrorKind::kState, "backward on undefined tensor");
  if (loss.numel() != 1) {
    fail(ErrorKind::kShape, "backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  Node* root = loss.node();
  if (root->consumed) fail(ErrorKind::kState, "backward called twice on the same graph; re-run forward");
  if (!root->requires_grad) return;

  // Iterative post-order DFS to get a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !p->leaf && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer().assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  for (Node* node : order) {
    node->consumed = true;
    node->backward_fn = nullptr;
    node->parents.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

template <typename T>
bool all_finite(std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);
template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);

}  // namespace ppgnas
