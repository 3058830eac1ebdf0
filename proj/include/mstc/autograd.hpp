#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mstc/tensor.hpp"

namespace mstc {

// Reverse-mode differentiation over a dynamically recorded graph. Each op
// produces a Node holding its value, its inputs and a closure that pushes the
// node's gradient into the inputs' gradients.

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  Tensor<T>& input_grad(size_t i) { return inputs[i]->grad_buffer(); }
  bool input_needs_grad(size_t i) const { return inputs[i] && inputs[i]->requires_grad; }
  const Tensor<T>& input_value(size_t i) const { return inputs[i]->value; }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Value of a [1,1,1,1] result.
  T item() const { return node_->value[0]; }

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Wraps an op result; records inputs and the backward closure only when some
/// input requires a gradient and recording is enabled.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& v : inputs) any = any || v.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& v : inputs) node->inputs.push_back(v.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Var<T>(std::move(node));
}

/// Back-propagates from a scalar root. The recorded graph is released
/// afterwards unless retain_graph is set; leaf gradients accumulate.
template <typename T>
void backward(const Var<T>& root, bool retain_graph = false) {
  require_shape(root.value().size() == 1, "backward() needs a scalar root, got " + root.shape().str());
  if (!root.requires_grad()) return;

  // Owning references keep every node alive while the graph is unlinked below.
  std::vector<std::shared_ptr<Node<T>>> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<std::shared_ptr<Node<T>>, size_t>> stack{{root.node(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      std::shared_ptr<Node<T>> child = node->inputs[next++];
      if (child && child->requires_grad && seen.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
    } else {
      order.push_back(std::move(node));
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& node = **it;
    if (node.backward_fn && !node.grad.empty()) node.backward_fn(node);
    if (!retain_graph && node.backward_fn) {
      node.backward_fn = nullptr;
      node.inputs.clear();
      node.grad = Tensor<T>();
    }
  }
}

}  // namespace mstc
