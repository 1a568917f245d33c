#pragma once

#include "lstfuse/tensor.hpp"

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

namespace lstfuse::ad {

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives this node's gradient and accumulates into the parents.
  std::function<void(const Tensor<Scalar>&)> backward_fn;

  Tensor<Scalar>& ensure_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
};

/// Handle to a node of the reverse-mode graph. Copies share the node.
template <typename Scalar>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  static Var constant(Tensor<Scalar> value) {
    auto n = std::make_shared<Node<Scalar>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  static Var parameter(Tensor<Scalar> value) {
    auto n = std::make_shared<Node<Scalar>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  // Empty tensor when no gradient reached this node.
  const Tensor<Scalar>& grad() const { return node_->grad; }
  Tensor<Scalar>& mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.set_zero();
  }

  Scalar item() const {
    require_shape(node_->value.size() == 1, "item() on non-scalar " + shape().str());
    return node_->value.array()[0];
  }

  Var detach() const { return constant(node_->value); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Creates an op result. The backward closure is dropped when no input needs a gradient.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                        std::function<void(const Tensor<Scalar>&)> backward_fn) {
  auto n = std::make_shared<Node<Scalar>>();
  n->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    for (auto& in : inputs) n->parents.push_back(in.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Var<Scalar>(std::move(n));
}

template <typename Scalar>
void accumulate(const Var<Scalar>& target, const Tensor<Scalar>& g) {
  if (!target.requires_grad()) return;
  target.node()->ensure_grad().array() += g.array();
}

/// Reverse sweep from a scalar root; gradients accumulate into every reachable leaf.
template <typename Scalar>
void backward(const Var<Scalar>& root) {
  require_shape(root.value().size() == 1, "backward() requires a scalar root, got " + root.shape().str());
  if (!root.requires_grad()) return;

  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad().array() += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* node = *it;
    if (node->backward_fn && node->grad.shape() == node->value.shape()) node->backward_fn(node->grad);
  }
  // Interior gradients are released; leaves keep theirs.
  for (Node<Scalar>* node : order) {
    if (node->backward_fn) node->grad = Tensor<Scalar>();
  }
}

}  // namespace lstfuse::ad
