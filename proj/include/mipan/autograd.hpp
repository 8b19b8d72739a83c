#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mipan/tensor.hpp"

namespace mipan {

// One vertex of the recorded forward graph. Leaves are parameters or
// constants; interior nodes carry a pull-style backprop closure that
// accumulates into parent gradients.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on demand, same shape as value
  bool requires_grad = false;
  std::string op;  // empty for leaves
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backprop;

  Tensor<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool is_leaf() const { return parents.empty() && !backprop; }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
NodePtr<T> make_constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = false;
  return n;
}

template <typename T>
NodePtr<T> make_param(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

template <typename T>
NodePtr<T> make_op_node(Tensor<T> value, std::string op,
                        std::vector<NodePtr<T>> parents,
                        std::function<void(Node<T>&)> backprop) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = std::move(op);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p && p->requires_grad) { n->requires_grad = true; break; }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

// Reverse-mode sweep from a scalar root. Gradients accumulate into every
// node reached; repeated calls without zeroing accumulate further. With
// free_graph the interior record is dismantled afterwards so activations
// are released while parameters keep their gradients.
template <typename T>
void backward(const NodePtr<T>& root, bool free_graph = true) {
  if (!root) throw std::invalid_argument("backward: null root");
  if (root->value.size() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " + shape_str(root->value.shape()));
  if (!root->requires_grad) return;

  // iterative post-order DFS
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next].get();
      ++next;
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop) n->backprop(*n);
  }
  // Interior gradients are per-sweep scratch: clear them so a second sweep
  // over a retained graph propagates exactly one unit again. Leaves keep
  // accumulating.
  for (Node<T>* n : order) {
    if (n->is_leaf()) continue;
    if (free_graph) {
      n->backprop = nullptr;
      n->parents.clear();
      n->grad = Tensor<T>();
    } else if (!n->grad.empty()) {
      n->grad.fill(T(0));
    }
  }
}

template <typename T>
void zero_grad(const std::vector<NodePtr<T>>& params) {
  for (const auto& p : params)
    if (p && !p->grad.empty()) p->grad.fill(T(0));
}

}  // namespace mipan
