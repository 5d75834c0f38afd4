#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "echodet/core/tensor.hpp"

namespace echodet {

// Reverse-mode autodiff on a dynamic tape.  Every tracked Var owns a GradNode;
// an op's closure captures the tensors it needs plus the parent nodes it
// accumulates into.  backward() walks the graph once in reverse topological
// order, so parameters used several times (the weight-shared two-phase
// backbone, the shared detection towers) accumulate gradient from every use.

template <class T>
struct GradNode {
  Shape shape;
  Tensor<T> grad;  // lazily allocated
  bool leaf = false;
  bool retain = false;  // keep grad after backward even if not a leaf
  std::vector<std::shared_ptr<GradNode>> parents;
  std::function<void(const Tensor<T>& upstream)> backward;

  Tensor<T>& grad_buffer() {
    if (!grad.defined()) grad = Tensor<T>(shape);
    return grad;
  }
};

namespace autograd_detail {
inline thread_local int no_grad_depth = 0;
}

inline bool grad_enabled() { return autograd_detail::no_grad_depth == 0; }

struct NoGradGuard {
  NoGradGuard() { ++autograd_detail::no_grad_depth; }
  ~NoGradGuard() { --autograd_detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> v) : value_(std::move(v)) {}

  // parameter / differentiable input
  static Var leaf(Tensor<T> v) {
    Var r(std::move(v));
    r.node_ = std::make_shared<GradNode<T>>();
    r.node_->shape = r.value_.shape();
    r.node_->leaf = true;
    return r;
  }

  const Tensor<T>& value() const { return value_; }
  Tensor<T>& value() { return value_; }
  bool defined() const { return value_.defined(); }
  bool tracked() const { return node_ != nullptr; }
  const std::shared_ptr<GradNode<T>>& node() const { return node_; }

  void retain_grad() {
    ECHODET_CHECK(node_ != nullptr, "retain_grad on untracked var");
    node_->retain = true;
  }

  Tensor<T>& grad() {
    ECHODET_CHECK(node_ != nullptr, "grad on untracked var");
    return node_->grad_buffer();
  }
  bool has_grad() const { return node_ && node_->grad.defined(); }

  void zero_grad() {
    if (node_ && node_->grad.defined()) node_->grad.fill(T(0));
  }

  void attach_node(std::shared_ptr<GradNode<T>> n) { node_ = std::move(n); }

 private:
  Tensor<T> value_;
  std::shared_ptr<GradNode<T>> node_;
};

// Builds the op node. `parents` lists the tracked inputs (in any order,
// duplicates allowed when an input is used twice); `backward` receives the
// upstream gradient and must accumulate into each parent's grad_buffer().
template <class T>
Var<T> make_op(Tensor<T> out, std::vector<std::shared_ptr<GradNode<T>>> parents,
               std::function<void(const Tensor<T>&)> backward) {
  Var<T> r(std::move(out));
  if (!grad_enabled()) return r;
  // drop untracked entries
  std::vector<std::shared_ptr<GradNode<T>>> tracked;
  for (auto& p : parents)
    if (p) tracked.push_back(p);
  if (tracked.empty()) return r;
  auto n = std::make_shared<GradNode<T>>();
  n->shape = r.value().shape();
  n->parents = std::move(tracked);
  n->backward = std::move(backward);
  r.attach_node(n);
  return r;
}

template <class T>
void accumulate(const std::shared_ptr<GradNode<T>>& node, const Tensor<T>& g) {
  if (!node) return;
  Tensor<T>& buf = node->grad_buffer();
  ECHODET_CHECK(same_shape(buf, g), "gradient shape mismatch");
  T* d = buf.data();
  const T* s = g.data();
  for (int64_t i = 0; i < g.numel(); ++i) d[i] += s[i];
}

// Backward from a root. Without a seed the root must be scalar (seeded with
// 1); with a seed the upstream gradient is taken verbatim. Every leaf (and
// retain_grad()-marked node) reachable from the root ends up with its
// accumulated gradient.
template <class T>
void backward(const Var<T>& root, const Tensor<T>* seed = nullptr) {
  ECHODET_CHECK(root.tracked(), "backward on untracked var");
  if (seed)
    ECHODET_CHECK(seed->shape() == root.value().shape(), "seed gradient shape mismatch");
  else
    ECHODET_CHECK(root.value().numel() == 1, "backward root must be scalar");

  using NodeP = GradNode<T>*;
  // count child edges per reachable node
  std::unordered_map<NodeP, int> pending;
  {
    std::vector<NodeP> stack{root.node().get()};
    pending[root.node().get()];  // ensure present
    while (!stack.empty()) {
      NodeP n = stack.back();
      stack.pop_back();
      for (auto& p : n->parents) {
        auto it = pending.find(p.get());
        if (it == pending.end()) {
          pending[p.get()] = 1;
          stack.push_back(p.get());
        } else {
          ++it->second;
        }
      }
    }
  }

  if (seed) {
    Tensor<T>& g = root.node()->grad_buffer();
    std::memcpy(g.data(), seed->data(), sizeof(T) * static_cast<size_t>(g.numel()));
  } else {
    root.node()->grad_buffer().fill(T(1));
  }
  std::vector<NodeP> ready{root.node().get()};
  while (!ready.empty()) {
    NodeP n = ready.back();
    ready.pop_back();
    if (n->backward) {
      n->backward(n->grad);
      if (!n->leaf && !n->retain) n->grad = Tensor<T>();  // release intermediate grads
    }
    for (auto& p : n->parents) {
      if (--pending[p.get()] == 0) ready.push_back(p.get());
    }
  }
}

}  // namespace echodet
