#pragma once

// Minimal reverse-mode autodiff over dense double tensors.
//
// Every op returns a Tensor whose Node remembers its parents and a closure
// that pushes the node's gradient into them. Graphs are built per forward
// pass and released when the last Tensor referencing them goes away.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "b2s/common/error.hpp"

namespace b2s::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Disables graph recording on this thread (inference, parameter updates).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    require(numel_of(shape) == values.size(), ErrorKind::shape_mismatch,
            "tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    require(shape.size() <= 5, ErrorKind::shape_mismatch, "tensor: rank above 5");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = numel_of(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor scalar(double v) { return from({}, {v}); }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return n_->shape; }
  std::size_t rank() const { return n_->shape.size(); }
  std::size_t dim(std::size_t i) const { return n_->shape.at(i); }
  std::size_t numel() const { return n_->value.size(); }
  bool requires_grad() const { return n_->requires_grad; }

  std::span<const double> values() const { return n_->value; }
  std::span<double> values_mut() { return n_->value; }
  std::span<const double> grad() const { return n_->grad; }
  double item() const {
    require(numel() == 1, ErrorKind::shape_mismatch, "item() on non-scalar " + shape_str(shape()));
    return n_->value[0];
  }

  void zero_grad() { n_->grad.clear(); }

  Node* node() const { return n_.get(); }
  const std::shared_ptr<Node>& ptr() const { return n_; }

  /// Seeds d(self)/d(self) = 1 and propagates to every reachable node,
  /// visiting each node exactly once in reverse topological order.
  void backward() const {
    require(numel() == 1, ErrorKind::shape_mismatch, "backward() requires a scalar");
    if (!n_->requires_grad) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{n_.get(), 0}};
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    n_->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      if (node->backward && !node->grad.empty()) node->backward(*node);
    }
  }

 private:
  std::shared_ptr<Node> n_;
};

namespace detail {

/// Builds an op result. The backward closure is only kept when recording and
/// at least one input participates in the graph.
template <class Backward>
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                   Backward&& backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      n->requires_grad = true;
      for (const auto& t : inputs) n->parents.push_back(t.ptr());
      n->backward = std::forward<Backward>(backward);
    }
  }
  return Tensor(std::move(n));
}

template <class Backward>
Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                   Backward&& backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      n->requires_grad = true;
      for (const auto& t : inputs) n->parents.push_back(t.ptr());
      n->backward = std::forward<Backward>(backward);
    }
  }
  return Tensor(std::move(n));
}

inline const std::vector<double>& val(Node& self, std::size_t i) { return self.parents[i]->value; }

/// Gradient sink for parent `i`, or nullptr when it does not participate.
inline double* grad_of(Node& self, std::size_t i) {
  Node* p = self.parents[i].get();
  return p->requires_grad ? p->ensure_grad().data() : nullptr;
}

}  // namespace detail

}  // namespace b2s::nn
