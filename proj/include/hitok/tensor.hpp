#pragma once

// Reverse-mode differentiable dense arrays.
//
// A Tensor is a cheap handle onto a graph node. Ops produce new nodes that
// remember their parents and a backward closure only when some input requires
// a gradient, so inference builds no graph. Data buffers are shared between
// handles; a parameter can be bound into several graphs without copying.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hitok/error.hpp"

namespace hitok {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

template <class Real>
struct Node {
  Shape shape;
  std::shared_ptr<std::vector<Real>> data;
  std::vector<Real> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<Real>& ensure_grad() {
    if (grad.size() != data->size()) grad.assign(data->size(), Real(0));
    return grad;
  }
};

template <class Real = float>
class Tensor {
 public:
  using value_type = Real;
  using NodePtr = std::shared_ptr<Node<Real>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = numel(shape);
    return from(std::move(shape), std::vector<Real>(n, Real(0)), requires_grad);
  }

  static Tensor full(Shape shape, Real value, bool requires_grad = false) {
    const std::size_t n = numel(shape);
    return from(std::move(shape), std::vector<Real>(n, value), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false) {
    if (values.size() != numel(shape)) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + to_string(shape));
    }
    auto n = std::make_shared<Node<Real>>();
    n->shape = std::move(shape);
    n->data = std::make_shared<std::vector<Real>>(std::move(values));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(Real v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data->size(); }

  std::span<const Real> data() const { return *node_->data; }
  std::span<Real> mutable_data() { return *node_->data; }
  const std::vector<Real>& vec() const { return *node_->data; }
  Real operator[](std::size_t i) const { return (*node_->data)[i]; }

  Real item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return (*node_->data)[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == size(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  // New leaf sharing this tensor's data; no history, no gradient.
  Tensor detach() const {
    auto n = std::make_shared<Node<Real>>();
    n->shape = node_->shape;
    n->data = node_->data;
    return Tensor(std::move(n));
  }

  // New leaf sharing data that collects its own gradient.
  Tensor bind_leaf() const {
    auto n = std::make_shared<Node<Real>>();
    n->shape = node_->shape;
    n->data = node_->data;
    n->requires_grad = true;
    return Tensor(std::move(n));
  }

  Tensor clone() const { return from(shape(), vec(), false); }

  Node<Real>& node() const { return *node_; }
  const NodePtr& node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

namespace detail {

template <class Real>
void check_finite(const std::vector<Real>& v, const char* op) {
  for (const Real x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

}  // namespace detail

// Builds the result node of an op. `backward` is called as backward(self)
// and must accumulate into the gradient buffers of whichever parents
// require a gradient.
template <class Real, class Backward>
Tensor<Real> make_op(const char* op, Shape shape, std::vector<Real> values,
                     std::vector<Tensor<Real>> parents, Backward&& backward) {
  detail::check_finite(values, op);
  auto n = std::make_shared<Node<Real>>();
  n->shape = std::move(shape);
  if (values.size() != numel(n->shape)) {
    throw ShapeError(std::string(op) + ": result size does not match shape");
  }
  n->data = std::make_shared<std::vector<Real>>(std::move(values));
  n->op = op;
  n->is_leaf = false;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node_ptr());
    n->backward_fn = std::forward<Backward>(backward);
  }
  return Tensor<Real>(std::move(n));
}

// Gradient buffer of parent i, or nullptr when it does not need one.
template <class Real>
Real* parent_grad(Node<Real>& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.ensure_grad().data();
}

// Propagates d(loss)/d(x) to every reachable tensor that requires a gradient.
// Leaf gradients accumulate across calls; interior gradients are recomputed.
template <class Real>
void backward(const Tensor<Real>& loss) {
  if (loss.size() != 1) throw ShapeError("backward() needs a scalar loss, got " + to_string(loss.shape()));
  if (!loss.requires_grad()) throw UsageError("backward(): loss does not depend on any parameter");

  // Iterative post-order DFS.
  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> seen;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack;
  stack.emplace_back(&loss.node(), 0);
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<Real>* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node<Real>* n : order) {
    if (!n->is_leaf) n->grad.assign(n->data->size(), Real(0));
  }
  loss.node().ensure_grad()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Real>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace hitok
