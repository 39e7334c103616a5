// SPDX-License-Identifier: Apache-2.0
#include "hflab/nn/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "hflab/error.hpp"

namespace hflab::nn {
namespace {

thread_local bool t_grad_enabled = true;
thread_local MatmulPrecision t_precision = MatmulPrecision::f64;

detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) raise(ErrorCode::ShapeMismatch, "use of an undefined tensor");
  return *node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (values.size() != shape_numel(shape)) {
    raise(ErrorCode::ShapeMismatch, std::to_string(values.size()) + " values for shape " + shape_string(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor(Shape{1}, value, requires_grad); }

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) raise(ErrorCode::ShapeMismatch, "axis out of range for " + shape_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).value.size(); }

std::span<const double> Tensor::values() const { return checked(node_).value; }

std::span<double> Tensor::mutable_values() { return checked(node_).value; }

double Tensor::item() const {
  const auto& n = checked(node_);
  if (n.value.size() != 1) raise(ErrorCode::ShapeMismatch, "item() on tensor of shape " + shape_string(n.shape));
  return n.value[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

void Tensor::set_requires_grad(bool flag) { checked(node_).requires_grad = flag; }

bool Tensor::has_grad() const {
  const auto& n = checked(node_);
  return n.grad.size() == n.value.size() && !n.value.empty();
}

std::span<const double> Tensor::grad() const {
  const auto& n = checked(node_);
  if (n.grad.size() != n.value.size()) return {};
  return n.grad;
}

std::span<double> Tensor::mutable_grad() { return checked(node_).ensure_grad(); }

void Tensor::zero_grad() {
  auto& n = checked(node_);
  if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

void Tensor::backward() const {
  auto& root = checked(node_);
  if (root.value.size() != 1) {
    raise(ErrorCode::ShapeMismatch, "backward() needs a single-element tensor, got " + shape_string(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && node->grad.size() == node->value.size()) node->backward(*node);
  }
}

Tensor Tensor::detach() const {
  const auto& n = checked(node_);
  return Tensor(n.shape, n.value, false);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::initializer_list<const Tensor*> inputs,
                           std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool track = false;
  if (t_grad_enabled) {
    for (const Tensor* t : inputs) track = track || (t->defined() && t->requires_grad());
  }
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor* t : inputs) node->inputs.push_back(t->node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                           std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool track = false;
  if (t_grad_enabled) {
    for (const Tensor& t : inputs) track = track || (t.defined() && t.requires_grad());
  }
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) node->inputs.push_back(t.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

MatmulPrecision matmul_precision() noexcept { return t_precision; }
void set_matmul_precision(MatmulPrecision precision) noexcept { t_precision = precision; }

MatmulPrecisionScope::MatmulPrecisionScope(MatmulPrecision precision) : previous_(t_precision) {
  t_precision = precision;
}
MatmulPrecisionScope::~MatmulPrecisionScope() { t_precision = previous_; }

}  // namespace hflab::nn
