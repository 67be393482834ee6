#include "ssacgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace ssacgan {

namespace {
thread_local bool g_grad_mode = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

float* detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad.data();
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive: " + shape_to_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_to_string(shape));
  }
  check_finite(data, "tensor data");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from_data({1}, {value}, requires_grad); }

detail::Node& Tensor::node() const {
  if (!node_) throw std::logic_error("use of undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range for shape " + shape_to_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return node().data.size(); }

std::span<const float> Tensor::data() const { return node().data; }

std::span<float> Tensor::mutable_data() {
  if (!node().leaf) throw std::logic_error("only leaf tensors may be modified in place");
  return node().data;
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  return node().data[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node().leaf) throw std::logic_error("requires_grad can only be toggled on leaves");
  node().requires_grad = flag;
}

bool Tensor::is_leaf() const { return node().leaf; }

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const float> Tensor::grad() const {
  auto& n = node();
  n.grad_buffer();
  return n.grad;
}

std::span<float> Tensor::mutable_grad() {
  auto& n = node();
  n.grad_buffer();
  return n.grad;
}

void Tensor::zero_grad() {
  auto& g = node().grad;
  std::fill(g.begin(), g.end(), 0.0f);
}

Tensor Tensor::detach() const { return from_data(shape(), node().data, false); }

Tensor Tensor::clone(bool requires_grad) const { return from_data(shape(), node().data, requires_grad); }

Tensor Tensor::make_result(Shape shape, std::vector<float> data, std::vector<Tensor> parents,
                           detail::BackwardFn backward) {
  Tensor out = from_data(std::move(shape), std::move(data), false);
  if (!g_grad_mode) return out;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (!needs) return out;
  auto& n = out.node();
  n.requires_grad = true;
  n.leaf = false;
  n.parents.reserve(parents.size());
  for (auto& p : parents) n.parents.push_back(p.node_);
  n.backward = std::move(backward);
  return out;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversed, it is a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&loss.node(), 0);
  visited.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (!node->leaf) node->grad.assign(node->data.size(), 0.0f);
  }
  loss.node().grad_buffer()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->leaf && node->backward) node->backward(*node);
  }
}

bool grad_mode_enabled() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

void check_finite(std::span<const float> values, const std::string& what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericalError("non-finite value in " + what + " at index " + std::to_string(i));
    }
  }
}

}  // namespace ssacgan
