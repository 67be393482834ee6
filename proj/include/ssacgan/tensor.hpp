#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssacgan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Raised when a tensor operation receives operands of incompatible shape.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on NaN/Inf in inputs, gradients, or losses.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node&)>;

struct Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  float* grad_buffer();  // allocates zeros on first use
};

}  // namespace detail

/// Handle to a node of the reverse-mode differentiation graph.
///
/// Copies share the node. Data of non-leaf tensors is never modified after
/// construction; leaves (parameters, inputs) may be updated in place by an
/// optimizer between graph constructions.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const float> data() const;
  std::span<float> mutable_data();  // leaves only
  float item() const;
  float at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);  // leaves only
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const float> grad() const;  // zeros view if never accumulated
  std::span<float> mutable_grad();
  void zero_grad();

  /// New leaf holding a copy of the values, cut from the graph.
  Tensor detach() const;
  Tensor clone(bool requires_grad = false) const;

  /// True when both handles refer to the same graph node.
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  detail::Node& node() const;
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  /// Builds an op result; records parents and backward only when grad mode
  /// is on and some parent requires grad.
  static Tensor make_result(Shape shape, std::vector<float> data,
                            std::vector<Tensor> parents,
                            detail::BackwardFn backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Populates gradients of every requires-grad leaf reachable from `loss`.
/// Leaf gradients accumulate across calls; intermediate gradients are reset.
void backward(const Tensor& loss);

bool grad_mode_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

void check_finite(std::span<const float> values, const std::string& what);
inline void check_finite(const Tensor& t, const std::string& what) {
  check_finite(t.data(), what);
}

}  // namespace ssacgan
