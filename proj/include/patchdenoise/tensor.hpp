#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace patchdenoise {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something flows into this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents that require grad.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T{0});
  }
};

}  // namespace detail

/// Row-major N-dimensional array that records the operations applied to it
/// so that gradients can be propagated back with `backward`.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  void zero_grad() { node_->grad.clear(); }

  T item() const;

  /// Fresh leaf holding a copy of the data and no history.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

  /// Builds the result of an operator. History is recorded only when grad
  /// mode is enabled and at least one input requires grad.
  static Tensor from_op(Shape shape, std::vector<T> data, std::vector<Tensor> inputs,
                        std::function<void(detail::Node<T>&)> backward);

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

/// Populates `grad` on every requires-grad ancestor of a scalar loss.
/// Gradients accumulate into whatever the leaves already hold.
template <typename T>
void backward(const Tensor<T>& loss);

bool grad_enabled() noexcept;

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace patchdenoise
