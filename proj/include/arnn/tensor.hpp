#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace arnn {

using Shape = std::vector<std::size_t>;

/// Raised when operand extents are incompatible with an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a caller violates an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty until the first gradient is accumulated.
  std::vector<double> grad;
  bool requires_grad = false;
  // Creation order; backward replays nodes in decreasing order (the tape).
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  std::vector<double>& ensure_grad();
  bool is_leaf() const { return !backward_fn; }
};

}  // namespace detail

// Dense row-major double tensor with an optional node in the differentiation
// graph. Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Writable view, only for tensors not produced by a recorded operation.
  std::span<double> mutable_values();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  // Same values, detached from the graph, sharing nothing.
  Tensor clone() const;
  Tensor detach() const { return clone(); }

  // Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  // calls; intermediate gradients are reset at the start of each sweep.
  void backward() const;

  const char* op_name() const;

  // For operation authors: records a node when any parent requires grad
  // and recording is enabled, otherwise returns a plain leaf.
  static Tensor from_op(Shape shape, std::vector<double> values, const char* op,
                        std::vector<Tensor> parents,
                        std::function<void(detail::TensorImpl&)> backward_fn);

  detail::TensorImpl& impl() const;
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace arnn
