#pragma once

// Dense row-major double tensors with reverse-mode differentiation.
//
// A Tensor is a shared handle; copies alias the same storage. Operations that
// run while a Tape is active (see TapeScope) and touch a tensor with
// requires_grad record a node, and Tape::backward replays those nodes in
// reverse order.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mgcr::ag {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  bool leaf = true;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }
  // 2-D accessors; throw ShapeError on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool is_leaf() const { return impl_->leaf; }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Gradient view; zeros are materialized on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  // New leaf with copied data and no gradient history.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  static Tensor adopt(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

enum class OpKind {
  matmul, add, add_row, sub, mul, scale, add_scalar, relu, sigmoid, abs,
  softmax, layer_norm, batch_norm, conv1d, sum, mean, sum_axis, mean_axis,
  concat, transpose, reshape, slice, embedding, space_to_depth, upsample,
  bce, mse, custom
};

struct TapeNode {
  OpKind kind;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  std::function<void(const TapeNode&)> backward;
};

class Tape {
 public:
  void record(TapeNode node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<TapeNode>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor with
  // requires_grad. Intermediate gradients are reset first, so leaf gradients
  // accumulate across calls while intermediates do not.
  void backward(const Tensor& loss);

 private:
  std::vector<TapeNode> nodes_;
};

// Active tape for the current thread, or nullptr (no recording).
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Runs backward on the thread's active tape.
void backward(const Tensor& loss);

// Gradient accumulation helper used by op implementations.
std::vector<double>& grad_buffer(TensorImpl& impl);

}  // namespace mgcr::ag
