// SPDX-License-Identifier: Apache-2.0
// Dense row-major tensor with a reverse-mode autograd slot.
//
// A Tensor is a shared handle: copies alias the same storage and the same
// gradient buffer, which is what lets recorded operations write gradients
// back into parameters. Use clone() for an independent copy and detach()
// to cut a tensor out of the recorded graph.
//
// Operations record a backward closure only when gradient mode is enabled
// and at least one input requires a gradient, so eval-mode inference under
// NoGradGuard allocates nothing beyond the outputs.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vigunet/errors.hpp"

namespace vigunet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape &shape);
std::string to_string(const Shape &shape);

template <typename T> class Tensor;

namespace detail {

template <typename T> struct GradFn {
  /// Inputs that receive gradient; used for the topological walk.
  std::vector<Tensor<T>> inputs;
  std::function<void(std::span<const T>)> apply;
};

template <typename T> struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::shared_ptr<GradFn<T>> grad_fn;
};

} // namespace detail

/// Whether new operations record backward closures (thread-local).
bool grad_enabled();

class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

template <typename T> class Tensor {
public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape &shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T &operator[](std::size_t i) { return impl_->data[i]; }
  const T &operator[](std::size_t i) const { return impl_->data[i]; }
  T item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor &set_requires_grad(bool on);
  bool is_leaf() const { return impl_->grad_fn == nullptr; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; empty span until a backward pass reaches this tensor.
  std::span<T> grad() { return impl_->grad; }
  std::span<const T> grad() const { return impl_->grad; }
  /// Gradient buffer, allocated zero-filled on first use.
  std::span<T> grad_buffer() const;
  void zero_grad();

  /// Same values, no graph history, no gradient requirement.
  Tensor detach() const;
  /// Deep copy of values and requires_grad flag; no history.
  Tensor clone() const;

  /// Reverse-mode pass from a single-element tensor. Leaf gradients
  /// accumulate across calls; intermediate gradients are recomputed.
  void backward() const;

  bool same_storage(const Tensor &other) const { return impl_ == other.impl_; }

  /// Creates an operation result that records `backward` when gradients flow.
  static Tensor make_result(Shape shape, std::vector<T> values,
                            std::vector<Tensor> inputs,
                            std::function<void(std::span<const T>)> backward);

  const std::shared_ptr<detail::TensorImpl<T>> &impl() const { return impl_; }

private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Serialized tensor: rank:u32, dims:u32..., values:f32... (all little-endian).
void write_tensor(std::ostream &out, const Tensor<float> &t);
Tensor<float> read_tensor(std::istream &in);

/// Converts between precisions (no history).
template <typename To, typename From> Tensor<To> cast(const Tensor<From> &t) {
  std::vector<To> values(t.data().begin(), t.data().end());
  return Tensor<To>(t.shape(), std::move(values));
}

} // namespace vigunet
