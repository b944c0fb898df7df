// SPDX-License-Identifier: Apache-2.0
#include "vigunet/tensor.hpp"

#include <algorithm>
#include <bit>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace vigunet {

std::size_t numel(const Shape &shape) {
  std::size_t n = 1;
  for (auto d : shape)
    n *= d;
  return n;
}

std::string to_string(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
} // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T> Tensor<T>::Tensor(Shape shape, T fill) {
  for (auto d : shape)
    if (d == 0)
      throw ShapeError("tensor dims must be positive, got " + to_string(shape));
  impl_ = std::make_shared<detail::TensorImpl<T>>();
  impl_->data.assign(vigunet::numel(shape), fill);
  impl_->shape = std::move(shape);
}

template <typename T> Tensor<T>::Tensor(Shape shape, std::vector<T> values) {
  for (auto d : shape)
    if (d == 0)
      throw ShapeError("tensor dims must be positive, got " + to_string(shape));
  if (vigunet::numel(shape) != values.size())
    throw ShapeError("shape " + to_string(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  impl_ = std::make_shared<detail::TensorImpl<T>>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <typename T> T Tensor<T>::item() const {
  if (numel() != 1)
    throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

template <typename T> Tensor<T> &Tensor<T>::set_requires_grad(bool on) {
  if (!is_leaf())
    throw StateError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = on;
  return *this;
}

template <typename T> std::span<T> Tensor<T>::grad_buffer() const {
  if (impl_->grad.empty())
    impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T> void Tensor<T>::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T> Tensor<T> Tensor<T>::detach() const {
  Tensor out;
  out.impl_ = std::make_shared<detail::TensorImpl<T>>();
  out.impl_->shape = impl_->shape;
  out.impl_->data = impl_->data;
  return out;
}

template <typename T> Tensor<T> Tensor<T>::clone() const {
  Tensor out = detach();
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values,
                                 std::vector<Tensor> inputs,
                                 std::function<void(std::span<const T>)> backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!grad_enabled())
    return out;
  std::vector<Tensor> tracked;
  for (auto &in : inputs)
    if (in.requires_grad())
      tracked.push_back(std::move(in));
  if (tracked.empty())
    return out;
  auto fn = std::make_shared<detail::GradFn<T>>();
  fn->inputs = std::move(tracked);
  fn->apply = std::move(backward);
  out.impl_->requires_grad = true;
  out.impl_->grad_fn = std::move(fn);
  return out;
}

template <typename T> void Tensor<T>::backward() const {
  if (numel() != 1)
    throw ShapeError("backward() needs a single-element loss, got shape " +
                     to_string(shape()));
  if (!requires_grad())
    throw StateError("backward() on a tensor that does not require grad");

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::TensorImpl<T> *> order;
  std::unordered_set<detail::TensorImpl<T> *> seen;
  std::vector<std::pair<detail::TensorImpl<T> *, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    const auto *fn = node->grad_fn.get();
    if (fn && next < fn->inputs.size()) {
      auto *child = fn->inputs[next++].impl().get();
      if (seen.insert(child).second)
        stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (auto *node : order)
    if (node->grad_fn)
      node->grad.assign(node->data.size(), T(0));
  impl_->grad.assign(1, T(1));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto *node = *it;
    if (node->grad_fn)
      node->grad_fn->apply(node->grad);
  }
}

template class Tensor<float>;
template class Tensor<double>;

namespace {

void put_u32(std::ostream &out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char *>(b), 4);
}

bool get_u32(std::istream &in, std::uint32_t &v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char *>(b), 4))
    return false;
  v = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
      std::uint32_t(b[3]) << 24;
  return true;
}

} // namespace

void write_tensor(std::ostream &out, const Tensor<float> &t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape())
    put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : t.data())
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

Tensor<float> read_tensor(std::istream &in) {
  std::uint32_t rank = 0;
  if (!get_u32(in, rank))
    throw CheckpointError(CheckpointError::Kind::truncated, "truncated tensor header");
  if (rank == 0 || rank > 8)
    throw CheckpointError(CheckpointError::Kind::truncated,
                          "implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto &d : shape) {
    std::uint32_t v = 0;
    if (!get_u32(in, v))
      throw CheckpointError(CheckpointError::Kind::truncated, "truncated tensor dims");
    if (v == 0)
      throw CheckpointError(CheckpointError::Kind::shape_mismatch, "zero tensor dim");
    d = v;
  }
  if (numel(shape) > (std::size_t(1) << 30))
    throw CheckpointError(CheckpointError::Kind::truncated,
                          "implausible tensor size " + to_string(shape));
  std::vector<float> values(numel(shape));
  for (auto &x : values) {
    std::uint32_t v = 0;
    if (!get_u32(in, v))
      throw CheckpointError(CheckpointError::Kind::truncated, "truncated tensor data");
    x = std::bit_cast<float>(v);
  }
  return Tensor<float>(std::move(shape), std::move(values));
}

} // namespace vigunet
