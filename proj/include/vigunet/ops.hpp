// SPDX-License-Identifier: Apache-2.0
// Differentiable primitives: convolution, batch norm, GELU,
//         bilinear upsampling, droppath and a handful of elementwise ops.
//
// Feature maps are [B, C, H, W], row-major. All functions are templated on
// the scalar type and instantiated for float and double.
#pragma once

#include <cstddef>
#include <optional>

#include "vigunet/rng.hpp"
#include "vigunet/tensor.hpp"

namespace vigunet {

enum class Mode { train, eval };

template <typename T> struct ConvParams {
  Tensor<T> weight; ///< [out_ch, in_ch, kh, kw]
  Tensor<T> bias;   ///< [out_ch]
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t kernel_h() const { return weight.dim(2); }
  std::size_t kernel_w() const { return weight.dim(3); }

  /// Kaiming-uniform (fan-in) weights, zero bias. Kernel sizes must be odd.
  static ConvParams kaiming(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                            std::size_t stride, std::size_t padding, Rng &rng);
};

template <typename T> struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  /// Running statistics; an undefined tensor means "never initialized".
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  /// gamma 1, beta 0, running mean 0, running var 1.
  static BatchNormState create(std::size_t channels);
  std::size_t channels() const { return gamma.numel(); }
  bool initialized() const { return running_mean.defined() && running_var.defined(); }
};

/// Output size of a convolution along one axis; throws ShapeError when it
/// would be zero.
std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t padding);

template <typename T> Tensor<T> conv2d(const Tensor<T> &input, const ConvParams<T> &p);

/// Train mode normalizes with biased batch statistics and folds the unbiased
/// variance into the running stats; eval mode uses the running stats.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T> &input, BatchNormState<T> &state, Mode mode);

/// Exact GELU: x * Phi(x).
template <typename T> Tensor<T> gelu(const Tensor<T> &input);

/// Half-pixel-center bilinear upsampling by an integer factor (edge clamped).
template <typename T> Tensor<T> bilinear_upsample(const Tensor<T> &input, std::size_t scale);

/// Stochastic depth: one keep/drop draw per batch element, kept samples are
/// scaled by 1/(1-rate). Identity in eval mode or at rate 0; rate 1 zeroes.
template <typename T>
Tensor<T> droppath(const Tensor<T> &input, double rate, Mode mode, Rng &rng);

/// Non-overlapping r x r average pooling; H and W must be divisible by r.
template <typename T> Tensor<T> avg_pool2d(const Tensor<T> &input, std::size_t r);

/// a + b. `b` may also have a leading dim of 1 and is then broadcast over
/// the batch axis of `a`.
template <typename T> Tensor<T> add(const Tensor<T> &a, const Tensor<T> &b);
template <typename T> Tensor<T> scale(const Tensor<T> &a, T factor);
template <typename T> Tensor<T> sum(const Tensor<T> &a);
template <typename T> Tensor<T> sigmoid(const Tensor<T> &a);

/// [B, C, H, W] -> [B, H*W, C] (one row per spatial node).
template <typename T> Tensor<T> to_nodes(const Tensor<T> &x);
/// [B, H*W, C] -> [B, C, H, W].
template <typename T> Tensor<T> from_nodes(const Tensor<T> &nodes, std::size_t h, std::size_t w);

} // namespace vigunet
