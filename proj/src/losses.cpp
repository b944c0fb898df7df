// SPDX-License-Identifier: Apache-2.0
#include "vigunet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vigunet/ops.hpp"

namespace vigunet {

namespace {

template <typename T> void check_pair(const Tensor<T> &logits, const Tensor<T> &target) {
  if (logits.shape() != target.shape())
    throw ShapeError("loss: logits " + to_string(logits.shape()) + " vs target " +
                     to_string(target.shape()));
  for (T y : target.data())
    if (y != T(0) && y != T(1))
      throw std::invalid_argument("loss: targets must be 0 or 1");
}

template <typename T> T stable_sigmoid(T x) {
  if (x >= 0)
    return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

void check_masks(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size())
    throw ShapeError("metric: mask sizes differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
}

struct Overlap {
  std::size_t inter = 0, a = 0, b = 0;
};

Overlap overlap(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target) {
  check_masks(pred, target);
  Overlap o;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] > 1 || target[i] > 1)
      throw std::invalid_argument("metric: masks must be binary");
    o.a += pred[i];
    o.b += target[i];
    o.inter += pred[i] & target[i];
  }
  return o;
}

} // namespace

template <typename T> Tensor<T> bce_loss(const Tensor<T> &logits, const Tensor<T> &target) {
  check_pair(logits, target);
  const auto x = logits.data(), y = target.data();
  const std::size_t n = x.size();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i)
    total += std::max(x[i], T(0)) - x[i] * y[i] + std::log1p(std::exp(-std::abs(x[i])));
  return Tensor<T>::make_result({1}, {total / T(n)}, {logits},
                                [logits, target, n](std::span<const T> g) {
                                  auto dx = logits.grad_buffer();
                                  const auto x = logits.data(), y = target.data();
                                  for (std::size_t i = 0; i < n; ++i)
                                    dx[i] += g[0] * (stable_sigmoid(x[i]) - y[i]) / T(n);
                                });
}

template <typename T> Tensor<T> dice_loss(const Tensor<T> &logits, const Tensor<T> &target) {
  check_pair(logits, target);
  const auto x = logits.data(), y = target.data();
  std::vector<T> p(x.size());
  T inter = 0, sum_p = 0, sum_y = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    p[i] = stable_sigmoid(x[i]);
    inter += p[i] * y[i];
    sum_p += p[i];
    sum_y += y[i];
  }
  const T s = T(kDiceSmoothing);
  const T num = T(2) * inter + s, den = sum_p + sum_y + s;
  return Tensor<T>::make_result(
    {1}, {T(1) - num / den}, {logits},
    [logits, target, p = std::move(p), num, den](std::span<const T> g) {
      auto dx = logits.grad_buffer();
      const auto y = target.data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const T dl_dp = -(T(2) * y[i] * den - num) / (den * den);
        dx[i] += g[0] * dl_dp * p[i] * (T(1) - p[i]);
      }
    });
}

template <typename T> Tensor<T> mixed_loss(const Tensor<T> &logits, const Tensor<T> &target) {
  return add(scale(bce_loss(logits, target), T(kBceWeight)), dice_loss(logits, target));
}

template <typename T> std::vector<std::uint8_t> threshold_logits(std::span<const T> logits) {
  std::vector<std::uint8_t> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    out[i] = logits[i] >= T(0) ? 1 : 0;
  return out;
}

double iou_metric(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target) {
  const Overlap o = overlap(pred, target);
  const std::size_t uni = o.a + o.b - o.inter;
  return uni == 0 ? 1.0 : double(o.inter) / double(uni);
}

double dice_metric(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target) {
  const Overlap o = overlap(pred, target);
  return o.a + o.b == 0 ? 1.0 : 2.0 * double(o.inter) / double(o.a + o.b);
}

template Tensor<float> bce_loss(const Tensor<float> &, const Tensor<float> &);
template Tensor<double> bce_loss(const Tensor<double> &, const Tensor<double> &);
template Tensor<float> dice_loss(const Tensor<float> &, const Tensor<float> &);
template Tensor<double> dice_loss(const Tensor<double> &, const Tensor<double> &);
template Tensor<float> mixed_loss(const Tensor<float> &, const Tensor<float> &);
template Tensor<double> mixed_loss(const Tensor<double> &, const Tensor<double> &);
template std::vector<std::uint8_t> threshold_logits(std::span<const float>);
template std::vector<std::uint8_t> threshold_logits(std::span<const double>);

} // namespace vigunet
