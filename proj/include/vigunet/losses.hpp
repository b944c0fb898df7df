// SPDX-License-Identifier: Apache-2.0
// Segmentation objective (0.5 * BCE + Dice on logits) and the
//         IoU / Dice overlap metrics on hard masks.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vigunet/tensor.hpp"

namespace vigunet {

inline constexpr double kDiceSmoothing = 1.0;
inline constexpr double kBceWeight = 0.5;

/// Mean binary cross entropy on logits (log-sum-exp stable).
template <typename T> Tensor<T> bce_loss(const Tensor<T> &logits, const Tensor<T> &target);

/// 1 - (2 sum(p y) + s) / (sum p + sum y + s) with p = sigmoid(logits),
/// sums taken over the whole tensor.
template <typename T> Tensor<T> dice_loss(const Tensor<T> &logits, const Tensor<T> &target);

/// 0.5 * bce_loss + dice_loss.
template <typename T> Tensor<T> mixed_loss(const Tensor<T> &logits, const Tensor<T> &target);

/// sigmoid(logit) >= 0.5, i.e. logit >= 0.
template <typename T> std::vector<std::uint8_t> threshold_logits(std::span<const T> logits);

/// |A and B| / |A or B|; 1 when both masks are empty.
double iou_metric(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target);
/// 2 |A and B| / (|A| + |B|); 1 when both masks are empty.
double dice_metric(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> target);

} // namespace vigunet
