// SPDX-License-Identifier: Apache-2.0
// Epoch loop (mixed loss, Adam, cosine learning rate) and evaluation
//         with IoU/Dice on thresholded predictions.
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "vigunet/augment.hpp"
#include "vigunet/dataset.hpp"
#include "vigunet/model.hpp"
#include "vigunet/optim.hpp"

namespace vigunet {

struct TrainOptions {
  std::size_t batch_size = 4;
  bool augment = true;
  AugmentOptions augment_options;
  std::optional<NormStats> norm;
};

struct EpochReport {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  std::vector<double> batch_losses;
};

struct EvalReport {
  double mean_iou = 0.0;
  double mean_dice = 0.0;
  std::vector<double> iou;  ///< per sample, dataset order
  std::vector<double> dice;
  double mean_loss = 0.0; ///< mean of per-sample mixed loss
  double mean_bce = 0.0;
  double mean_dice_loss = 0.0;
};

/// Stacks [C, H, W] tensors into [B, C, H, W].
Tensor<float> stack_batch(const std::vector<Tensor<float>> &items);

/// One pass over a shuffled copy of `data`. The learning rate for the whole
/// epoch is cosine_lr(schedule, epoch). Throws std::invalid_argument on an
/// empty dataset.
EpochReport train_epoch(VigUnet<float> &m, const Dataset &data, AdamState<float> &adam,
                        const LrSchedule &schedule, std::size_t epoch,
                        const TrainOptions &opt, Rng &rng);

/// Eval-mode forwards without gradient recording; predictions are
/// sigmoid(logit) >= 0.5.
EvalReport evaluate(VigUnet<float> &m, const Dataset &data, const TrainOptions &opt);

} // namespace vigunet
