// SPDX-License-Identifier: Apache-2.0
// Geometric augmentation (quarter turns, flips) and per-channel
//         normalization for [C, H, W] sample tensors.
#pragma once

#include <utility>
#include <vector>

#include "vigunet/dataset.hpp"
#include "vigunet/rng.hpp"
#include "vigunet/tensor.hpp"

namespace vigunet {

struct NormStats {
  std::vector<float> mean;
  std::vector<float> std;
};

/// Channel mean/std over every pixel of every image in `samples`.
NormStats compute_norm_stats(const Dataset &samples);
/// (x - mean[c]) / std[c] on a [C, H, W] image.
Tensor<float> normalize_image(const Tensor<float> &img, const NormStats &stats);

/// Clockwise quarter turn of a square [C, H, W] tensor.
Tensor<float> rot90_cw(const Tensor<float> &t);
/// Mirror left/right.
Tensor<float> hflip(const Tensor<float> &t);
/// Mirror top/bottom.
Tensor<float> vflip(const Tensor<float> &t);

struct AugmentOptions {
  bool rotate = true;
  bool flip = true;
};

/// Random number of clockwise turns (0-3) and independent horizontal and
/// vertical flips, applied identically to image and mask. When `stats` is
/// given the image is normalized afterwards; the mask never is.
std::pair<Tensor<float>, Tensor<float>> augment_sample(const Tensor<float> &img,
                                                       const Tensor<float> &mask, Rng &rng,
                                                       const AugmentOptions &opt = {},
                                                       const NormStats *stats = nullptr);

} // namespace vigunet
