// SPDX-License-Identifier: Apache-2.0
// Image/mask pairs on disk, deterministic train/val splits and a
//         synthetic ellipse dataset for self-contained runs.
//
// Layout: <root>/images/<stem>.<ext> paired with <root>/masks/<stem>.<ext>.
// Masks are 8-bit grayscale and binarized at > 127.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vigunet/rng.hpp"
#include "vigunet/tensor.hpp"

namespace vigunet {

struct SegSample {
  std::string path;    ///< image file this sample came from
  Tensor<float> image; ///< [C, H, W], values in [0, 1]
  Tensor<float> mask;  ///< [1, H, W], values in {0, 1}
};

using Dataset = std::vector<SegSample>;

struct DatasetLayout {
  std::filesystem::path root;

  std::filesystem::path images() const { return root / "images"; }
  std::filesystem::path masks() const { return root / "masks"; }
};

struct SplitSpec {
  double ratio = 0.2;
  std::uint64_t seed = 41;
};

/// Loads every pair in stem order. `target_size` > 0 resizes images
/// bilinearly and masks by nearest neighbour to target_size x target_size.
Dataset load_dataset(const DatasetLayout &layout, std::size_t target_size,
                     std::size_t channels = 3);

/// Seeded Fisher-Yates shuffle; the last round(n * ratio) samples (at least
/// one, at most n - 1) form the validation split.
std::pair<Dataset, Dataset> split_dataset(const Dataset &samples, const SplitSpec &spec);

/// Writes `n` RGB images with 1-2 filled ellipses on a textured background,
/// plus the exact ellipse-union masks (0/255), as PNG files.
DatasetLayout generate_synthetic(const std::filesystem::path &root, std::size_t n,
                                 std::size_t size, Rng &rng);

/// Half-pixel bilinear resize of a [C, H, W] tensor.
Tensor<float> resize_bilinear(const Tensor<float> &img, std::size_t out_h, std::size_t out_w);
/// Nearest-neighbour resize of a [C, H, W] tensor.
Tensor<float> resize_nearest(const Tensor<float> &img, std::size_t out_h, std::size_t out_w);

} // namespace vigunet
