// SPDX-License-Identifier: Apache-2.0
// 8-bit image files: PNG and JPEG via libpng/libjpeg, binary and
//         ASCII PNM (P2/P3/P5/P6) natively. Format is detected from content.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace vigunet {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;          ///< 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels; ///< interleaved, row-major [h][w][c]

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
};

/// Reads an image and converts it to `channels` (1 or 3) if needed.
/// Throws DatasetError naming the path on failure.
Image read_image(const std::string &path, std::size_t channels);

/// Writes an 8-bit gray or RGB PNG.
void write_png(const std::string &path, const Image &img);

} // namespace vigunet
