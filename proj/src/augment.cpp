// SPDX-License-Identifier: Apache-2.0
#include "vigunet/augment.hpp"

#include <cmath>
#include <stdexcept>

namespace vigunet {

namespace {

void check_chw(const Tensor<float> &t, const char *what) {
  if (!t.defined() || t.rank() != 3)
    throw ShapeError(std::string(what) + ": expected [C, H, W]");
}

template <typename Map> Tensor<float> remap(const Tensor<float> &t, Map src_index) {
  const std::size_t C = t.dim(0), H = t.dim(1), W = t.dim(2);
  Tensor<float> out({C, H, W});
  const auto in = t.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        out[(c * H + y) * W + x] = in[c * H * W + src_index(y, x, H, W)];
  return out;
}

} // namespace

NormStats compute_norm_stats(const Dataset &samples) {
  if (samples.empty())
    throw std::invalid_argument("normalization statistics need at least one sample");
  const std::size_t C = samples.front().image.dim(0);
  std::vector<double> sum(C, 0.0), sq(C, 0.0);
  double count = 0.0;
  for (const auto &s : samples) {
    check_chw(s.image, "norm stats");
    if (s.image.dim(0) != C)
      throw ShapeError("norm stats: inconsistent channel count in " + s.path);
    const std::size_t hw = s.image.dim(1) * s.image.dim(2);
    const auto d = s.image.data();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = d[c * hw + i];
        sum[c] += v;
        sq[c] += v * v;
      }
    count += double(hw);
  }
  NormStats st;
  for (std::size_t c = 0; c < C; ++c) {
    const double mean = sum[c] / count;
    const double var = std::max(sq[c] / count - mean * mean, 0.0);
    st.mean.push_back(float(mean));
    st.std.push_back(float(std::max(std::sqrt(var), 1e-6)));
  }
  return st;
}

Tensor<float> normalize_image(const Tensor<float> &img, const NormStats &stats) {
  check_chw(img, "normalize");
  const std::size_t C = img.dim(0), hw = img.dim(1) * img.dim(2);
  if (stats.mean.size() != C || stats.std.size() != C)
    throw ShapeError("normalize: statistics have " + std::to_string(stats.mean.size()) +
                     " channels, image has " + std::to_string(C));
  Tensor<float> out(img.shape());
  const auto in = img.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < hw; ++i)
      out[c * hw + i] = (in[c * hw + i] - stats.mean[c]) / stats.std[c];
  return out;
}

Tensor<float> rot90_cw(const Tensor<float> &t) {
  check_chw(t, "rot90");
  if (t.dim(1) != t.dim(2))
    throw std::invalid_argument("rot90: input must be square, got " + to_string(t.shape()));
  // out(y, x) = in(H - 1 - x, y)
  return remap(t, [](std::size_t y, std::size_t x, std::size_t H, std::size_t W) {
    return (H - 1 - x) * W + y;
  });
}

Tensor<float> hflip(const Tensor<float> &t) {
  check_chw(t, "hflip");
  return remap(t, [](std::size_t y, std::size_t x, std::size_t, std::size_t W) {
    return y * W + (W - 1 - x);
  });
}

Tensor<float> vflip(const Tensor<float> &t) {
  check_chw(t, "vflip");
  return remap(t, [](std::size_t y, std::size_t x, std::size_t H, std::size_t W) {
    return (H - 1 - y) * W + x;
  });
}

std::pair<Tensor<float>, Tensor<float>> augment_sample(const Tensor<float> &img,
                                                       const Tensor<float> &mask, Rng &rng,
                                                       const AugmentOptions &opt,
                                                       const NormStats *stats) {
  check_chw(img, "augment image");
  check_chw(mask, "augment mask");
  if (img.dim(1) != mask.dim(1) || img.dim(2) != mask.dim(2))
    throw ShapeError("augment: image " + to_string(img.shape()) + " and mask " +
                     to_string(mask.shape()) + " differ in size");
  if (opt.rotate && img.dim(1) != img.dim(2))
    throw std::invalid_argument("augment: rotation needs a square input");

  Tensor<float> a = img, b = mask;
  if (opt.rotate) {
    const auto turns = rng.below(4);
    for (std::uint64_t i = 0; i < turns; ++i) {
      a = rot90_cw(a);
      b = rot90_cw(b);
    }
  }
  if (opt.flip) {
    if (rng.bernoulli(0.5)) {
      a = hflip(a);
      b = hflip(b);
    }
    if (rng.bernoulli(0.5)) {
      a = vflip(a);
      b = vflip(b);
    }
  }
  if (stats)
    a = normalize_image(a, *stats);
  if (a.same_storage(img))
    a = img.clone();
  if (b.same_storage(mask))
    b = mask.clone();
  return {a, b};
}

} // namespace vigunet
