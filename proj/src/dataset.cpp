// SPDX-License-Identifier: Apache-2.0
#include "vigunet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>

#include "vigunet/image_io.hpp"

namespace vigunet {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kImageExtensions = {".png", ".jpg", ".jpeg", ".ppm", ".pgm", ".pnm"};

std::map<std::string, fs::path> list_images(const fs::path &dir) {
  if (!fs::is_directory(dir))
    throw DatasetError("missing dataset directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto &entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file())
      continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (!kImageExtensions.count(ext))
      continue;
    const std::string stem = entry.path().stem().string();
    if (!out.emplace(stem, entry.path()).second)
      throw DatasetError("duplicate file stem '" + stem + "' in " + dir.string());
  }
  return out;
}

Tensor<float> to_tensor(const Image &img) {
  std::vector<float> v(img.channels * img.height * img.width);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        v[(c * img.height + y) * img.width + x] = float(img.at(y, x, c)) / 255.0f;
  return Tensor<float>({img.channels, img.height, img.width}, std::move(v));
}

double ellipse_value(double px, double py, double cx, double cy, double a, double b, double angle) {
  const double dx = px - cx, dy = py - cy;
  const double u = (dx * std::cos(angle) + dy * std::sin(angle)) / a;
  const double v = (-dx * std::sin(angle) + dy * std::cos(angle)) / b;
  return u * u + v * v;
}

} // namespace

Tensor<float> resize_bilinear(const Tensor<float> &img, std::size_t out_h, std::size_t out_w) {
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  if (H == out_h && W == out_w)
    return img.clone();
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<std::pair<std::size_t, double>> t(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (double(o) + 0.5) * double(in) / double(out) - 0.5;
      src = std::max(src, 0.0);
      const std::size_t i0 = std::min(std::size_t(src), in - 1);
      t[o] = {i0, src - double(i0)};
    }
    return t;
  };
  const auto ty = taps(H, out_h), tx = taps(W, out_w);
  std::vector<float> out(C * out_h * out_w);
  const auto src = img.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto [y0, fy] = ty[y];
      const std::size_t y1 = std::min(y0 + 1, H - 1);
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto [x0, fx] = tx[x];
        const std::size_t x1 = std::min(x0 + 1, W - 1);
        const double v = (1 - fy) * ((1 - fx) * src[(c * H + y0) * W + x0] + fx * src[(c * H + y0) * W + x1]) +
                         fy * ((1 - fx) * src[(c * H + y1) * W + x0] + fx * src[(c * H + y1) * W + x1]);
        out[(c * out_h + y) * out_w + x] = float(v);
      }
    }
  return Tensor<float>({C, out_h, out_w}, std::move(out));
}

Tensor<float> resize_nearest(const Tensor<float> &img, std::size_t out_h, std::size_t out_w) {
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  if (H == out_h && W == out_w)
    return img.clone();
  std::vector<float> out(C * out_h * out_w);
  const auto src = img.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < out_h; ++y) {
      const std::size_t sy = std::min(std::size_t((double(y) + 0.5) * double(H) / double(out_h)), H - 1);
      for (std::size_t x = 0; x < out_w; ++x) {
        const std::size_t sx = std::min(std::size_t((double(x) + 0.5) * double(W) / double(out_w)), W - 1);
        out[(c * out_h + y) * out_w + x] = src[(c * H + sy) * W + sx];
      }
    }
  return Tensor<float>({C, out_h, out_w}, std::move(out));
}

Dataset load_dataset(const DatasetLayout &layout, std::size_t target_size, std::size_t channels) {
  const auto images = list_images(layout.images());
  const auto masks = list_images(layout.masks());
  for (const auto &[stem, path] : images)
    if (!masks.count(stem))
      throw DatasetError("image '" + stem + "' has no mask partner (" + path.string() + ")");
  for (const auto &[stem, path] : masks)
    if (!images.count(stem))
      throw DatasetError("mask '" + stem + "' has no image partner (" + path.string() + ")");

  Dataset out;
  for (const auto &[stem, path] : images) {
    const Image img = read_image(path.string(), channels);
    const Image msk = read_image(masks.at(stem).string(), 1);
    if (target_size == 0 && (img.width != msk.width || img.height != msk.height))
      throw DatasetError("size mismatch between image and mask for '" + stem + "'");
    SegSample s;
    s.path = path.string();
    s.image = to_tensor(img);
    Tensor<float> mask({1, msk.height, msk.width});
    for (std::size_t i = 0; i < msk.pixels.size(); ++i)
      mask[i] = msk.pixels[i] > 127 ? 1.0f : 0.0f;
    if (target_size > 0) {
      s.image = resize_bilinear(s.image, target_size, target_size);
      mask = resize_nearest(mask, target_size, target_size);
    }
    s.mask = mask;
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset &samples, const SplitSpec &spec) {
  if (!(spec.ratio > 0.0 && spec.ratio < 1.0))
    throw std::invalid_argument("split ratio must lie in (0, 1)");
  const std::size_t n = samples.size();
  if (n < 2)
    throw std::invalid_argument("need at least 2 samples to split, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i)
    order[i] = i;
  Rng rng(spec.seed);
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.below(i + 1)]);
  const auto val = std::clamp<std::size_t>(std::size_t(std::llround(double(n) * spec.ratio)), 1, n - 1);
  std::pair<Dataset, Dataset> out;
  for (std::size_t i = 0; i < n; ++i)
    (i < n - val ? out.first : out.second).push_back(samples[order[i]]);
  return out;
}

DatasetLayout generate_synthetic(const fs::path &root, std::size_t n, std::size_t size, Rng &rng) {
  if (size == 0 || size % 32)
    throw std::invalid_argument("synthetic image size must be a positive multiple of 32");
  DatasetLayout layout{root};
  std::error_code ec;
  fs::create_directories(layout.images(), ec);
  fs::create_directories(layout.masks(), ec);
  if (ec)
    throw DatasetError("cannot create " + root.string() + ": " + ec.message());

  const std::size_t digits = std::max<std::size_t>(3, std::to_string(n).size());
  for (std::size_t s = 0; s < n; ++s) {
    Image img{size, size, 3, std::vector<std::uint8_t>(size * size * 3)};
    Image mask{size, size, 1, std::vector<std::uint8_t>(size * size, 0)};

    // Skin-like background with a gentle gradient and per-pixel texture.
    double base[3] = {rng.uniform(0.65, 0.85), rng.uniform(0.5, 0.7), rng.uniform(0.4, 0.6)};
    const double gx = rng.uniform(-0.1, 0.1), gy = rng.uniform(-0.1, 0.1);

    struct Ellipse {
      double cx, cy, a, b, angle;
    };
    std::vector<Ellipse> ellipses(1 + rng.below(2));
    const double sz = double(size);
    for (auto &e : ellipses) {
      e.a = rng.uniform(sz / 8, sz / 3.5);
      e.b = rng.uniform(sz / 8, sz / 3.5);
      e.cx = rng.uniform(sz * 0.25, sz * 0.75);
      e.cy = rng.uniform(sz * 0.25, sz * 0.75);
      e.angle = rng.uniform(0.0, std::numbers::pi);
    }
    double lesion[3] = {rng.uniform(0.25, 0.45), rng.uniform(0.15, 0.3), rng.uniform(0.1, 0.25)};

    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double px = double(x) + 0.5, py = double(y) + 0.5;
        bool inside = false;
        for (const auto &e : ellipses)
          inside = inside || ellipse_value(px, py, e.cx, e.cy, e.a, e.b, e.angle) <= 1.0;
        mask.pixels[y * size + x] = inside ? 255 : 0;
        for (std::size_t c = 0; c < 3; ++c) {
          const double shade = inside ? lesion[c] : base[c] + gx * (px / sz - 0.5) + gy * (py / sz - 0.5);
          const double v = shade + rng.uniform(-0.06, 0.06);
          img.pixels[(y * size + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
        }
      }

    std::string name = std::to_string(s);
    name = "sample_" + std::string(digits - name.size(), '0') + name + ".png";
    write_png((layout.images() / name).string(), img);
    write_png((layout.masks() / name).string(), mask);
  }
  return layout;
}

} // namespace vigunet
