// SPDX-License-Identifier: Apache-2.0
#include "vigunet/model.hpp"

#include <map>

namespace vigunet {

bool operator==(const StageConfig &a, const StageConfig &b) {
  return a.dim == b.dim && a.ffn_layers == b.ffn_layers && a.k == b.k && a.heads == b.heads &&
         a.ffn_ratio == b.ffn_ratio && a.reduction == b.reduction &&
         a.droppath_rate == b.droppath_rate;
}

bool operator==(const ModelConfig &a, const ModelConfig &b) {
  return a.in_channels == b.in_channels && a.num_classes == b.num_classes &&
         a.height == b.height && a.width == b.width && a.stages == b.stages &&
         a.bottleneck_graphers == b.bottleneck_graphers && a.droppath_ramp == b.droppath_ramp &&
         a.skip_before_stage == b.skip_before_stage;
}

ModelConfig ModelConfig::from_dims(const std::vector<std::size_t> &dims, std::size_t size,
                                   std::size_t heads, std::size_t k) {
  ModelConfig cfg;
  cfg.height = cfg.width = size;
  for (auto d : dims) {
    StageConfig s;
    s.dim = d;
    s.heads = heads;
    s.k = k;
    cfg.stages.push_back(s);
  }
  return cfg;
}

ModelConfig ModelConfig::full() {
  ModelConfig cfg = from_dims({32, 64, 128, 256, 512}, 512);
  // Full pairwise search on the 256x256 and 128x128 grids does not fit a
  // CPU budget; candidates are pooled there.
  cfg.stages[0].reduction = 4;
  cfg.stages[1].reduction = 2;
  return cfg;
}

ModelConfig ModelConfig::desk() { return from_dims({8, 16, 32, 64, 128}, 64); }

std::vector<std::size_t> ModelConfig::dims() const {
  std::vector<std::size_t> d;
  for (const auto &s : stages)
    d.push_back(s.dim);
  return d;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string &msg) { throw ConfigError(msg); };
  if (stages.size() != kStages)
    fail("expected " + std::to_string(kStages) + " stage configs, got " +
         std::to_string(stages.size()));
  if (in_channels == 0)
    fail("in_channels must be positive");
  if (num_classes != 1)
    fail("only binary segmentation (num_classes = 1) is supported");
  if (height == 0 || width == 0 || height % 32 || width % 32)
    fail("input size " + std::to_string(height) + "x" + std::to_string(width) +
         " must be a positive multiple of 32");
  if (bottleneck_graphers == 0)
    fail("bottleneck needs at least one Grapher");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto &s = stages[i];
    const std::string tag = "stage " + std::to_string(i) + ": ";
    if (s.dim == 0)
      fail(tag + "dim must be positive");
    if (i > 0 && s.dim != 2 * stages[i - 1].dim)
      fail(tag + "dims must double from stage to stage");
    if (s.ffn_layers != 2)
      fail(tag + "FFNs have exactly 2 layers (E = 2)");
    if (s.k < 1)
      fail(tag + "K must be at least 1");
    if (s.heads == 0 || (2 * s.dim) % s.heads)
      fail(tag + "2*dim must be divisible by heads");
    if (s.ffn_ratio == 0)
      fail(tag + "ffn_ratio must be positive");
    const std::size_t grid_h = height >> (i + 1), grid_w = width >> (i + 1);
    if (s.reduction == 0 || grid_h % s.reduction || grid_w % s.reduction)
      fail(tag + "reduction " + std::to_string(s.reduction) + " does not divide the " +
           std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
    if (!(s.droppath_rate >= 0.0 && s.droppath_rate < 1.0))
      fail(tag + "droppath rate must lie in [0, 1)");
  }
}

namespace {

constexpr std::size_t kLevels = 4;

// Droppath rate for the idx-th Grapher/FFN block of `total`.
double block_rate(const ModelConfig &cfg, double stage_rate, std::size_t idx, std::size_t total) {
  if (!cfg.droppath_ramp || total < 2)
    return stage_rate;
  return stage_rate * double(idx) / double(total - 1);
}

GrapherOptions grapher_options(const StageConfig &s, double rate) {
  return {.heads = s.heads, .k = s.k, .reduction = s.reduction, .droppath_rate = rate};
}

} // namespace

template <typename T> VigUnet<T> build_vig_unet(const ModelConfig &cfg, Rng &rng) {
  cfg.validate();
  VigUnet<T> m;
  m.config = cfg;
  const auto &st = cfg.stages;
  const std::size_t total_blocks = 4 * kLevels + cfg.bottleneck_graphers;
  std::size_t block = 0;
  auto rate = [&](const StageConfig &s) { return block_rate(cfg, s.droppath_rate, block++, total_blocks); };

  m.stem = make_stem<T>(cfg.in_channels, st[0].dim, cfg.height, cfg.width, rng);
  for (std::size_t i = 0; i < kLevels; ++i) {
    auto &e = m.encoder[i];
    e.grapher = make_grapher<T>(st[i].dim, grapher_options(st[i], rate(st[i])), rng);
    e.ffn = make_ffn<T>(st[i].dim, st[i].ffn_ratio, rate(st[i]), rng);
    e.down = make_resample<T>(st[i].dim, Direction::down, rng);
  }
  for (std::size_t b = 0; b < cfg.bottleneck_graphers; ++b)
    m.bottleneck.push_back(make_grapher<T>(st[kLevels].dim, grapher_options(st[kLevels], rate(st[kLevels])), rng));
  for (std::size_t j = 0; j < kLevels; ++j) {
    const std::size_t level = kLevels - 1 - j;
    auto &d = m.decoder[j];
    d.up = make_resample<T>(st[level + 1].dim, Direction::up, rng);
    d.grapher = make_grapher<T>(st[level].dim, grapher_options(st[level], rate(st[level])), rng);
    d.ffn = make_ffn<T>(st[level].dim, st[level].ffn_ratio, rate(st[level]), rng);
  }
  m.head = ConvParams<T>::kaiming(st[0].dim, cfg.num_classes, 1, 1, 0, rng);
  return m;
}

template <typename T> void VigUnet<T>::visit(const TensorVisitor<T> &fn) {
  stem.visit("stem", fn);
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const std::string p = "enc." + std::to_string(i);
    encoder[i].grapher.visit(p + ".grapher", fn);
    encoder[i].ffn.visit(p + ".ffn", fn);
    encoder[i].down.visit(p + ".down", fn);
  }
  for (std::size_t b = 0; b < bottleneck.size(); ++b)
    bottleneck[b].visit("bottleneck." + std::to_string(b) + ".grapher", fn);
  for (std::size_t j = 0; j < decoder.size(); ++j) {
    const std::string p = "dec." + std::to_string(j);
    decoder[j].up.visit(p + ".up", fn);
    decoder[j].grapher.visit(p + ".grapher", fn);
    decoder[j].ffn.visit(p + ".ffn", fn);
  }
  fn("final.conv.weight", head.weight, true);
  fn("final.conv.bias", head.bias, true);
}

template <typename T> std::vector<Tensor<T>> VigUnet<T>::parameters() {
  std::vector<Tensor<T>> out;
  visit([&](const std::string &, Tensor<T> &t, bool learnable) {
    if (learnable)
      out.push_back(t);
  });
  return out;
}

template <typename T> void VigUnet<T>::zero_grad() {
  for (auto &p : parameters())
    p.zero_grad();
}

template <typename T>
Tensor<T> model_forward(VigUnet<T> &m, const Tensor<T> &img, Mode mode, Rng &rng,
                        ForwardTrace *trace) {
  const auto &cfg = m.config;
  if (img.rank() != 4 || img.dim(1) != cfg.in_channels)
    throw ShapeError("model input must be [B, " + std::to_string(cfg.in_channels) +
                     ", H, W], got " + to_string(img.shape()));
  if (img.dim(2) % 32 || img.dim(3) % 32)
    throw std::invalid_argument("model input size " + std::to_string(img.dim(2)) + "x" +
                                std::to_string(img.dim(3)) + " is not divisible by 32");
  auto record = [&](const std::string &name, const Tensor<T> &t) {
    if (trace)
      trace->entries.push_back({name, t.shape()});
  };
  auto add_skip = [&](const Tensor<T> &x, const Tensor<T> &skip, std::size_t level) {
    if (x.shape() != skip.shape())
      throw ShapeError("skip connection at level " + std::to_string(level) + ": decoder " +
                       to_string(x.shape()) + " vs encoder " + to_string(skip.shape()));
    if (trace)
      ++trace->skip_additions;
    return add(x, skip);
  };

  Tensor<T> x = stem_forward(img, m.stem, mode);
  record("stem", x);

  std::array<Tensor<T>, kLevels> skips;
  for (std::size_t i = 0; i < kLevels; ++i) {
    auto &e = m.encoder[i];
    x = ffn_forward(grapher_forward(x, e.grapher, mode, rng), e.ffn, mode, rng);
    skips[i] = x;
    record("enc." + std::to_string(i) + ".grapher_ffn", x);
    x = downsample(x, e.down, mode);
    record("enc." + std::to_string(i) + ".down", x);
  }
  for (std::size_t b = 0; b < m.bottleneck.size(); ++b) {
    x = grapher_forward(x, m.bottleneck[b], mode, rng);
    record("bottleneck." + std::to_string(b) + ".grapher", x);
  }
  for (std::size_t j = 0; j < kLevels; ++j) {
    const std::size_t level = kLevels - 1 - j;
    auto &d = m.decoder[j];
    x = upsample(x, d.up, mode);
    record("dec." + std::to_string(j) + ".up", x);
    if (cfg.skip_before_stage)
      x = add_skip(x, skips[level], level);
    x = ffn_forward(grapher_forward(x, d.grapher, mode, rng), d.ffn, mode, rng);
    if (!cfg.skip_before_stage)
      x = add_skip(x, skips[level], level);
    record("dec." + std::to_string(j) + ".grapher_ffn", x);
  }
  x = conv2d(bilinear_upsample(x, 2), m.head);
  record("final", x);
  return x;
}

template <typename T> std::size_t count_parameters(VigUnet<T> &m) {
  std::size_t total = 0;
  m.visit([&](const std::string &, Tensor<T> &t, bool learnable) {
    if (learnable)
      total += t.numel();
  });
  return total;
}

template <typename T> std::vector<ModuleSummary> summarize(VigUnet<T> &m) {
  const auto &cfg = m.config;
  std::map<std::string, std::size_t> by_prefix;
  m.visit([&](const std::string &name, Tensor<T> &t, bool learnable) {
    if (!learnable)
      return;
    // Group by the first path components that identify a summary row.
    std::string key = name.substr(0, name.find('.'));
    if (key == "enc" || key == "dec" || key == "bottleneck") {
      auto second = name.find('.', key.size() + 1);
      auto third = name.find('.', second + 1);
      key = name.substr(0, third);
      if (key.ends_with(".ffn"))
        key = key.substr(0, key.size() - 4) + ".grapher";
    }
    by_prefix[key] += t.numel();
  });

  const auto &st = cfg.stages;
  std::vector<ModuleSummary> rows;
  auto row = [&](std::string name, std::string key, std::size_t level, std::size_t ch) {
    rows.push_back({std::move(name), cfg.height >> level, cfg.width >> level, ch, by_prefix[key]});
  };
  row("Stem", "stem", 1, st[0].dim);
  for (std::size_t i = 0; i < kLevels; ++i) {
    row("Grapher + FFN", "enc." + std::to_string(i) + ".grapher", i + 1, st[i].dim);
    row("Downsampling", "enc." + std::to_string(i) + ".down", i + 2, st[i + 1].dim);
  }
  for (std::size_t b = 0; b < m.bottleneck.size(); ++b)
    row("Grapher", "bottleneck." + std::to_string(b) + ".grapher", kLevels + 1, st[kLevels].dim);
  for (std::size_t j = 0; j < kLevels; ++j) {
    const std::size_t level = kLevels - 1 - j;
    row("Upsampling", "dec." + std::to_string(j) + ".up", level + 1, st[level].dim);
    row("Grapher + FFN", "dec." + std::to_string(j) + ".grapher", level + 1, st[level].dim);
  }
  row("Final Layer", "final", 0, cfg.num_classes);
  return rows;
}

#define VIGUNET_INSTANTIATE_MODEL(T)                                                           \
  template struct VigUnet<T>;                                                                  \
  template VigUnet<T> build_vig_unet<T>(const ModelConfig &, Rng &);                           \
  template Tensor<T> model_forward(VigUnet<T> &, const Tensor<T> &, Mode, Rng &,               \
                                   ForwardTrace *);                                            \
  template std::size_t count_parameters(VigUnet<T> &);                                         \
  template std::vector<ModuleSummary> summarize(VigUnet<T> &);

VIGUNET_INSTANTIATE_MODEL(float)
VIGUNET_INSTANTIATE_MODEL(double)

} // namespace vigunet
