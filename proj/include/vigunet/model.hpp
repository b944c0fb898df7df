// SPDX-License-Identifier: Apache-2.0
// The full U-shaped network: stem, four encoder stages, a two-Grapher
//         bottleneck, four decoder stages with additive skips, final layer.
//
// Module order:
//   stem
//   enc[i] = Grapher + FFN at D_i, then downsample D_i -> D_{i+1}   (i = 0..3)
//   bottleneck = Grapher x 2 at D_4 (no FFN)
//   dec[j] = upsample D_{4-j} -> D_{3-j}, then Grapher + FFN         (j = 0..3)
//            output += encoder FFN output at the same resolution
//   final = bilinear x2 + 1x1 conv to num_classes logits
#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "vigunet/blocks.hpp"

namespace vigunet {

struct StageConfig {
  std::size_t dim = 32;
  std::size_t ffn_layers = 2;
  std::size_t k = 9;
  std::size_t heads = 4;
  std::size_t ffn_ratio = 4;
  std::size_t reduction = 1;
  double droppath_rate = 0.0;
};

struct ModelConfig {
  std::size_t in_channels = 3;
  std::size_t num_classes = 1;
  std::size_t height = 512;
  std::size_t width = 512;
  /// Five stages: four encoder/decoder resolutions plus the bottleneck.
  std::vector<StageConfig> stages;
  std::size_t bottleneck_graphers = 2;
  /// Linearly ramp droppath from 0 to the stage rate across the block sequence.
  bool droppath_ramp = false;
  /// Add the encoder skip right after upsampling instead of after the
  /// decoder FFN.
  bool skip_before_stage = false;

  static constexpr std::size_t kStages = 5;

  /// Settings of the published network: dims 32..512, E=2, K=9, 512x512.
  static ModelConfig full();
  /// Desk-scale profile: dims 8..128 on 64x64 inputs.
  static ModelConfig desk();
  /// Builds a config from per-stage dims with shared settings.
  static ModelConfig from_dims(const std::vector<std::size_t> &dims, std::size_t size,
                               std::size_t heads = 4, std::size_t k = 9);

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;
  std::vector<std::size_t> dims() const;

  friend bool operator==(const ModelConfig &, const ModelConfig &);
};

bool operator==(const StageConfig &, const StageConfig &);

template <typename T> struct EncoderStage {
  GrapherParams<T> grapher;
  FfnParams<T> ffn;
  ResampleParams<T> down;
};

template <typename T> struct DecoderStage {
  ResampleParams<T> up;
  GrapherParams<T> grapher;
  FfnParams<T> ffn;
};

template <typename T> struct VigUnet {
  ModelConfig config;
  StemParams<T> stem;
  std::array<EncoderStage<T>, 4> encoder;
  std::vector<GrapherParams<T>> bottleneck;
  std::array<DecoderStage<T>, 4> decoder;
  ConvParams<T> head; ///< final 1x1 conv, applied after bilinear x2

  /// Every tensor in checkpoint order, with dotted names.
  void visit(const TensorVisitor<T> &fn);
  /// Learnable tensors only.
  std::vector<Tensor<T>> parameters();
  void zero_grad();
};

/// Records the output shape of each module during a forward pass.
struct ForwardTrace {
  struct Entry {
    std::string module;
    Shape shape;
  };
  std::vector<Entry> entries;
  std::size_t skip_additions = 0;
};

template <typename T> VigUnet<T> build_vig_unet(const ModelConfig &cfg, Rng &rng);

/// Returns logits [B, num_classes, H, W].
template <typename T>
Tensor<T> model_forward(VigUnet<T> &m, const Tensor<T> &img, Mode mode, Rng &rng,
                        ForwardTrace *trace = nullptr);

/// Element count of all learnable tensors (batch-norm running stats excluded).
template <typename T> std::size_t count_parameters(VigUnet<T> &m);

/// One row per module: name, output size, channels, parameters.
struct ModuleSummary {
  std::string module;
  std::size_t height = 0, width = 0, channels = 0;
  std::size_t parameters = 0;
};

/// Per-module rows in network order; sizes come from the configuration, so
/// no forward pass is needed.
template <typename T> std::vector<ModuleSummary> summarize(VigUnet<T> &m);

} // namespace vigunet
