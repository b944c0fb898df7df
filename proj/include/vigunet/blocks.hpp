// SPDX-License-Identifier: Apache-2.0
// Stem, Grapher, FFN and the down/up resamplers.
//
// Every projection "x W + b" is a convolution followed by batch norm
// (ConvBn). Grapher and FFN keep the channel count and add their branch
// back onto the input after droppath:
//
//   Grapher: Y = droppath(GELU(BN(fc_out(G(BN(fc_in(X))))))) + X
//            G = multi-head update (+BN) of the max-relative aggregate
//   FFN:     Z = droppath(BN(fc2(GELU(BN(fc1(Y)))))) + Y
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "vigunet/graph.hpp"
#include "vigunet/ops.hpp"

namespace vigunet {

/// Callback used to enumerate named tensors. `learnable` is false for
/// batch-norm running statistics.
template <typename T>
using TensorVisitor = std::function<void(const std::string &name, Tensor<T> &t, bool learnable)>;

template <typename T> struct ConvBn {
  ConvParams<T> conv;
  BatchNormState<T> bn;

  static ConvBn make(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                     Rng &rng) {
    return {ConvParams<T>::kaiming(in, out, kernel, stride, kernel / 2, rng),
            BatchNormState<T>::create(out)};
  }

  Tensor<T> forward(const Tensor<T> &x, Mode mode) { return batch_norm2d(conv2d(x, conv), bn, mode); }
  void visit(const std::string &prefix, const TensorVisitor<T> &fn);
};

template <typename T> struct GrapherParams {
  ConvBn<T> fc_in;
  UpdateHeads<T> heads;
  BatchNormState<T> heads_bn;
  ConvBn<T> fc_out;
  double droppath_rate = 0.0;
  std::size_t k = 9;
  std::size_t reduction = 1;

  std::size_t channels() const { return fc_in.conv.in_channels(); }
  void visit(const std::string &prefix, const TensorVisitor<T> &fn);
};

template <typename T> struct FfnParams {
  ConvBn<T> fc1;
  ConvBn<T> fc2;
  double droppath_rate = 0.0;
  std::size_t ratio = 4;

  std::size_t channels() const { return fc1.conv.in_channels(); }
  std::size_t hidden() const { return fc1.conv.out_channels(); }
  void visit(const std::string &prefix, const TensorVisitor<T> &fn);
};

template <typename T> struct StemParams {
  ConvBn<T> conv1; ///< 3x3, stride 1
  ConvBn<T> conv2; ///< 3x3, stride 2
  Tensor<T> pos_embed; ///< [1, D, H/2, W/2], learned

  void visit(const std::string &prefix, const TensorVisitor<T> &fn);
};

enum class Direction { down, up };

template <typename T> struct ResampleParams {
  Direction direction = Direction::down;
  ConvBn<T> conv;

  void visit(const std::string &prefix, const TensorVisitor<T> &fn);
};

struct GrapherOptions {
  std::size_t heads = 4;
  std::size_t k = 9;
  std::size_t reduction = 1;
  double droppath_rate = 0.0;
};

/// Records the KNN graphs built by grapher_forward on this thread and can
/// replay them, so a forward pass can be repeated on a fixed topology (the
/// graph itself is not differentiable).
class GraphTape {
public:
  GraphTape();
  ~GraphTape();
  GraphTape(const GraphTape &) = delete;
  GraphTape &operator=(const GraphTape &) = delete;

  /// Switches to replay and rewinds to the first recorded graph.
  void replay();
  bool replaying() const { return replaying_; }
  std::size_t size() const { return graphs_.size(); }

  /// Used by grapher_forward: returns the recorded graphs when replaying,
  /// otherwise builds them with `build` and records them.
  std::vector<KnnGraph> next(std::size_t count, const std::function<std::vector<KnnGraph>()> &build);

  static GraphTape *current();

private:
  GraphTape *previous_;
  bool replaying_ = false;
  std::size_t cursor_ = 0;
  std::vector<KnnGraph> graphs_;
};

template <typename T>
GrapherParams<T> make_grapher(std::size_t channels, const GrapherOptions &opt, Rng &rng);
template <typename T>
FfnParams<T> make_ffn(std::size_t channels, std::size_t ratio, double droppath_rate, Rng &rng);
/// `height`/`width` are the network input size; the embedding covers the
/// stem output (half of it).
template <typename T>
StemParams<T> make_stem(std::size_t in_channels, std::size_t channels, std::size_t height,
                        std::size_t width, Rng &rng);
/// down: C -> 2C with a stride-2 conv; up: C -> C/2 after bilinear x2.
template <typename T> ResampleParams<T> make_resample(std::size_t channels, Direction dir, Rng &rng);

template <typename T>
Tensor<T> grapher_forward(const Tensor<T> &x, GrapherParams<T> &p, Mode mode, Rng &rng);
template <typename T>
Tensor<T> ffn_forward(const Tensor<T> &y, FfnParams<T> &p, Mode mode, Rng &rng);
template <typename T> Tensor<T> stem_forward(const Tensor<T> &img, StemParams<T> &p, Mode mode);
template <typename T> Tensor<T> downsample(const Tensor<T> &x, ResampleParams<T> &p, Mode mode);
template <typename T> Tensor<T> upsample(const Tensor<T> &x, ResampleParams<T> &p, Mode mode);

} // namespace vigunet
