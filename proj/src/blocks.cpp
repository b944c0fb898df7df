// SPDX-License-Identifier: Apache-2.0
#include "vigunet/blocks.hpp"

#include <stdexcept>

namespace vigunet {

namespace {

template <typename T>
void visit_bn(const std::string &prefix, BatchNormState<T> &bn, const TensorVisitor<T> &fn) {
  fn(prefix + ".weight", bn.gamma, true);
  fn(prefix + ".bias", bn.beta, true);
  fn(prefix + ".running_mean", bn.running_mean, false);
  fn(prefix + ".running_var", bn.running_var, false);
}

template <typename T> void check_channels(const Tensor<T> &x, std::size_t c, const char *what) {
  if (x.rank() != 4 || x.dim(1) != c)
    throw ShapeError(std::string(what) + ": expected [B, " + std::to_string(c) +
                     ", H, W], got " + to_string(x.shape()));
}

thread_local GraphTape *active_tape = nullptr;

} // namespace

GraphTape::GraphTape() : previous_(active_tape) { active_tape = this; }
GraphTape::~GraphTape() { active_tape = previous_; }

GraphTape *GraphTape::current() { return active_tape; }

void GraphTape::replay() {
  replaying_ = true;
  cursor_ = 0;
}

std::vector<KnnGraph> GraphTape::next(std::size_t count,
                                      const std::function<std::vector<KnnGraph>()> &build) {
  if (!replaying_) {
    auto built = build();
    graphs_.insert(graphs_.end(), built.begin(), built.end());
    return built;
  }
  if (cursor_ + count > graphs_.size())
    throw StateError("graph tape exhausted: forward differs from the recorded one");
  std::vector<KnnGraph> out(graphs_.begin() + cursor_, graphs_.begin() + cursor_ + count);
  cursor_ += count;
  return out;
}

template <typename T> void ConvBn<T>::visit(const std::string &prefix, const TensorVisitor<T> &fn) {
  fn(prefix + ".conv.weight", conv.weight, true);
  fn(prefix + ".conv.bias", conv.bias, true);
  visit_bn(prefix + ".bn", bn, fn);
}

template <typename T>
void GrapherParams<T>::visit(const std::string &prefix, const TensorVisitor<T> &fn) {
  fc_in.visit(prefix + ".fc_in", fn);
  fn(prefix + ".heads.weight", heads.weight, true);
  fn(prefix + ".heads.bias", heads.bias, true);
  visit_bn(prefix + ".heads.bn", heads_bn, fn);
  fc_out.visit(prefix + ".fc_out", fn);
}

template <typename T>
void FfnParams<T>::visit(const std::string &prefix, const TensorVisitor<T> &fn) {
  fc1.visit(prefix + ".fc1", fn);
  fc2.visit(prefix + ".fc2", fn);
}

template <typename T>
void StemParams<T>::visit(const std::string &prefix, const TensorVisitor<T> &fn) {
  conv1.visit(prefix + ".conv1", fn);
  conv2.visit(prefix + ".conv2", fn);
  fn(prefix + ".pos_embed", pos_embed, true);
}

template <typename T>
void ResampleParams<T>::visit(const std::string &prefix, const TensorVisitor<T> &fn) {
  conv.visit(prefix, fn);
}

template <typename T>
GrapherParams<T> make_grapher(std::size_t channels, const GrapherOptions &opt, Rng &rng) {
  if (opt.k < 1)
    throw std::invalid_argument("grapher: K must be at least 1");
  if (opt.reduction < 1)
    throw std::invalid_argument("grapher: reduction must be at least 1");
  GrapherParams<T> p;
  p.fc_in = ConvBn<T>::make(channels, channels, 1, 1, rng);
  p.heads = UpdateHeads<T>::kaiming(2 * channels, 2 * channels, opt.heads, rng);
  p.heads_bn = BatchNormState<T>::create(2 * channels);
  p.fc_out = ConvBn<T>::make(2 * channels, channels, 1, 1, rng);
  p.droppath_rate = opt.droppath_rate;
  p.k = opt.k;
  p.reduction = opt.reduction;
  return p;
}

template <typename T>
FfnParams<T> make_ffn(std::size_t channels, std::size_t ratio, double droppath_rate, Rng &rng) {
  if (ratio < 1)
    throw std::invalid_argument("ffn: hidden ratio must be at least 1");
  FfnParams<T> p;
  p.fc1 = ConvBn<T>::make(channels, ratio * channels, 1, 1, rng);
  p.fc2 = ConvBn<T>::make(ratio * channels, channels, 1, 1, rng);
  p.droppath_rate = droppath_rate;
  p.ratio = ratio;
  return p;
}

template <typename T>
StemParams<T> make_stem(std::size_t in_channels, std::size_t channels, std::size_t height,
                        std::size_t width, Rng &rng) {
  if (height % 2 || width % 2)
    throw std::invalid_argument("stem: input size must be even");
  StemParams<T> p;
  p.conv1 = ConvBn<T>::make(in_channels, channels, 3, 1, rng);
  p.conv2 = ConvBn<T>::make(channels, channels, 3, 2, rng);
  p.pos_embed = Tensor<T>::zeros({1, channels, height / 2, width / 2});
  p.pos_embed.set_requires_grad(true);
  return p;
}

template <typename T>
ResampleParams<T> make_resample(std::size_t channels, Direction dir, Rng &rng) {
  ResampleParams<T> p;
  p.direction = dir;
  if (dir == Direction::down) {
    p.conv = ConvBn<T>::make(channels, 2 * channels, 3, 2, rng);
  } else {
    if (channels % 2)
      throw std::invalid_argument("upsample: channel count must be even");
    p.conv = ConvBn<T>::make(channels, channels / 2, 3, 1, rng);
  }
  return p;
}

template <typename T>
Tensor<T> grapher_forward(const Tensor<T> &x, GrapherParams<T> &p, Mode mode, Rng &rng) {
  check_channels(x, p.channels(), "grapher");
  const std::size_t B = x.dim(0), H = x.dim(2), W = x.dim(3);

  Tensor<T> x1 = p.fc_in.forward(x, mode);
  Tensor<T> nodes = to_nodes(x1); // [B, n, D]
  Tensor<T> cand = nodes;
  if (p.reduction > 1)
    cand = to_nodes(avg_pool2d(x1, p.reduction));

  const std::size_t n = nodes.dim(1), m = cand.dim(1), D = nodes.dim(2);
  auto build = [&] {
    std::vector<KnnGraph> graphs;
    graphs.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
      // Graph construction is not differentiated; slice detached copies.
      std::vector<T> q(nodes.data().begin() + b * n * D, nodes.data().begin() + (b + 1) * n * D);
      Tensor<T> qt({n, D}, std::move(q));
      if (p.reduction > 1) {
        std::vector<T> c(cand.data().begin() + b * m * D, cand.data().begin() + (b + 1) * m * D);
        graphs.push_back(knn_graph(qt, Tensor<T>({m, D}, std::move(c)), p.k));
      } else {
        graphs.push_back(knn_graph(qt, p.k));
      }
    }
    return graphs;
  };
  const std::vector<KnnGraph> graphs = GraphTape::current() ? GraphTape::current()->next(B, build) : build();

  Tensor<T> agg = mr_aggregate(nodes, cand, std::span<const KnnGraph>(graphs));
  Tensor<T> upd = from_nodes(head_split_update(agg, p.heads), H, W);
  Tensor<T> g = batch_norm2d(upd, p.heads_bn, mode);
  Tensor<T> branch = gelu(p.fc_out.forward(g, mode));
  return add(droppath(branch, p.droppath_rate, mode, rng), x);
}

template <typename T>
Tensor<T> ffn_forward(const Tensor<T> &y, FfnParams<T> &p, Mode mode, Rng &rng) {
  check_channels(y, p.channels(), "ffn");
  Tensor<T> h = gelu(p.fc1.forward(y, mode));
  Tensor<T> branch = p.fc2.forward(h, mode);
  return add(droppath(branch, p.droppath_rate, mode, rng), y);
}

template <typename T> Tensor<T> stem_forward(const Tensor<T> &img, StemParams<T> &p, Mode mode) {
  check_channels(img, p.conv1.conv.in_channels(), "stem");
  Tensor<T> h = gelu(p.conv1.forward(img, mode));
  h = gelu(p.conv2.forward(h, mode));
  if (h.dim(2) != p.pos_embed.dim(2) || h.dim(3) != p.pos_embed.dim(3))
    throw ShapeError("stem: output " + to_string(h.shape()) + " does not match position embedding " +
                     to_string(p.pos_embed.shape()));
  return add(h, p.pos_embed);
}

template <typename T> Tensor<T> downsample(const Tensor<T> &x, ResampleParams<T> &p, Mode mode) {
  if (p.direction != Direction::down)
    throw std::invalid_argument("downsample called with upsampling parameters");
  check_channels(x, p.conv.conv.in_channels(), "downsample");
  if (x.dim(2) % 2 || x.dim(3) % 2)
    throw std::invalid_argument("downsample: odd spatial size " + to_string(x.shape()));
  return p.conv.forward(x, mode);
}

template <typename T> Tensor<T> upsample(const Tensor<T> &x, ResampleParams<T> &p, Mode mode) {
  if (p.direction != Direction::up)
    throw std::invalid_argument("upsample called with downsampling parameters");
  check_channels(x, p.conv.conv.in_channels(), "upsample");
  return p.conv.forward(bilinear_upsample(x, 2), mode);
}

#define VIGUNET_INSTANTIATE_BLOCKS(T)                                                          \
  template struct ConvBn<T>;                                                                   \
  template struct GrapherParams<T>;                                                            \
  template struct FfnParams<T>;                                                                \
  template struct StemParams<T>;                                                               \
  template struct ResampleParams<T>;                                                           \
  template GrapherParams<T> make_grapher<T>(std::size_t, const GrapherOptions &, Rng &);       \
  template FfnParams<T> make_ffn<T>(std::size_t, std::size_t, double, Rng &);                  \
  template StemParams<T> make_stem<T>(std::size_t, std::size_t, std::size_t, std::size_t,      \
                                      Rng &);                                                  \
  template ResampleParams<T> make_resample<T>(std::size_t, Direction, Rng &);                  \
  template Tensor<T> grapher_forward(const Tensor<T> &, GrapherParams<T> &, Mode, Rng &);      \
  template Tensor<T> ffn_forward(const Tensor<T> &, FfnParams<T> &, Mode, Rng &);              \
  template Tensor<T> stem_forward(const Tensor<T> &, StemParams<T> &, Mode);                   \
  template Tensor<T> downsample(const Tensor<T> &, ResampleParams<T> &, Mode);                 \
  template Tensor<T> upsample(const Tensor<T> &, ResampleParams<T> &, Mode);

VIGUNET_INSTANTIATE_BLOCKS(float)
VIGUNET_INSTANTIATE_BLOCKS(double)

} // namespace vigunet
