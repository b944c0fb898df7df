// SPDX-License-Identifier: Apache-2.0
#include "vigunet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "vigunet/kernels.hpp"

namespace vigunet {

namespace {

constexpr std::size_t kQueryBlock = 64;

struct Candidate {
  double dist;
  std::uint32_t index;
};

// Keeps the `cap` smallest (dist, index) pairs seen so far, sorted. Indices
// arrive in ascending order, so a strict comparison breaks ties by index.
class TopK {
public:
  explicit TopK(std::size_t cap) : cap_(cap) { items_.reserve(cap + 1); }

  void reset() { items_.clear(); }

  void offer(double dist, std::uint32_t index) {
    if (cap_ == 0)
      return;
    if (items_.size() == cap_ && !(dist < items_.back().dist))
      return;
    auto pos = std::upper_bound(items_.begin(), items_.end(), dist,
                                [](double d, const Candidate &c) { return d < c.dist; });
    items_.insert(pos, Candidate{dist, index});
    if (items_.size() > cap_)
      items_.pop_back();
  }

  const std::vector<Candidate> &items() const { return items_; }

private:
  std::size_t cap_;
  std::vector<Candidate> items_;
};

template <typename T>
KnnGraph knn_rows(const T *queries, std::size_t nq, const T *cand, std::size_t m, std::size_t d,
                  std::size_t k, bool self_first) {
  KnnGraph g;
  g.num_nodes = nq;
  g.num_candidates = m;
  g.k = std::min(k, m);
  g.neighbors.resize(nq * g.k);

  std::vector<T> cand_t(d * m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t p = 0; p < d; ++p)
      cand_t[p * m + j] = cand[j * d + p];

  std::vector<T> dist(std::min(nq, kQueryBlock) * m);
  TopK top(self_first ? g.k - 1 : g.k);
  for (std::size_t i0 = 0; i0 < nq; i0 += kQueryBlock) {
    const std::size_t rows = std::min(kQueryBlock, nq - i0);
    kernels::sq_dist<T>({.queries = queries + i0 * d, .nq = rows, .d = d,
                         .cand_t = cand_t.data(), .m = m, .out = dist.data()});
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = i0 + r;
      const T *row = dist.data() + r * m;
      top.reset();
      for (std::size_t j = 0; j < m; ++j)
        if (!self_first || j != i)
          top.offer(double(row[j]), std::uint32_t(j));
      std::uint32_t *out = g.neighbors.data() + i * g.k;
      std::size_t slot = 0;
      if (self_first)
        out[slot++] = std::uint32_t(i);
      for (const auto &c : top.items())
        out[slot++] = c.index;
    }
  }
  return g;
}

struct NodeLayout {
  std::size_t batch, n, d;
};

NodeLayout node_layout(const Shape &s, const char *what) {
  if (s.size() == 2)
    return {1, s[0], s[1]};
  if (s.size() == 3)
    return {s[0], s[1], s[2]};
  throw ShapeError(std::string(what) + ": expected [n, d] or [B, n, d], got " + to_string(s));
}

} // namespace

template <typename T> Tensor<T> pairwise_sq_dist(const Tensor<T> &features) {
  if (features.rank() != 2)
    throw ShapeError("pairwise_sq_dist: expected [n, d], got " + to_string(features.shape()));
  const std::size_t n = features.dim(0), d = features.dim(1);
  const T *x = features.data().data();
  std::vector<T> cand_t(d * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < d; ++p)
      cand_t[p * n + j] = x[j * d + p];
  std::vector<T> out(n * n);
  kernels::sq_dist<T>({.queries = x, .nq = n, .d = d, .cand_t = cand_t.data(), .m = n,
                       .out = out.data()});
  return Tensor<T>({n, n}, std::move(out));
}

template <typename T> KnnGraph knn_graph(const Tensor<T> &features, std::size_t k) {
  if (k < 1)
    throw std::invalid_argument("knn_graph: K must be at least 1");
  if (!features.defined())
    throw std::invalid_argument("knn_graph: empty node set");
  if (features.rank() != 2)
    throw ShapeError("knn_graph: expected [n, d], got " + to_string(features.shape()));
  if (features.dim(0) == 0)
    throw std::invalid_argument("knn_graph: empty node set");
  const T *x = features.data().data();
  return knn_rows(x, features.dim(0), x, features.dim(0), features.dim(1), k, true);
}

template <typename T>
KnnGraph knn_graph(const Tensor<T> &queries, const Tensor<T> &candidates, std::size_t k) {
  if (k < 1)
    throw std::invalid_argument("knn_graph: K must be at least 1");
  if (!queries.defined() || !candidates.defined())
    throw std::invalid_argument("knn_graph: empty node set");
  if (queries.rank() != 2 || candidates.rank() != 2 || queries.dim(1) != candidates.dim(1))
    throw ShapeError("knn_graph: queries " + to_string(queries.shape()) + " and candidates " +
                     to_string(candidates.shape()) + " are not [n, d] / [m, d]");
  if (queries.dim(0) == 0 || candidates.dim(0) == 0)
    throw std::invalid_argument("knn_graph: empty node set");
  return knn_rows(queries.data().data(), queries.dim(0), candidates.data().data(),
                  candidates.dim(0), queries.dim(1), k, false);
}

template <typename T>
Tensor<T> mr_aggregate(const Tensor<T> &features, const Tensor<T> &candidates,
                       std::span<const KnnGraph> graphs) {
  const NodeLayout f = node_layout(features.shape(), "mr_aggregate features");
  const NodeLayout c = node_layout(candidates.shape(), "mr_aggregate candidates");
  if (f.batch != c.batch || f.d != c.d || features.rank() != candidates.rank())
    throw ShapeError("mr_aggregate: features " + to_string(features.shape()) +
                     " and candidates " + to_string(candidates.shape()) + " disagree");
  if (graphs.size() != f.batch)
    throw ShapeError("mr_aggregate: " + std::to_string(graphs.size()) + " graphs for batch of " +
                     std::to_string(f.batch));
  for (const auto &g : graphs) {
    if (g.num_nodes != f.n || g.num_candidates != c.n || g.k == 0 ||
        g.neighbors.size() != g.num_nodes * g.k)
      throw ShapeError("mr_aggregate: graph/feature mismatch (graph over " +
                       std::to_string(g.num_nodes) + " nodes, features have " +
                       std::to_string(f.n) + ")");
    for (auto j : g.neighbors)
      if (j >= c.n)
        throw ShapeError("mr_aggregate: graph/feature mismatch, neighbour index " +
                         std::to_string(j) + " out of range " + std::to_string(c.n));
  }

  const std::size_t d = f.d;
  const T *x = features.data().data();
  const T *y = candidates.data().data();
  std::vector<T> out(f.batch * f.n * 2 * d);
  // argmax[(b*n + i)*d + ch] = winning candidate index for the max term
  std::vector<std::uint32_t> argmax(f.batch * f.n * d);
  for (std::size_t b = 0; b < f.batch; ++b) {
    const auto &g = graphs[b];
    for (std::size_t i = 0; i < f.n; ++i) {
      const T *xi = x + (b * f.n + i) * d;
      T *o = out.data() + (b * f.n + i) * 2 * d;
      std::uint32_t *am = argmax.data() + (b * f.n + i) * d;
      std::copy(xi, xi + d, o);
      const auto nbrs = g.row(i);
      for (std::size_t ch = 0; ch < d; ++ch) {
        T best = y[(b * c.n + nbrs[0]) * d + ch] - xi[ch];
        std::uint32_t arg = nbrs[0];
        for (std::size_t s = 1; s < nbrs.size(); ++s) {
          const T v = y[(b * c.n + nbrs[s]) * d + ch] - xi[ch];
          if (v > best) {
            best = v;
            arg = nbrs[s];
          }
        }
        o[d + ch] = best;
        am[ch] = arg;
      }
    }
  }

  Shape out_shape = features.shape();
  out_shape.back() = 2 * d;
  return Tensor<T>::make_result(
    std::move(out_shape), std::move(out), {features, candidates},
    [features, candidates, argmax = std::move(argmax), f, cn = c.n](std::span<const T> gout) {
      const std::size_t d = f.d;
      std::span<T> dx, dy;
      if (features.requires_grad())
        dx = features.grad_buffer();
      if (candidates.requires_grad())
        dy = candidates.grad_buffer();
      for (std::size_t b = 0; b < f.batch; ++b)
        for (std::size_t i = 0; i < f.n; ++i) {
          const T *go = gout.data() + (b * f.n + i) * 2 * d;
          const std::uint32_t *am = argmax.data() + (b * f.n + i) * d;
          for (std::size_t ch = 0; ch < d; ++ch) {
            if (!dx.empty())
              dx[(b * f.n + i) * d + ch] += go[ch] - go[d + ch];
            if (!dy.empty())
              dy[(b * cn + am[ch]) * d + ch] += go[d + ch];
          }
        }
    });
}

template <typename T>
Tensor<T> mr_aggregate(const Tensor<T> &features, std::span<const KnnGraph> graphs) {
  return mr_aggregate(features, features, graphs);
}

template <typename T>
UpdateHeads<T> UpdateHeads<T>::kaiming(std::size_t in, std::size_t out, std::size_t heads,
                                       Rng &rng) {
  if (heads == 0 || in % heads || out % heads)
    throw std::invalid_argument("UpdateHeads: " + std::to_string(in) + "->" +
                                std::to_string(out) + " not divisible into " +
                                std::to_string(heads) + " heads");
  UpdateHeads u;
  u.heads = heads;
  const std::size_t ib = in / heads, ob = out / heads;
  const double bound = 1.0 / std::sqrt(double(ib));
  std::vector<T> w(heads * ib * ob);
  for (auto &v : w)
    v = T(rng.uniform(-bound, bound));
  u.weight = Tensor<T>({heads, ib, ob}, std::move(w));
  u.weight.set_requires_grad(true);
  u.bias = Tensor<T>::zeros({out});
  u.bias.set_requires_grad(true);
  return u;
}

template <typename T>
Tensor<T> head_split_update(const Tensor<T> &agg, const UpdateHeads<T> &heads) {
  if (heads.heads == 0 || heads.weight.rank() != 3 || heads.weight.dim(0) != heads.heads)
    throw std::invalid_argument("head_split_update: malformed head weights");
  const std::size_t in = agg.shape().back();
  if (in % heads.heads)
    throw std::invalid_argument("head_split_update: width " + std::to_string(in) +
                                " not divisible by " + std::to_string(heads.heads) + " heads");
  if (in != heads.in_features())
    throw ShapeError("head_split_update: input width " + std::to_string(in) +
                     " does not match head weights " + to_string(heads.weight.shape()));
  const std::size_t h = heads.heads, ib = heads.weight.dim(1), ob = heads.weight.dim(2);
  const std::size_t out_w = h * ob;
  const std::size_t rows = agg.numel() / in;

  std::vector<T> out(rows * out_w);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out_w; ++o)
      out[r * out_w + o] = heads.bias.defined() ? heads.bias[o] : T(0);
  const T *a = agg.data().data();
  const T *w = heads.weight.data().data();
  for (std::size_t m = 0; m < h; ++m)
    kernels::gemm<T>({.m = rows, .n = ob, .k = ib, .a = a + m * ib, .lda = in,
                      .b = w + m * ib * ob, .ldb = ob, .c = out.data() + m * ob, .ldc = out_w,
                      .accumulate = true});

  Shape out_shape = agg.shape();
  out_shape.back() = out_w;
  return Tensor<T>::make_result(
    std::move(out_shape), std::move(out), {agg, heads.weight, heads.bias},
    [agg, weight = heads.weight, bias = heads.bias, h, ib, ob, in, out_w,
     rows](std::span<const T> gout) {
      for (std::size_t m = 0; m < h; ++m) {
        if (weight.requires_grad())
          kernels::gemm<T>({.trans_a = true, .m = ib, .n = ob, .k = rows,
                            .a = agg.data().data() + m * ib, .lda = in,
                            .b = gout.data() + m * ob, .ldb = out_w,
                            .c = weight.grad_buffer().data() + m * ib * ob, .ldc = ob,
                            .accumulate = true});
        if (agg.requires_grad())
          kernels::gemm<T>({.trans_b = true, .m = rows, .n = ib, .k = ob,
                            .a = gout.data() + m * ob, .lda = out_w,
                            .b = weight.data().data() + m * ib * ob, .ldb = ob,
                            .c = agg.grad_buffer().data() + m * ib, .ldc = in,
                            .accumulate = true});
      }
      if (bias.defined() && bias.requires_grad()) {
        auto db = bias.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t o = 0; o < out_w; ++o)
            db[o] += gout[r * out_w + o];
      }
    });
}

void write_graph(std::ostream &out, const KnnGraph &graph) {
  for (std::size_t i = 0; i < graph.num_nodes; ++i) {
    const auto row = graph.row(i);
    for (std::size_t s = 0; s < row.size(); ++s)
      out << (s ? " " : "") << row[s];
    out << '\n';
  }
}

#define VIGUNET_INSTANTIATE_GRAPH(T)                                                           \
  template Tensor<T> pairwise_sq_dist(const Tensor<T> &);                                      \
  template KnnGraph knn_graph(const Tensor<T> &, std::size_t);                                 \
  template KnnGraph knn_graph(const Tensor<T> &, const Tensor<T> &, std::size_t);              \
  template Tensor<T> mr_aggregate(const Tensor<T> &, std::span<const KnnGraph>);               \
  template Tensor<T> mr_aggregate(const Tensor<T> &, const Tensor<T> &,                        \
                                  std::span<const KnnGraph>);                                  \
  template struct UpdateHeads<T>;                                                              \
  template Tensor<T> head_split_update(const Tensor<T> &, const UpdateHeads<T> &);

VIGUNET_INSTANTIATE_GRAPH(float)
VIGUNET_INSTANTIATE_GRAPH(double)

} // namespace vigunet
