// SPDX-License-Identifier: Apache-2.0
// K-nearest-neighbour graphs over feature-map nodes and the
//         max-relative aggregation / multi-head update built on them.
//
// Node features are a [n, d] matrix (row i is node i) or a batch of them,
// [B, n, d], with one graph per sample. Distances are squared Euclidean.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "vigunet/rng.hpp"
#include "vigunet/tensor.hpp"

namespace vigunet {

struct KnnGraph {
  std::size_t num_nodes = 0;
  /// Size of the candidate set the indices point into; equals num_nodes
  /// unless the graph was built against a reduced candidate grid.
  std::size_t num_candidates = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> neighbors; ///< [num_nodes, k], row-major

  std::span<const std::uint32_t> row(std::size_t i) const {
    return {neighbors.data() + i * k, k};
  }

  friend bool operator==(const KnnGraph &, const KnnGraph &) = default;
};

/// Entry (i, j) = ||x_i - x_j||^2 for a [n, d] feature matrix.
template <typename T> Tensor<T> pairwise_sq_dist(const Tensor<T> &features);

/// Each row lists the node itself first, then the k-1 nearest other nodes
/// ordered by (distance, index). k is clamped to n.
template <typename T> KnnGraph knn_graph(const Tensor<T> &features, std::size_t k);

/// Neighbours of every query row among a separate candidate set (no
/// self-loop), ordered by (distance, index). k is clamped to the candidate
/// count. Used with average-pooled candidates.
template <typename T>
KnnGraph knn_graph(const Tensor<T> &queries, const Tensor<T> &candidates, std::size_t k);

/// Row i = [x_i, max_{j in N(i)} (x_j - x_i)], shape [.., n, 2d].
/// `features` is [n, d] with one graph or [B, n, d] with B graphs.
template <typename T>
Tensor<T> mr_aggregate(const Tensor<T> &features, std::span<const KnnGraph> graphs);

/// Variant where neighbour indices point into `candidates` ([m, d] or
/// [B, m, d]) instead of `features`.
template <typename T>
Tensor<T> mr_aggregate(const Tensor<T> &features, const Tensor<T> &candidates,
                       std::span<const KnnGraph> graphs);

template <typename T> struct UpdateHeads {
  std::size_t heads = 1;
  Tensor<T> weight; ///< [heads, in/heads, out/heads]
  Tensor<T> bias;   ///< [out]

  std::size_t in_features() const { return heads * weight.dim(1); }
  std::size_t out_features() const { return heads * weight.dim(2); }

  static UpdateHeads kaiming(std::size_t in, std::size_t out, std::size_t heads, Rng &rng);
};

/// Splits the last axis into `heads` contiguous blocks, applies each block's
/// affine map and concatenates the results.
template <typename T> Tensor<T> head_split_update(const Tensor<T> &agg, const UpdateHeads<T> &heads);

/// One line per node with space-separated neighbour indices.
void write_graph(std::ostream &out, const KnnGraph &graph);

} // namespace vigunet
