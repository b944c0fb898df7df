// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "support.hpp"
#include "vigunet/graph.hpp"

using namespace vigunet;
using namespace vigunet::testing;

namespace {

template <typename T> T sq_dist_oracle(const Tensor<T> &a, std::size_t i, const Tensor<T> &b, std::size_t j) {
  const std::size_t d = a.dim(1);
  T s = 0;
  for (std::size_t k = 0; k < d; ++k) {
    const T diff = b[j * d + k] - a[i * d + k];
    s += diff * diff;
  }
  return s;
}

// Full sort of every candidate by (distance, index).
template <typename T>
std::vector<std::uint32_t> sorted_row(const Tensor<T> &q, std::size_t i, const Tensor<T> &c,
                                      bool self_first, std::size_t k) {
  const std::size_t m = c.dim(0);
  std::vector<std::uint32_t> idx;
  for (std::size_t j = 0; j < m; ++j)
    if (!self_first || j != i)
      idx.push_back(std::uint32_t(j));
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    const T da = sq_dist_oracle(q, i, c, a), db = sq_dist_oracle(q, i, c, b);
    return da != db ? da < db : a < b;
  });
  if (self_first)
    idx.insert(idx.begin(), std::uint32_t(i));
  idx.resize(std::min(k, idx.size()));
  return idx;
}

} // namespace

TEST_CASE("pairwise squared distances") {
  Tensor<double> f({2, 2}, std::vector<double>{0, 0, 3, 4});
  auto d = pairwise_sq_dist(f);
  CHECK(d[1] == 25.0);
  CHECK(d[2] == 25.0);
  CHECK(d[0] == 0.0);

  Rng rng(1);
  auto r = random_tensor({5, 3}, rng);
  auto dr = pairwise_sq_dist(r);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k)
        s += (r[i * 3 + k] - r[j * 3 + k]) * (r[i * 3 + k] - r[j * 3 + k]);
      CHECK(dr[i * 5 + j] == doctest::Approx(s).epsilon(1e-14));
      CHECK(dr[i * 5 + j] == dr[j * 5 + i]);
    }
}

TEST_CASE("knn graph with K=1 holds only the node itself") {
  Rng rng(2);
  auto g = knn_graph(random_tensor({6, 2}, rng), 1);
  CHECK(g.k == 1);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(g.row(i)[0] == i);
}

TEST_CASE("knn graph clamps K to n and lists every node self first") {
  Rng rng(3);
  auto g = knn_graph(random_tensor({4, 3}, rng), 9);
  CHECK(g.k == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    auto row = g.row(i);
    CHECK(row[0] == i);
    std::vector<std::uint32_t> sorted(row.begin(), row.end());
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::uint32_t>{0, 1, 2, 3});
  }
}

TEST_CASE("knn graph on points of a line pairs the neighbours") {
  Tensor<double> f({4, 1}, std::vector<double>{0, 1, 10, 11});
  auto g = knn_graph(f, 2);
  CHECK(std::vector<std::uint32_t>(g.row(0).begin(), g.row(0).end()) == std::vector<std::uint32_t>{0, 1});
  CHECK(std::vector<std::uint32_t>(g.row(1).begin(), g.row(1).end()) == std::vector<std::uint32_t>{1, 0});
  CHECK(std::vector<std::uint32_t>(g.row(2).begin(), g.row(2).end()) == std::vector<std::uint32_t>{2, 3});
  CHECK(std::vector<std::uint32_t>(g.row(3).begin(), g.row(3).end()) == std::vector<std::uint32_t>{3, 2});
}

TEST_CASE("knn graph ties resolve to the lower index, self first") {
  Tensor<float> f({5, 2}, 1.0f); // all identical
  auto g = knn_graph(f, 3);
  CHECK(std::vector<std::uint32_t>(g.row(0).begin(), g.row(0).end()) == std::vector<std::uint32_t>{0, 1, 2});
  CHECK(std::vector<std::uint32_t>(g.row(3).begin(), g.row(3).end()) == std::vector<std::uint32_t>{3, 0, 1});
}

TEST_CASE("knn graph argument errors") {
  CHECK_THROWS_AS(knn_graph(Tensor<float>({3, 2}), 0), std::invalid_argument);
  CHECK_THROWS_AS(knn_graph(Tensor<float>({0, 2}), 1), std::invalid_argument);
  CHECK_THROWS_AS(knn_graph(Tensor<float>(), 1), std::invalid_argument);
}

TEST_CASE("knn graph matches the full-sort oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng.below(64), d = 1 + rng.below(8), k = 1 + rng.below(12);
    // Quantized values create plenty of distance ties.
    auto f = random_tensor<float>({n, d}, rng);
    if (trial % 2)
      for (auto &v : f.data())
        v = std::round(v * 2.0f);
    auto g = knn_graph(f, k);
    REQUIRE(g.k == std::min(k, n));
    for (std::size_t i = 0; i < n; ++i) {
      auto want = sorted_row(f, i, f, true, k);
      CHECK(std::vector<std::uint32_t>(g.row(i).begin(), g.row(i).end()) == want);
    }
  }
}

TEST_CASE("knn graph against separate candidates matches the oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(40), m = 1 + rng.below(20), d = 1 + rng.below(6);
    auto q = random_tensor<float>({n, d}, rng), c = random_tensor<float>({m, d}, rng);
    auto g = knn_graph(q, c, 9);
    CHECK(g.num_candidates == m);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::vector<std::uint32_t>(g.row(i).begin(), g.row(i).end()) == sorted_row(q, i, c, false, 9));
  }
}

TEST_CASE("knn graph is deterministic") {
  Rng rng(6);
  auto f = random_tensor<float>({50, 4}, rng);
  CHECK(knn_graph(f, 9) == knn_graph(f, 9));
}

TEST_CASE("mr_aggregate examples") {
  SUBCASE("identical nodes give zero max term") {
    Tensor<double> f({3, 2}, std::vector<double>{1, 2, 1, 2, 1, 2});
    KnnGraph g = knn_graph(f, 3);
    auto a = mr_aggregate(f, std::span<const KnnGraph>(&g, 1));
    CHECK(a.shape() == Shape{3, 4});
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a[i * 4 + 0] == 1.0);
      CHECK(a[i * 4 + 1] == 2.0);
      CHECK(a[i * 4 + 2] == 0.0);
      CHECK(a[i * 4 + 3] == 0.0);
    }
  }
  SUBCASE("two nodes") {
    Tensor<double> f({2, 2}, std::vector<double>{1, 0, 0, 2});
    KnnGraph g = knn_graph(f, 2);
    auto a = mr_aggregate(f, std::span<const KnnGraph>(&g, 1));
    const std::vector<double> want = {1, 0, 0, 2, 0, 2, 1, 0};
    for (std::size_t i = 0; i < 8; ++i)
      CHECK(a[i] == want[i]);
  }
}

TEST_CASE("mr_aggregate matches a per-node loop") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t B = 1 + rng.below(3), n = 1 + rng.below(30), d = 1 + rng.below(6);
    auto f = random_tensor<float>({B, n, d}, rng);
    std::vector<KnnGraph> gs;
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<float> slice(f.data().begin() + b * n * d, f.data().begin() + (b + 1) * n * d);
      gs.push_back(knn_graph(Tensor<float>({n, d}, slice), 5));
    }
    auto a = mr_aggregate(f, std::span<const KnnGraph>(gs));
    REQUIRE(a.shape() == Shape{B, n, 2 * d});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) {
          const float xi = f[(b * n + i) * d + c];
          float mx = -1e30f;
          for (auto j : gs[b].row(i))
            mx = std::max(mx, f[(b * n + j) * d + c] - xi);
          CHECK(a[(b * n + i) * 2 * d + c] == xi);
          CHECK(a[(b * n + i) * 2 * d + d + c] == mx);
        }
  }
}

TEST_CASE("mr_aggregate rejects graphs that do not fit the features") {
  Rng rng(8);
  auto f = random_tensor<float>({4, 2}, rng);
  KnnGraph g = knn_graph(random_tensor<float>({5, 2}, rng), 3);
  CHECK_THROWS_AS(mr_aggregate(f, std::span<const KnnGraph>(&g, 1)), ShapeError);
  KnnGraph bad = knn_graph(f, 2);
  bad.neighbors[3] = 17;
  CHECK_THROWS_AS(mr_aggregate(f, std::span<const KnnGraph>(&bad, 1)), ShapeError);
}

TEST_CASE("mr_aggregate is equivariant under node relabeling") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 12, d = 3;
    auto f = random_tensor<double>({n, d}, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.below(i + 1)]);
    Tensor<double> pf({n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c)
        pf[i * d + c] = f[perm[i] * d + c];
    KnnGraph g = knn_graph(f, 4), pg = knn_graph(pf, 4);
    auto a = mr_aggregate(f, std::span<const KnnGraph>(&g, 1));
    auto pa = mr_aggregate(pf, std::span<const KnnGraph>(&pg, 1));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 2 * d; ++c)
        CHECK(pa[i * 2 * d + c] == a[perm[i] * 2 * d + c]);
  }
}

TEST_CASE("mr_aggregate gradient matches finite differences") {
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    auto f = random_tensor<double>({8, 4}, rng);
    f.set_requires_grad(true);
    KnnGraph g = knn_graph(f.detach(), 3);
    auto w = random_weights(8 * 8, rng);
    auto r = grad_check([&] { return weighted_sum(mr_aggregate(f, std::span<const KnnGraph>(&g, 1)), w); },
                        {f}, 1e-6);
    CHECK(r.rel_err() < 1e-4);

    auto cand = random_tensor<double>({3, 4}, rng);
    cand.set_requires_grad(true);
    KnnGraph gc = knn_graph(f.detach(), cand.detach(), 2);
    auto r2 = grad_check(
      [&] { return weighted_sum(mr_aggregate(f, cand, std::span<const KnnGraph>(&gc, 1)), w); },
      {f, cand}, 1e-6);
    CHECK(r2.rel_err() < 1e-4);
  }
}

TEST_CASE("head split update examples") {
  SUBCASE("identity with one head") {
    UpdateHeads<double> h{1, Tensor<double>({1, 4, 4}), Tensor<double>({4})};
    for (std::size_t i = 0; i < 4; ++i)
      h.weight[i * 4 + i] = 1.0;
    Tensor<double> agg({2, 4}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
    auto y = head_split_update(agg, h);
    for (std::size_t i = 0; i < 8; ++i)
      CHECK(y[i] == agg[i]);
  }
  SUBCASE("blockwise identity with two heads") {
    UpdateHeads<double> h{2, Tensor<double>({2, 2, 2}), Tensor<double>({4})};
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t i = 0; i < 2; ++i)
        h.weight[(m * 2 + i) * 2 + i] = 1.0;
    Tensor<double> agg({1, 4}, std::vector<double>{1, 2, 3, 4});
    auto y = head_split_update(agg, h);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(y[i] == agg[i]);
  }
  SUBCASE("selecting one column per head") {
    UpdateHeads<double> h{2, Tensor<double>({2, 2, 1}, std::vector<double>{1, 0, 0, 1}),
                          Tensor<double>({2})};
    Tensor<double> agg({1, 4}, std::vector<double>{1, 2, 3, 4});
    auto y = head_split_update(agg, h);
    REQUIRE(y.shape() == Shape{1, 2});
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 4.0);
  }
}

TEST_CASE("head split update matches a block matrix product") {
  Rng rng(11);
  auto h = UpdateHeads<double>::kaiming(12, 8, 4, rng);
  h.bias = random_tensor({8}, rng);
  auto agg = random_tensor<double>({2, 5, 12}, rng);
  auto y = head_split_update(agg, h);
  REQUIRE(y.shape() == Shape{2, 5, 8});
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t m = 0; m < 4; ++m)
      for (std::size_t o = 0; o < 2; ++o) {
        double s = h.bias[m * 2 + o];
        for (std::size_t i = 0; i < 3; ++i)
          s += agg[r * 12 + m * 3 + i] * h.weight[(m * 3 + i) * 2 + o];
        CHECK(y[r * 8 + m * 2 + o] == doctest::Approx(s).epsilon(1e-13));
      }
  h.weight.set_requires_grad(true);
  h.bias.set_requires_grad(true);
  agg.set_requires_grad(true);
  auto w = random_weights(y.numel(), rng);
  CHECK(grad_check([&] { return weighted_sum(head_split_update(agg, h), w); }, {agg, h.weight, h.bias})
          .rel_err() < 1e-4);
}

TEST_CASE("head split update divisibility errors") {
  Rng rng(12);
  CHECK_THROWS_AS(UpdateHeads<float>::kaiming(6, 6, 4, rng), std::invalid_argument);
  auto h = UpdateHeads<float>::kaiming(8, 8, 4, rng);
  CHECK_THROWS_AS(head_split_update(Tensor<float>({2, 6}), h), std::invalid_argument);
  CHECK_THROWS_AS(head_split_update(Tensor<float>({2, 12}), h), ShapeError);
}

TEST_CASE("graph text dump") {
  Tensor<double> f({3, 1}, std::vector<double>{0, 1, 5});
  std::ostringstream os;
  write_graph(os, knn_graph(f, 2));
  CHECK(os.str() == "0 1\n1 0\n2 1\n");
}
