// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <bit>
#include <cmath>

#include "support.hpp"
#include "vigunet/graph.hpp"
#include "vigunet/kernels.hpp"
#include "vigunet/model.hpp"

using namespace vigunet;
using namespace vigunet::testing;
namespace k = vigunet::kernels;

namespace {

struct IsaScope {
  explicit IsaScope(k::Isa isa) : previous(k::active().isa) { k::select(isa); }
  ~IsaScope() { k::select(previous); }
  k::Isa previous;
};

std::vector<float> random_vec(std::size_t n, Rng &rng) {
  std::vector<float> v(n);
  for (auto &x : v)
    x = float(rng.uniform(-1.0, 1.0));
  return v;
}

} // namespace

TEST_CASE("scalar kernels are always available") {
  CHECK(k::available(k::Isa::scalar));
  CHECK(k::table(k::Isa::scalar).isa == k::Isa::scalar);
  CHECK(k::isa_name(k::Isa::avx2) == "avx2");
}

TEST_CASE("scalar gemm matches a triple loop in double") {
  Rng rng(1);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      const std::size_t m = 5, n = 7, kk = 3;
      std::vector<double> a(m * kk), b(kk * n), c(m * n, 1.0);
      for (auto &x : a)
        x = rng.uniform(-1, 1);
      for (auto &x : b)
        x = rng.uniform(-1, 1);
      k::gemm<double>({.trans_a = ta, .trans_b = tb, .m = m, .n = n, .k = kk, .a = a.data(),
                       .lda = ta ? m : kk, .b = b.data(), .ldb = tb ? kk : n, .c = c.data(),
                       .ldc = n, .accumulate = true});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double s = 1.0;
          for (std::size_t p = 0; p < kk; ++p)
            s += (ta ? a[p * m + i] : a[i * kk + p]) * (tb ? b[j * kk + p] : b[p * n + j]);
          CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-14));
        }
    }
}

TEST_CASE("avx2 gemm agrees with the scalar reference") {
  if (!k::available(k::Isa::avx2)) {
    MESSAGE("AVX2 not available on this machine; equivalence test skipped");
    return;
  }
  const auto &ref = k::table(k::Isa::scalar), &simd = k::table(k::Isa::avx2);
  Rng rng(2);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 1 + rng.below(37), n = 1 + rng.below(70), kk = 1 + rng.below(300);
    const bool ta = rng.bernoulli(0.5), tb = rng.bernoulli(0.5), acc = rng.bernoulli(0.5);
    const std::size_t lda = (ta ? m : kk) + rng.below(3), ldb = (tb ? kk : n) + rng.below(3);
    const std::size_t ldc = n + rng.below(3);
    auto a = random_vec((ta ? kk : m) * lda, rng), b = random_vec((tb ? n : kk) * ldb, rng);
    auto c0 = random_vec(m * ldc, rng), c1 = c0;
    k::GemmArgs<float> args{.trans_a = ta, .trans_b = tb, .m = m, .n = n, .k = kk, .a = a.data(),
                            .lda = lda, .b = b.data(), .ldb = ldb, .c = c0.data(), .ldc = ldc,
                            .accumulate = acc};
    ref.gemm(args);
    args.c = c1.data();
    simd.gemm(args);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < ldc; ++j) {
        // Entries past n belong to the caller and must be untouched.
        if (j >= n) {
          CHECK(std::bit_cast<std::uint32_t>(c0[i * ldc + j]) == std::bit_cast<std::uint32_t>(c1[i * ldc + j]));
          continue;
        }
        double bound = acc ? std::abs(c0[i * ldc + j]) : 0.0;
        for (std::size_t p = 0; p < kk; ++p)
          bound += std::abs((ta ? a[p * lda + i] : a[i * lda + p]) * (tb ? b[j * ldb + p] : b[p * ldb + j]));
        CHECK(std::abs(c0[i * ldc + j] - c1[i * ldc + j]) <= 4e-7 * (bound + 1.0) * std::sqrt(double(kk)));
      }
  }
}

TEST_CASE("avx2 squared distances are bit-identical to the scalar reference") {
  if (!k::available(k::Isa::avx2)) {
    MESSAGE("AVX2 not available on this machine; equivalence test skipped");
    return;
  }
  const auto &ref = k::table(k::Isa::scalar), &simd = k::table(k::Isa::avx2);
  Rng rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t nq = 1 + rng.below(70), m = 1 + rng.below(90), d = 1 + rng.below(40);
    auto q = random_vec(nq * d, rng), c = random_vec(d * m, rng);
    std::vector<float> o0(nq * m), o1(nq * m);
    ref.sq_dist({.queries = q.data(), .nq = nq, .d = d, .cand_t = c.data(), .m = m, .out = o0.data()});
    simd.sq_dist({.queries = q.data(), .nq = nq, .d = d, .cand_t = c.data(), .m = m, .out = o1.data()});
    bool same = true;
    for (std::size_t i = 0; i < o0.size(); ++i)
      same = same && std::bit_cast<std::uint32_t>(o0[i]) == std::bit_cast<std::uint32_t>(o1[i]);
    CHECK(same);
  }
}

TEST_CASE("knn graphs do not depend on the kernel variant") {
  if (!k::available(k::Isa::avx2))
    return;
  Rng rng(4);
  auto f = random_tensor<float>({200, 16}, rng);
  KnnGraph g_ref, g_simd;
  {
    IsaScope s(k::Isa::scalar);
    g_ref = knn_graph(f, 9);
  }
  {
    IsaScope s(k::Isa::avx2);
    g_simd = knn_graph(f, 9);
  }
  CHECK(g_ref == g_simd);
}

TEST_CASE("model output agrees across kernel variants") {
  if (!k::available(k::Isa::avx2))
    return;
  Rng init(5);
  auto m = build_vig_unet<float>(ModelConfig::desk(), init);
  auto x = random_tensor<float>({1, 3, 64, 64}, init, 0.0, 1.0);
  Tensor<float> a, b;
  {
    IsaScope s(k::Isa::scalar);
    Rng r(0);
    a = model_forward(m, x, Mode::eval, r);
  }
  {
    IsaScope s(k::Isa::avx2);
    Rng r(0);
    b = model_forward(m, x, Mode::eval, r);
  }
  double max_diff = 0, max_ref = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    max_diff = std::max(max_diff, double(std::abs(a[i] - b[i])));
    max_ref = std::max(max_ref, double(std::abs(a[i])));
  }
  // Graph rows can flip when rounding changes a near-tie, so compare loosely.
  CHECK(max_diff <= 1e-2 * (max_ref + 1.0));
}
