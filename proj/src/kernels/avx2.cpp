// SPDX-License-Identifier: Apache-2.0
// AVX2/FMA float32 kernels. Compiled with -mavx2 -mfma; only reached after a
// runtime CPU check.
#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "pack.hpp"
#include "vigunet/kernels.hpp"

namespace vigunet::kernels::avx2 {

namespace {

constexpr std::size_t kBlockK = 256;

// Rows [i, i+R) x columns [j, j+16) over k in [k0, k1).
template <int R>
inline void gemm_tile16(const GemmArgs<float> &g, std::size_t i, std::size_t j, std::size_t k0,
                        std::size_t k1, bool load_c) {
  __m256 acc[R][2];
  for (int r = 0; r < R; ++r) {
    float *crow = g.c + (i + r) * g.ldc + j;
    acc[r][0] = load_c ? _mm256_loadu_ps(crow) : _mm256_setzero_ps();
    acc[r][1] = load_c ? _mm256_loadu_ps(crow + 8) : _mm256_setzero_ps();
  }
  for (std::size_t p = k0; p < k1; ++p) {
    const float *brow = g.b + p * g.ldb + j;
    const __m256 b0 = _mm256_loadu_ps(brow);
    const __m256 b1 = _mm256_loadu_ps(brow + 8);
    for (int r = 0; r < R; ++r) {
      const __m256 av = _mm256_broadcast_ss(g.a + (i + r) * g.lda + p);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < R; ++r) {
    float *crow = g.c + (i + r) * g.ldc + j;
    _mm256_storeu_ps(crow, acc[r][0]);
    _mm256_storeu_ps(crow + 8, acc[r][1]);
  }
}

template <int R>
inline void gemm_tile8(const GemmArgs<float> &g, std::size_t i, std::size_t j, std::size_t k0,
                       std::size_t k1, bool load_c) {
  __m256 acc[R];
  for (int r = 0; r < R; ++r)
    acc[r] = load_c ? _mm256_loadu_ps(g.c + (i + r) * g.ldc + j) : _mm256_setzero_ps();
  for (std::size_t p = k0; p < k1; ++p) {
    const __m256 b0 = _mm256_loadu_ps(g.b + p * g.ldb + j);
    for (int r = 0; r < R; ++r)
      acc[r] = _mm256_fmadd_ps(_mm256_broadcast_ss(g.a + (i + r) * g.lda + p), b0, acc[r]);
  }
  for (int r = 0; r < R; ++r)
    _mm256_storeu_ps(g.c + (i + r) * g.ldc + j, acc[r]);
}

inline void gemm_tail(const GemmArgs<float> &g, std::size_t i, std::size_t i1, std::size_t j,
                      std::size_t k0, std::size_t k1, bool load_c) {
  for (std::size_t r = i; r < i1; ++r)
    for (std::size_t c = j; c < g.n; ++c) {
      float acc = load_c ? g.c[r * g.ldc + c] : 0.0f;
      for (std::size_t p = k0; p < k1; ++p)
        acc = std::fma(g.a[r * g.lda + p], g.b[p * g.ldb + c], acc);
      g.c[r * g.ldc + c] = acc;
    }
}

template <int R>
inline void gemm_rows(const GemmArgs<float> &g, std::size_t i, std::size_t k0, std::size_t k1,
                      bool load_c) {
  std::size_t j = 0;
  for (; j + 16 <= g.n; j += 16)
    gemm_tile16<R>(g, i, j, k0, k1, load_c);
  for (; j + 8 <= g.n; j += 8)
    gemm_tile8<R>(g, i, j, k0, k1, load_c);
  if (j < g.n)
    gemm_tail(g, i, i + R, j, k0, k1, load_c);
}

void gemm(const GemmArgs<float> &args) {
  std::vector<float> a_buf, b_buf;
  const GemmArgs<float> g = detail::normalize(args, a_buf, b_buf);
  if (g.k == 0) {
    if (!g.accumulate)
      for (std::size_t i = 0; i < g.m; ++i)
        std::fill(g.c + i * g.ldc, g.c + i * g.ldc + g.n, 0.0f);
    return;
  }
  for (std::size_t k0 = 0; k0 < g.k; k0 += kBlockK) {
    const std::size_t k1 = std::min(g.k, k0 + kBlockK);
    const bool load_c = g.accumulate || k0 > 0;
    std::size_t i = 0;
    for (; i + 4 <= g.m; i += 4)
      gemm_rows<4>(g, i, k0, k1, load_c);
    for (; i < g.m; ++i)
      gemm_rows<1>(g, i, k0, k1, load_c);
  }
}

// Same per-pair operation order as the scalar reference: acc = acc + diff*diff,
// k ascending, no fused multiply-add.
template <int R> inline void sq_dist_rows(const SqDistArgs<float> &s, std::size_t i) {
  const float *q[R];
  for (int r = 0; r < R; ++r)
    q[r] = s.queries + (i + r) * s.d;
  std::size_t j = 0;
  for (; j + 8 <= s.m; j += 8) {
    __m256 acc[R];
    for (int r = 0; r < R; ++r)
      acc[r] = _mm256_setzero_ps();
    for (std::size_t p = 0; p < s.d; ++p) {
      const __m256 c = _mm256_loadu_ps(s.cand_t + p * s.m + j);
      for (int r = 0; r < R; ++r) {
        const __m256 diff = _mm256_sub_ps(c, _mm256_broadcast_ss(q[r] + p));
        acc[r] = _mm256_add_ps(acc[r], _mm256_mul_ps(diff, diff));
      }
    }
    for (int r = 0; r < R; ++r)
      _mm256_storeu_ps(s.out + (i + r) * s.m + j, acc[r]);
  }
  for (; j < s.m; ++j)
    for (int r = 0; r < R; ++r) {
      float acc = 0.0f;
      for (std::size_t p = 0; p < s.d; ++p) {
        const float diff = s.cand_t[p * s.m + j] - q[r][p];
        acc = acc + diff * diff;
      }
      s.out[(i + r) * s.m + j] = acc;
    }
}

void sq_dist(const SqDistArgs<float> &args) {
  std::size_t i = 0;
  for (; i + 4 <= args.nq; i += 4)
    sq_dist_rows<4>(args, i);
  for (; i < args.nq; ++i)
    sq_dist_rows<1>(args, i);
}

} // namespace

extern const KernelTable kTable;
const KernelTable kTable{Isa::avx2, &gemm, &sq_dist};

} // namespace vigunet::kernels::avx2
