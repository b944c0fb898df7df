// SPDX-License-Identifier: Apache-2.0
// Reference kernels. Built with -ffp-contract=off so that a*b+c is never
// fused; the SIMD distance kernel relies on matching this rounding.
#include <algorithm>

#include "pack.hpp"
#include "vigunet/kernels.hpp"

namespace vigunet::kernels::scalar {

template <typename T> void gemm(const GemmArgs<T> &args) {
  std::vector<T> a_buf, b_buf;
  const GemmArgs<T> g = detail::normalize(args, a_buf, b_buf);
  for (std::size_t i = 0; i < g.m; ++i) {
    T *crow = g.c + i * g.ldc;
    if (!g.accumulate)
      std::fill(crow, crow + g.n, T(0));
    const T *arow = g.a + i * g.lda;
    for (std::size_t p = 0; p < g.k; ++p) {
      const T av = arow[p];
      const T *brow = g.b + p * g.ldb;
      for (std::size_t j = 0; j < g.n; ++j)
        crow[j] += av * brow[j];
    }
  }
}

template <typename T> void sq_dist(const SqDistArgs<T> &args) {
  for (std::size_t i = 0; i < args.nq; ++i) {
    const T *q = args.queries + i * args.d;
    T *out = args.out + i * args.m;
    for (std::size_t j = 0; j < args.m; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < args.d; ++p) {
        const T diff = args.cand_t[p * args.m + j] - q[p];
        acc = acc + diff * diff;
      }
      out[j] = acc;
    }
  }
}

template void gemm<float>(const GemmArgs<float> &);
template void gemm<double>(const GemmArgs<double> &);
template void sq_dist<float>(const SqDistArgs<float> &);
template void sq_dist<double>(const SqDistArgs<double> &);

} // namespace vigunet::kernels::scalar
