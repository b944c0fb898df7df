// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "vigunet/kernels.hpp"

namespace vigunet::kernels::detail {

/// Rewrites a transposed GEMM as the non-transposed case by materializing
/// op(A) and op(B) into `a_buf` / `b_buf` as needed.
template <typename T>
GemmArgs<T> normalize(const GemmArgs<T> &args, std::vector<T> &a_buf, std::vector<T> &b_buf) {
  GemmArgs<T> out = args;
  if (args.trans_a) {
    a_buf.resize(args.m * args.k);
    for (std::size_t p = 0; p < args.k; ++p)
      for (std::size_t i = 0; i < args.m; ++i)
        a_buf[i * args.k + p] = args.a[p * args.lda + i];
    out.a = a_buf.data();
    out.lda = args.k;
    out.trans_a = false;
  }
  if (args.trans_b) {
    b_buf.resize(args.k * args.n);
    for (std::size_t j = 0; j < args.n; ++j)
      for (std::size_t p = 0; p < args.k; ++p)
        b_buf[p * args.n + j] = args.b[j * args.ldb + p];
    out.b = b_buf.data();
    out.ldb = args.n;
    out.trans_b = false;
  }
  return out;
}

} // namespace vigunet::kernels::detail
