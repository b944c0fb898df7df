// SPDX-License-Identifier: Apache-2.0
// Dense inner loops with a scalar reference and SIMD variants.
//
// Every variant computes the same function. The squared-distance kernel
// keeps the scalar summation order (sequential over the feature axis,
// separate multiply and add), so its SIMD variants are bit-identical to
// the reference. GEMM variants may use fused multiply-add and agree with
// the reference to rounding.
//
// Float32 calls go through the runtime-selected table; float64 calls
// always use the scalar reference.
#pragma once

#include <cstddef>
#include <string_view>

namespace vigunet::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// C[m,n] (+)= op(A)[m,k] * op(B)[k,n]; op() transposes when the flag is set.
/// A is stored [m,k] (or [k,m] when transposed) with leading dimension lda.
template <typename T> struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  std::size_t m = 0, n = 0, k = 0;
  const T *a = nullptr;
  std::size_t lda = 0;
  const T *b = nullptr;
  std::size_t ldb = 0;
  T *c = nullptr;
  std::size_t ldc = 0;
  bool accumulate = false;
};

/// out[i, j] = sum_k (cand_t[k, j] - queries[i, k])^2.
/// queries is [nq, d] row-major; cand_t is [d, m] (candidates transposed).
template <typename T> struct SqDistArgs {
  const T *queries = nullptr;
  std::size_t nq = 0;
  std::size_t d = 0;
  const T *cand_t = nullptr;
  std::size_t m = 0;
  T *out = nullptr;
};

struct KernelTable {
  Isa isa;
  void (*gemm)(const GemmArgs<float> &);
  void (*sq_dist)(const SqDistArgs<float> &);
};

/// Whether the running CPU (and this build) supports `isa`.
bool available(Isa isa);
const KernelTable &table(Isa isa);

/// Table used by gemm<float>/sq_dist<float>. Picks the best available ISA on
/// first use; VIGUNET_KERNELS=scalar forces the reference.
const KernelTable &active();
void select(Isa isa);

template <typename T> void gemm(const GemmArgs<T> &args);
template <typename T> void sq_dist(const SqDistArgs<T> &args);

namespace scalar {
template <typename T> void gemm(const GemmArgs<T> &args);
template <typename T> void sq_dist(const SqDistArgs<T> &args);
} // namespace scalar

} // namespace vigunet::kernels
