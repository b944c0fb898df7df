// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "vigunet/kernels.hpp"

namespace vigunet::kernels {

#ifdef VIGUNET_HAVE_AVX2
namespace avx2 {
extern const KernelTable kTable;
}
#endif

namespace {

void scalar_gemm_f32(const GemmArgs<float> &a) { scalar::gemm(a); }
void scalar_sq_dist_f32(const SqDistArgs<float> &a) { scalar::sq_dist(a); }

const KernelTable kScalarTable{Isa::scalar, &scalar_gemm_f32, &scalar_sq_dist_f32};

Isa best_isa() {
  if (const char *env = std::getenv("VIGUNET_KERNELS")) {
    if (std::string(env) == "scalar")
      return Isa::scalar;
  }
  return available(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<const KernelTable *> g_active{nullptr};

} // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
  case Isa::scalar:
    return "scalar";
  case Isa::avx2:
    return "avx2";
  }
  return "unknown";
}

bool available(Isa isa) {
  switch (isa) {
  case Isa::scalar:
    return true;
  case Isa::avx2:
#if defined(VIGUNET_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
  }
  return false;
}

const KernelTable &table(Isa isa) {
  if (!available(isa))
    throw std::runtime_error("kernel ISA not available: " + std::string(isa_name(isa)));
#ifdef VIGUNET_HAVE_AVX2
  if (isa == Isa::avx2)
    return avx2::kTable;
#endif
  return kScalarTable;
}

const KernelTable &active() {
  const KernelTable *t = g_active.load(std::memory_order_acquire);
  if (!t) {
    t = &table(best_isa());
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

void select(Isa isa) { g_active.store(&table(isa), std::memory_order_release); }

template <> void gemm<float>(const GemmArgs<float> &args) { active().gemm(args); }
template <> void gemm<double>(const GemmArgs<double> &args) { scalar::gemm(args); }
template <> void sq_dist<float>(const SqDistArgs<float> &args) { active().sq_dist(args); }
template <> void sq_dist<double>(const SqDistArgs<double> &args) { scalar::sq_dist(args); }

} // namespace vigunet::kernels
