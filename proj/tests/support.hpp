// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "vigunet/blocks.hpp"
#include "vigunet/ops.hpp"
#include "vigunet/rng.hpp"
#include "vigunet/tensor.hpp"

namespace vigunet::testing {

template <typename T = double>
Tensor<T> random_tensor(const Shape &shape, Rng &rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(numel(shape));
  for (auto &x : v)
    x = T(rng.uniform(lo, hi));
  return Tensor<T>(shape, std::move(v));
}

/// sum_i w_i x_i as a recorded scalar; a random weighting makes every
/// output element matter to the checked gradient.
template <typename T> Tensor<T> weighted_sum(const Tensor<T> &x, const std::vector<T> &w) {
  T s = 0;
  for (std::size_t i = 0; i < w.size(); ++i)
    s += w[i] * x[i];
  return Tensor<T>::make_result({1}, {s}, {x}, [x, w](std::span<const T> g) {
    auto dx = x.grad_buffer();
    for (std::size_t i = 0; i < w.size(); ++i)
      dx[i] += g[0] * w[i];
  });
}

struct GradCheckResult {
  double max_abs_err = 0.0;
  double max_ref = 0.0;
  double rel_err() const { return max_abs_err / std::max(max_ref, 1e-12); }
};

/// Compares analytic gradients of `loss()` w.r.t. `params` with central
/// differences. `max_per_tensor` > 0 samples that many entries per tensor.
inline GradCheckResult grad_check(const std::function<Tensor<double>()> &loss,
                                  std::vector<Tensor<double>> params, double h = 1e-5,
                                  std::size_t max_per_tensor = 0, std::uint64_t seed = 99) {
  for (auto &p : params)
    p.zero_grad();
  loss().backward();
  Rng pick(seed);
  GradCheckResult r;
  for (auto &p : params) {
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad())
      std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    std::vector<std::size_t> idx;
    if (max_per_tensor == 0 || max_per_tensor >= p.numel()) {
      for (std::size_t i = 0; i < p.numel(); ++i)
        idx.push_back(i);
    } else {
      for (std::size_t i = 0; i < max_per_tensor; ++i)
        idx.push_back(pick.below(p.numel()));
    }
    NoGradGuard no_grad;
    for (auto i : idx) {
      const double orig = p[i];
      p[i] = orig + h;
      const double up = loss().item();
      p[i] = orig - h;
      const double down = loss().item();
      p[i] = orig;
      const double numeric = (up - down) / (2 * h);
      r.max_abs_err = std::max(r.max_abs_err, std::abs(numeric - analytic[i]));
      r.max_ref = std::max(r.max_ref, std::abs(numeric));
    }
  }
  return r;
}

/// grad_check with every KNN graph recorded on the first forward and
/// replayed afterwards, so central differences never straddle a change of
/// neighbour sets.
inline GradCheckResult grad_check_fixed_graphs(const std::function<Tensor<double>()> &loss,
                                               std::vector<Tensor<double>> params, double h = 1e-6,
                                               std::size_t max_per_tensor = 0) {
  GraphTape tape;
  {
    NoGradGuard no_grad;
    loss();
  }
  return grad_check(
    [&] {
      tape.replay();
      return loss();
    },
    std::move(params), h, max_per_tensor);
}

inline std::vector<double> random_weights(std::size_t n, Rng &rng) {
  std::vector<double> w(n);
  for (auto &x : w)
    x = rng.uniform(-1.0, 1.0);
  return w;
}

} // namespace vigunet::testing

#include <cstdlib>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace vigunet::testing {

/// Fresh scratch directory for one test.
inline std::filesystem::path scratch_dir(const std::string &name) {
  const char *env = std::getenv("VIGUNET_TEST_TMP");
  std::filesystem::path base = env ? std::filesystem::path(env)
                                   : std::filesystem::temp_directory_path() / "vigunet_tests";
  auto dir = base / (name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace vigunet::testing
