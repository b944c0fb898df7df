// SPDX-License-Identifier: Apache-2.0
// Adam with bias correction and a cosine-annealed learning rate.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vigunet/tensor.hpp"

namespace vigunet {

template <typename T> struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-4;
  std::size_t step = 0;
  std::vector<std::vector<double>> m; ///< first moments, one per parameter
  std::vector<std::vector<double>> v; ///< second moments
};

/// One bias-corrected Adam update. Throws StateError if a parameter has no
/// gradient buffer; moments are allocated on the first call.
template <typename T> void adam_step(std::span<Tensor<T>> params, AdamState<T> &state);

struct LrSchedule {
  double eta_max = 1e-4;
  double eta_min = 1e-5;
  std::size_t t_max = 200;
};

/// eta_min + (eta_max - eta_min) * (1 + cos(pi * epoch / t_max)) / 2, for
/// epoch in [0, t_max]. Endpoints are returned exactly.
double cosine_lr(const LrSchedule &s, std::size_t epoch);

} // namespace vigunet
