// SPDX-License-Identifier: Apache-2.0
#include "vigunet/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vigunet {

template <typename T> void adam_step(std::span<Tensor<T>> params, AdamState<T> &state) {
  for (const auto &p : params)
    if (!p.has_grad())
      throw StateError("adam_step: parameter of shape " + to_string(p.shape()) +
                       " has no gradient");
  if (state.m.empty()) {
    for (const auto &p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw StateError("adam_step: parameter list changed between steps");

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].data();
    auto grad = params[k].grad();
    auto &m = state.m[k];
    auto &v = state.v[k];
    if (m.size() != data.size())
      throw StateError("adam_step: parameter size changed between steps");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      data[i] = T(double(data[i]) - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

double cosine_lr(const LrSchedule &s, std::size_t epoch) {
  if (s.t_max == 0)
    throw std::invalid_argument("cosine_lr: t_max must be positive");
  if (epoch > s.t_max)
    throw std::out_of_range("cosine_lr: epoch " + std::to_string(epoch) + " beyond t_max " +
                            std::to_string(s.t_max));
  // Written as a convex combination so w = 1 and w = 0 reproduce the
  // endpoints bit-exactly.
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * double(epoch) / double(s.t_max)));
  return s.eta_max * w + s.eta_min * (1.0 - w);
}

template void adam_step(std::span<Tensor<float>>, AdamState<float> &);
template void adam_step(std::span<Tensor<double>>, AdamState<double> &);

} // namespace vigunet
