// SPDX-License-Identifier: Apache-2.0
#include "vigunet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "vigunet/kernels.hpp"

namespace vigunet {

namespace {

void expect_rank(const Shape &s, std::size_t rank, const char *what) {
  if (s.size() != rank)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(s));
}

struct ConvGeometry {
  std::size_t batch, in_ch, in_h, in_w;
  std::size_t out_ch, kh, kw, stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_ch * kh * kw; }
  std::size_t out_pixels() const { return out_h * out_w; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// col[(c*kh + ky)*kw + kx, oy*out_w + ox] = input[c, oy*s + ky - pad, ox*s + kx - pad]
template <typename T> void im2col(const ConvGeometry &g, const T *in, T *col) {
  const std::size_t npix = g.out_pixels();
  for (std::size_t c = 0; c < g.in_ch; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T *row = col + ((c * g.kh + ky) * g.kw + kx) * npix;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = std::ptrdiff_t(oy * g.stride + ky) - std::ptrdiff_t(g.pad);
          T *dst = row + oy * g.out_w;
          if (iy < 0 || iy >= std::ptrdiff_t(g.in_h)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T *src = in + (c * g.in_h + std::size_t(iy)) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = std::ptrdiff_t(ox * g.stride + kx) - std::ptrdiff_t(g.pad);
            dst[ox] = (ix < 0 || ix >= std::ptrdiff_t(g.in_w)) ? T(0) : src[ix];
          }
        }
      }
}

template <typename T> void col2im_add(const ConvGeometry &g, const T *col, T *in) {
  const std::size_t npix = g.out_pixels();
  for (std::size_t c = 0; c < g.in_ch; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T *row = col + ((c * g.kh + ky) * g.kw + kx) * npix;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = std::ptrdiff_t(oy * g.stride + ky) - std::ptrdiff_t(g.pad);
          if (iy < 0 || iy >= std::ptrdiff_t(g.in_h))
            continue;
          T *dst = in + (c * g.in_h + std::size_t(iy)) * g.in_w;
          const T *src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = std::ptrdiff_t(ox * g.stride + kx) - std::ptrdiff_t(g.pad);
            if (ix >= 0 && ix < std::ptrdiff_t(g.in_w))
              dst[ix] += src[ox];
          }
        }
      }
}

template <typename T> T normal_cdf(T x) {
  return T(0.5) * std::erfc(-x / std::numbers::sqrt2_v<T>);
}

template <typename T> T normal_pdf(T x) {
  return std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
}

} // namespace

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t padding) {
  if (stride == 0)
    throw std::invalid_argument("conv stride must be positive");
  if (in + 2 * padding < kernel)
    throw ShapeError("conv kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(in + 2 * padding));
  return (in + 2 * padding - kernel) / stride + 1;
}

template <typename T>
ConvParams<T> ConvParams<T>::kaiming(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                                     std::size_t stride, std::size_t padding, Rng &rng) {
  if (kernel % 2 == 0)
    throw std::invalid_argument("conv kernel size must be odd");
  if (stride != 1 && stride != 2)
    throw std::invalid_argument("conv stride must be 1 or 2");
  ConvParams p;
  const std::size_t fan_in = in_ch * kernel * kernel;
  // Kaiming-uniform with a = sqrt(5): bound = 1/sqrt(fan_in).
  const double bound = 1.0 / std::sqrt(double(fan_in));
  std::vector<T> w(out_ch * fan_in);
  for (auto &v : w)
    v = T(rng.uniform(-bound, bound));
  p.weight = Tensor<T>({out_ch, in_ch, kernel, kernel}, std::move(w));
  p.weight.set_requires_grad(true);
  p.bias = Tensor<T>::zeros({out_ch});
  p.bias.set_requires_grad(true);
  p.stride = stride;
  p.padding = padding;
  return p;
}

template <typename T> BatchNormState<T> BatchNormState<T>::create(std::size_t channels) {
  BatchNormState s;
  s.gamma = Tensor<T>::full({channels}, T(1));
  s.gamma.set_requires_grad(true);
  s.beta = Tensor<T>::zeros({channels});
  s.beta.set_requires_grad(true);
  s.running_mean = Tensor<T>::zeros({channels});
  s.running_var = Tensor<T>::full({channels}, T(1));
  return s;
}

template <typename T> Tensor<T> conv2d(const Tensor<T> &input, const ConvParams<T> &p) {
  expect_rank(input.shape(), 4, "conv2d input");
  expect_rank(p.weight.shape(), 4, "conv2d weight");
  if (input.dim(1) != p.in_channels())
    throw ShapeError("conv2d: input has " + std::to_string(input.dim(1)) +
                     " channels, weight expects " + std::to_string(p.in_channels()));
  if (p.bias.defined() && p.bias.numel() != p.out_channels())
    throw ShapeError("conv2d: bias size does not match output channels");

  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_ch = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.out_ch = p.out_channels();
  g.kh = p.kernel_h();
  g.kw = p.kernel_w();
  g.stride = p.stride;
  g.pad = p.padding;
  g.out_h = conv_out_size(g.in_h, g.kh, g.stride, g.pad);
  g.out_w = conv_out_size(g.in_w, g.kw, g.stride, g.pad);

  const std::size_t npix = g.out_pixels();
  const std::size_t in_plane = g.in_ch * g.in_h * g.in_w;
  const std::size_t out_plane = g.out_ch * npix;
  std::vector<T> out(g.batch * out_plane);
  std::vector<T> col(g.pointwise() ? 0 : g.patch() * npix);

  const T *x = input.data().data();
  const T *w = p.weight.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    const T *src = x + b * in_plane;
    if (!g.pointwise()) {
      im2col(g, src, col.data());
      src = col.data();
    }
    T *dst = out.data() + b * out_plane;
    if (p.bias.defined())
      for (std::size_t o = 0; o < g.out_ch; ++o)
        std::fill(dst + o * npix, dst + (o + 1) * npix, p.bias[o]);
    kernels::gemm<T>({.m = g.out_ch, .n = npix, .k = g.patch(), .a = w, .lda = g.patch(),
                      .b = src, .ldb = npix, .c = dst, .ldc = npix,
                      .accumulate = p.bias.defined()});
  }

  Shape out_shape{g.batch, g.out_ch, g.out_h, g.out_w};
  return Tensor<T>::make_result(
    std::move(out_shape), std::move(out), {input, p.weight, p.bias},
    [input, weight = p.weight, bias = p.bias, g](std::span<const T> gout) {
      const std::size_t npix = g.out_pixels();
      const std::size_t in_plane = g.in_ch * g.in_h * g.in_w;
      const std::size_t out_plane = g.out_ch * npix;
      std::vector<T> col(g.pointwise() ? 0 : g.patch() * npix);
      std::vector<T> dcol(g.pointwise() ? 0 : g.patch() * npix);
      const T *x = input.data().data();
      for (std::size_t b = 0; b < g.batch; ++b) {
        const T *dy = gout.data() + b * out_plane;
        if (weight.requires_grad()) {
          const T *src = x + b * in_plane;
          if (!g.pointwise()) {
            im2col(g, src, col.data());
            src = col.data();
          }
          kernels::gemm<T>({.trans_b = true, .m = g.out_ch, .n = g.patch(), .k = npix, .a = dy,
                            .lda = npix, .b = src, .ldb = npix,
                            .c = weight.grad_buffer().data(), .ldc = g.patch(),
                            .accumulate = true});
        }
        if (bias.defined() && bias.requires_grad()) {
          auto gb = bias.grad_buffer();
          for (std::size_t o = 0; o < g.out_ch; ++o) {
            T acc = T(0);
            for (std::size_t q = 0; q < npix; ++q)
              acc += dy[o * npix + q];
            gb[o] += acc;
          }
        }
        if (input.requires_grad()) {
          T *dx = input.grad_buffer().data() + b * in_plane;
          if (g.pointwise()) {
            kernels::gemm<T>({.trans_a = true, .m = g.in_ch, .n = npix, .k = g.out_ch,
                              .a = weight.data().data(), .lda = g.in_ch, .b = dy, .ldb = npix,
                              .c = dx, .ldc = npix, .accumulate = true});
          } else {
            kernels::gemm<T>({.trans_a = true, .m = g.patch(), .n = npix, .k = g.out_ch,
                              .a = weight.data().data(), .lda = g.patch(), .b = dy,
                              .ldb = npix, .c = dcol.data(), .ldc = npix});
            col2im_add(g, dcol.data(), dx);
          }
        }
      }
    });
}

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T> &input, BatchNormState<T> &state, Mode mode) {
  expect_rank(input.shape(), 4, "batch_norm2d input");
  const std::size_t B = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  if (C != state.channels())
    throw ShapeError("batch_norm2d: input has " + std::to_string(C) +
                     " channels, state has " + std::to_string(state.channels()));
  if (state.eps <= 0)
    throw StateError("batch_norm2d: eps must be positive");
  if (mode == Mode::eval && !state.initialized())
    throw StateError("batch_norm2d: eval mode with uninitialized running statistics");
  if (mode == Mode::train && !state.initialized()) {
    state.running_mean = Tensor<T>::zeros({C});
    state.running_var = Tensor<T>::full({C}, T(1));
  }

  const std::size_t count = B * HW;
  const T *x = input.data().data();
  std::vector<T> mean(C), invstd(C);
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < C; ++c) {
      T s = 0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t q = 0; q < HW; ++q)
          s += x[(b * C + c) * HW + q];
      const T mu = s / T(count);
      T ss = 0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t q = 0; q < HW; ++q) {
          const T d = x[(b * C + c) * HW + q] - mu;
          ss += d * d;
        }
      const T var = ss / T(count);
      mean[c] = mu;
      invstd[c] = T(1) / std::sqrt(var + T(state.eps));
      const T unbiased = count > 1 ? ss / T(count - 1) : var;
      const T m = T(state.momentum);
      state.running_mean[c] = (T(1) - m) * state.running_mean[c] + m * mu;
      state.running_var[c] = (T(1) - m) * state.running_var[c] + m * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = state.running_mean[c];
      invstd[c] = T(1) / std::sqrt(state.running_var[c] + T(state.eps));
    }
  }

  std::vector<T> xhat(input.numel()), out(input.numel());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const T ga = state.gamma[c], be = state.beta[c];
      for (std::size_t q = 0; q < HW; ++q) {
        const std::size_t i = (b * C + c) * HW + q;
        xhat[i] = (x[i] - mean[c]) * invstd[c];
        out[i] = ga * xhat[i] + be;
      }
    }

  return Tensor<T>::make_result(
    input.shape(), std::move(out), {input, state.gamma, state.beta},
    [input, gamma = state.gamma, beta = state.beta, xhat = std::move(xhat),
     invstd = std::move(invstd), mode, B, C, HW](std::span<const T> gout) {
      const std::size_t count = B * HW;
      for (std::size_t c = 0; c < C; ++c) {
        T sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t q = 0; q < HW; ++q) {
            const std::size_t i = (b * C + c) * HW + q;
            sum_dy += gout[i];
            sum_dy_xhat += gout[i] * xhat[i];
          }
        if (gamma.requires_grad())
          gamma.grad_buffer()[c] += sum_dy_xhat;
        if (beta.requires_grad())
          beta.grad_buffer()[c] += sum_dy;
        if (!input.requires_grad())
          continue;
        auto dx = input.grad_buffer();
        const T ga = gamma[c];
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t q = 0; q < HW; ++q) {
            const std::size_t i = (b * C + c) * HW + q;
            if (mode == Mode::train)
              dx[i] += ga * invstd[c] / T(count) *
                       (T(count) * gout[i] - sum_dy - xhat[i] * sum_dy_xhat);
            else
              dx[i] += ga * invstd[c] * gout[i];
          }
      }
    });
}

template <typename T> Tensor<T> gelu(const Tensor<T> &input) {
  std::vector<T> out(input.numel());
  const auto x = input.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = x[i] * normal_cdf(x[i]);
  return Tensor<T>::make_result(input.shape(), std::move(out), {input},
                                [input](std::span<const T> gout) {
                                  auto dx = input.grad_buffer();
                                  const auto x = input.data();
                                  for (std::size_t i = 0; i < dx.size(); ++i)
                                    dx[i] += gout[i] * (normal_cdf(x[i]) + x[i] * normal_pdf(x[i]));
                                });
}

namespace {

struct LinearTap {
  std::size_t i0, i1;
  double w1; // weight of i1; i0 gets 1 - w1
};

// Source taps for half-pixel-center sampling, clamped at the border.
std::vector<LinearTap> bilinear_taps(std::size_t in, std::size_t scale) {
  std::vector<LinearTap> taps(in * scale);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (double(o) + 0.5) / double(scale) - 0.5;
    if (src < 0)
      src = 0;
    const std::size_t i0 = std::min(std::size_t(src), in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - double(i0)};
  }
  return taps;
}

} // namespace

template <typename T> Tensor<T> bilinear_upsample(const Tensor<T> &input, std::size_t scale) {
  expect_rank(input.shape(), 4, "bilinear_upsample input");
  if (scale < 1)
    throw std::invalid_argument("bilinear_upsample: scale must be >= 1");
  if (scale == 1)
    return input;
  const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t OH = H * scale, OW = W * scale;
  const auto ty = bilinear_taps(H, scale), tx = bilinear_taps(W, scale);
  std::vector<T> out(B * C * OH * OW);
  const T *x = input.data().data();
  for (std::size_t p = 0; p < B * C; ++p) {
    const T *src = x + p * H * W;
    T *dst = out.data() + p * OH * OW;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      const auto &a = ty[oy];
      const T wy1 = T(a.w1), wy0 = T(1) - wy1;
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const auto &c = tx[ox];
        const T wx1 = T(c.w1), wx0 = T(1) - wx1;
        dst[oy * OW + ox] = wy0 * (wx0 * src[a.i0 * W + c.i0] + wx1 * src[a.i0 * W + c.i1]) +
                            wy1 * (wx0 * src[a.i1 * W + c.i0] + wx1 * src[a.i1 * W + c.i1]);
      }
    }
  }
  return Tensor<T>::make_result(
    {B, C, OH, OW}, std::move(out), {input},
    [input, ty, tx, B, C, H, W, OH, OW](std::span<const T> gout) {
      auto dx = input.grad_buffer();
      for (std::size_t p = 0; p < B * C; ++p) {
        T *dst = dx.data() + p * H * W;
        const T *g = gout.data() + p * OH * OW;
        for (std::size_t oy = 0; oy < OH; ++oy) {
          const auto &a = ty[oy];
          const T wy1 = T(a.w1), wy0 = T(1) - wy1;
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const auto &c = tx[ox];
            const T wx1 = T(c.w1), wx0 = T(1) - wx1;
            const T v = g[oy * OW + ox];
            dst[a.i0 * W + c.i0] += v * wy0 * wx0;
            dst[a.i0 * W + c.i1] += v * wy0 * wx1;
            dst[a.i1 * W + c.i0] += v * wy1 * wx0;
            dst[a.i1 * W + c.i1] += v * wy1 * wx1;
          }
        }
      }
    });
}

template <typename T>
Tensor<T> droppath(const Tensor<T> &input, double rate, Mode mode, Rng &rng) {
  if (!(rate >= 0.0 && rate <= 1.0))
    throw std::invalid_argument("droppath: rate must lie in [0, 1], got " + std::to_string(rate));
  if (mode == Mode::eval || rate == 0.0)
    return input;
  const std::size_t B = input.dim(0);
  const std::size_t per = input.numel() / B;
  std::vector<T> factor(B, T(0));
  if (rate < 1.0)
    for (auto &f : factor)
      f = rng.bernoulli(1.0 - rate) ? T(1.0 / (1.0 - rate)) : T(0);
  std::vector<T> out(input.numel());
  const auto x = input.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < per; ++i)
      out[b * per + i] = x[b * per + i] * factor[b];
  return Tensor<T>::make_result(input.shape(), std::move(out), {input},
                                [input, factor, per](std::span<const T> gout) {
                                  auto dx = input.grad_buffer();
                                  for (std::size_t i = 0; i < dx.size(); ++i)
                                    dx[i] += gout[i] * factor[i / per];
                                });
}

template <typename T> Tensor<T> avg_pool2d(const Tensor<T> &input, std::size_t r) {
  expect_rank(input.shape(), 4, "avg_pool2d input");
  if (r == 0)
    throw std::invalid_argument("avg_pool2d: factor must be positive");
  if (r == 1)
    return input;
  const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H % r || W % r)
    throw ShapeError("avg_pool2d: " + to_string(input.shape()) + " not divisible by " +
                     std::to_string(r));
  const std::size_t OH = H / r, OW = W / r;
  const T inv = T(1) / T(r * r);
  std::vector<T> out(B * C * OH * OW, T(0));
  const auto x = input.data();
  for (std::size_t p = 0; p < B * C; ++p)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        out[(p * OH + y / r) * OW + xx / r] += x[(p * H + y) * W + xx];
  for (auto &v : out)
    v *= inv;
  return Tensor<T>::make_result({B, C, OH, OW}, std::move(out), {input},
                                [input, B, C, H, W, OH, OW, r, inv](std::span<const T> gout) {
                                  auto dx = input.grad_buffer();
                                  for (std::size_t p = 0; p < B * C; ++p)
                                    for (std::size_t y = 0; y < H; ++y)
                                      for (std::size_t xx = 0; xx < W; ++xx)
                                        dx[(p * H + y) * W + xx] +=
                                          gout[(p * OH + y / r) * OW + xx / r] * inv;
                                });
}

template <typename T> Tensor<T> add(const Tensor<T> &a, const Tensor<T> &b) {
  const bool broadcast = a.shape() != b.shape();
  if (broadcast) {
    Shape expect = a.shape();
    expect[0] = 1;
    if (b.shape() != expect)
      throw ShapeError("add: incompatible shapes " + to_string(a.shape()) + " and " +
                       to_string(b.shape()));
  }
  const std::size_t per = b.numel();
  std::vector<T> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = x[i] + y[i % per];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b},
                                [a, b, per](std::span<const T> gout) {
                                  if (a.requires_grad()) {
                                    auto da = a.grad_buffer();
                                    for (std::size_t i = 0; i < da.size(); ++i)
                                      da[i] += gout[i];
                                  }
                                  if (b.requires_grad()) {
                                    auto db = b.grad_buffer();
                                    for (std::size_t i = 0; i < gout.size(); ++i)
                                      db[i % per] += gout[i];
                                  }
                                });
}

template <typename T> Tensor<T> scale(const Tensor<T> &a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto &v : out)
    v *= factor;
  return Tensor<T>::make_result(a.shape(), std::move(out), {a},
                                [a, factor](std::span<const T> gout) {
                                  auto da = a.grad_buffer();
                                  for (std::size_t i = 0; i < da.size(); ++i)
                                    da[i] += gout[i] * factor;
                                });
}

template <typename T> Tensor<T> sum(const Tensor<T> &a) {
  T s = 0;
  for (T v : a.data())
    s += v;
  return Tensor<T>::make_result({1}, {s}, {a}, [a](std::span<const T> gout) {
    auto da = a.grad_buffer();
    for (auto &v : da)
      v += gout[0];
  });
}

template <typename T> Tensor<T> sigmoid(const Tensor<T> &a) {
  std::vector<T> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = T(1) / (T(1) + std::exp(-x[i]));
  std::vector<T> saved = out;
  return Tensor<T>::make_result(a.shape(), std::move(out), {a},
                                [a, saved = std::move(saved)](std::span<const T> gout) {
                                  auto da = a.grad_buffer();
                                  for (std::size_t i = 0; i < da.size(); ++i)
                                    da[i] += gout[i] * saved[i] * (T(1) - saved[i]);
                                });
}

template <typename T> Tensor<T> to_nodes(const Tensor<T> &x) {
  expect_rank(x.shape(), 4, "to_nodes input");
  const std::size_t B = x.dim(0), C = x.dim(1), N = x.dim(2) * x.dim(3);
  std::vector<T> out(x.numel());
  const auto src = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t n = 0; n < N; ++n)
        out[(b * N + n) * C + c] = src[(b * C + c) * N + n];
  return Tensor<T>::make_result({B, N, C}, std::move(out), {x},
                                [x, B, C, N](std::span<const T> gout) {
                                  auto dx = x.grad_buffer();
                                  for (std::size_t b = 0; b < B; ++b)
                                    for (std::size_t c = 0; c < C; ++c)
                                      for (std::size_t n = 0; n < N; ++n)
                                        dx[(b * C + c) * N + n] += gout[(b * N + n) * C + c];
                                });
}

template <typename T>
Tensor<T> from_nodes(const Tensor<T> &nodes, std::size_t h, std::size_t w) {
  expect_rank(nodes.shape(), 3, "from_nodes input");
  const std::size_t B = nodes.dim(0), N = nodes.dim(1), C = nodes.dim(2);
  if (N != h * w)
    throw ShapeError("from_nodes: " + std::to_string(N) + " nodes cannot form " +
                     std::to_string(h) + "x" + std::to_string(w));
  std::vector<T> out(nodes.numel());
  const auto src = nodes.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        out[(b * C + c) * N + n] = src[(b * N + n) * C + c];
  return Tensor<T>::make_result({B, C, h, w}, std::move(out), {nodes},
                                [nodes, B, C, N](std::span<const T> gout) {
                                  auto dx = nodes.grad_buffer();
                                  for (std::size_t b = 0; b < B; ++b)
                                    for (std::size_t n = 0; n < N; ++n)
                                      for (std::size_t c = 0; c < C; ++c)
                                        dx[(b * N + n) * C + c] += gout[(b * C + c) * N + n];
                                });
}

#define VIGUNET_INSTANTIATE_OPS(T)                                                             \
  template struct ConvParams<T>;                                                               \
  template struct BatchNormState<T>;                                                           \
  template Tensor<T> conv2d(const Tensor<T> &, const ConvParams<T> &);                         \
  template Tensor<T> batch_norm2d(const Tensor<T> &, BatchNormState<T> &, Mode);               \
  template Tensor<T> gelu(const Tensor<T> &);                                                  \
  template Tensor<T> bilinear_upsample(const Tensor<T> &, std::size_t);                        \
  template Tensor<T> droppath(const Tensor<T> &, double, Mode, Rng &);                         \
  template Tensor<T> avg_pool2d(const Tensor<T> &, std::size_t);                               \
  template Tensor<T> add(const Tensor<T> &, const Tensor<T> &);                                \
  template Tensor<T> scale(const Tensor<T> &, T);                                              \
  template Tensor<T> sum(const Tensor<T> &);                                                   \
  template Tensor<T> sigmoid(const Tensor<T> &);                                               \
  template Tensor<T> to_nodes(const Tensor<T> &);                                              \
  template Tensor<T> from_nodes(const Tensor<T> &, std::size_t, std::size_t);

VIGUNET_INSTANTIATE_OPS(float)
VIGUNET_INSTANTIATE_OPS(double)

} // namespace vigunet
