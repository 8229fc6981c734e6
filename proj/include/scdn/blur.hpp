#pragma once

#include <stdexcept>
#include <vector>

#include "scdn/autodiff.hpp"
#include "scdn/tensor.hpp"

namespace scdn {

// Reflect-101 fold (mirror without repeating the edge sample), valid for
// any offset via the 2(n-1) period.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

// Normalized 1-D Gaussian sampled on an odd window. The window size itself
// is the blur level sigma; the standard deviation is sigma/3.
template <class T>
std::vector<T> gaussian_kernel(int sigma) {
  if (sigma < 1 || sigma % 2 == 0)
    throw std::invalid_argument("gaussian_kernel: sigma must be odd and >= 1");
  const int r = sigma / 2;
  std::vector<T> k(static_cast<std::size_t>(sigma));
  if (sigma == 1) {
    k[0] = T(1);
    return k;
  }
  const double std = double(sigma) / 3.0;
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-double(i) * i / (2.0 * std * std));
    k[std::size_t(i + r)] = T(v);
    sum += v;
  }
  for (auto& e : k) e = T(double(e) / sum);
  return k;
}

namespace detail {

// Separable pass along one axis with reflect-101 borders. Used for both the
// forward blur and (as its exact transpose) the backward pass.
template <class T>
void blur_axis_reflect(const Tensor<T>& in, Tensor<T>& out,
                       const std::vector<T>& k, bool horizontal) {
  const Shape s = in.shape();
  const int r = int(k.size()) / 2;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          T acc = T(0);
          if (horizontal) {
            for (int t = -r; t <= r; ++t)
              acc += k[std::size_t(t + r)] *
                     in.at(n, c, y, reflect_index(x + t, s.w));
          } else {
            for (int t = -r; t <= r; ++t)
              acc += k[std::size_t(t + r)] *
                     in.at(n, c, reflect_index(y + t, s.h), x);
          }
          out.at(n, c, y, x) = acc;
        }
}

template <class T>
void blur_axis_reflect_transpose(const Tensor<T>& gout, Tensor<T>& gin,
                                 const std::vector<T>& k, bool horizontal) {
  const Shape s = gout.shape();
  const int r = int(k.size()) / 2;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const T g = gout.at(n, c, y, x);
          if (horizontal) {
            for (int t = -r; t <= r; ++t)
              gin.at(n, c, y, reflect_index(x + t, s.w)) +=
                  k[std::size_t(t + r)] * g;
          } else {
            for (int t = -r; t <= r; ++t)
              gin.at(n, c, reflect_index(y + t, s.h), x) +=
                  k[std::size_t(t + r)] * g;
          }
        }
}

}  // namespace detail

// Separable Gaussian blur with reflect-101 padding; DC gain exactly 1.
template <class T>
Tensor<T> gaussian_blur(const Tensor<T>& img, int sigma) {
  const auto k = gaussian_kernel<T>(sigma);
  Tensor<T> tmp(img.shape()), out(img.shape());
  detail::blur_axis_reflect(img, tmp, k, /*horizontal=*/true);
  detail::blur_axis_reflect(tmp, out, k, /*horizontal=*/false);
  return out;
}

// Differentiable form of the same operator.
template <class T>
Var<T> gaussian_blur(const Var<T>& img, int sigma) {
  const auto k = gaussian_kernel<T>(sigma);
  Tensor<T> tmp(img->value.shape()), out(img->value.shape());
  detail::blur_axis_reflect(img->value, tmp, k, true);
  detail::blur_axis_reflect(tmp, out, k, false);
  return detail::make_op<T>(std::move(out), {img},
      [img = img.get(), k](Node<T>& self) {
        if (!img->requires_grad) return;
        Tensor<T> gtmp(self.grad.shape());
        detail::blur_axis_reflect_transpose(self.grad, gtmp, k, false);
        detail::blur_axis_reflect_transpose(gtmp, img->grad, k, true);
      });
}

// Depthwise valid-mode separable filter: output shrinks by k-1 per axis.
// This is the SSIM window operator.
template <class T>
Var<T> window_filter_valid(const Var<T>& img, const std::vector<T>& k) {
  const Shape s = img->value.shape();
  const int kk = int(k.size());
  if (s.h < kk || s.w < kk)
    throw std::invalid_argument("window_filter_valid: image smaller than window");
  Tensor<T> tmp(s.n, s.c, s.h, s.w - kk + 1);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x + kk <= s.w; ++x) {
          T acc = T(0);
          for (int t = 0; t < kk; ++t)
            acc += k[std::size_t(t)] * img->value.at(n, c, y, x + t);
          tmp.at(n, c, y, x) = acc;
        }
  Tensor<T> out(s.n, s.c, s.h - kk + 1, s.w - kk + 1);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y + kk <= s.h; ++y)
        for (int x = 0; x < tmp.shape().w; ++x) {
          T acc = T(0);
          for (int t = 0; t < kk; ++t)
            acc += k[std::size_t(t)] * tmp.at(n, c, y + t, x);
          out.at(n, c, y, x) = acc;
        }
  return detail::make_op<T>(std::move(out), {img},
      [img = img.get(), k, s](Node<T>& self) {
        if (!img->requires_grad) return;
        const int kk = int(k.size());
        const Shape os = self.grad.shape();
        Tensor<T> gtmp(s.n, s.c, s.h, s.w - kk + 1);
        for (int n = 0; n < os.n; ++n)
          for (int c = 0; c < os.c; ++c)
            for (int y = 0; y < os.h; ++y)
              for (int x = 0; x < os.w; ++x) {
                const T g = self.grad.at(n, c, y, x);
                for (int t = 0; t < kk; ++t)
                  gtmp.at(n, c, y + t, x) += k[std::size_t(t)] * g;
              }
        for (int n = 0; n < s.n; ++n)
          for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
              for (int x = 0; x < gtmp.shape().w; ++x) {
                const T g = gtmp.at(n, c, y, x);
                for (int t = 0; t < kk; ++t)
                  img->grad.at(n, c, y, x + t) += k[std::size_t(t)] * g;
              }
      });
}

// One multi-scale level: window size (odd) and its weight in the BGM sum.
struct BlurLevel {
  int sigma = 3;
  double weight = 1.0;
};

struct BlurBank {
  std::vector<BlurLevel> levels;

  static BlurBank defaults() {
    return BlurBank{{{3, 0.01}, {9, 0.1}, {15, 1.0}}};
  }

  void validate() const {
    for (const auto& l : levels) {
      if (l.sigma < 1 || l.sigma % 2 == 0)
        throw std::invalid_argument("BlurBank: sigma must be odd and >= 1");
      if (l.weight < 0)
        throw std::invalid_argument("BlurBank: weight must be >= 0");
    }
  }
};

}  // namespace scdn
