#pragma once

#include <algorithm>
#include <cmath>

#include "scdn/blur.hpp"
#include "scdn/tensor.hpp"

namespace scdn {

inline constexpr double kPsnrCapDb = 100.0;

// Peak signal-to-noise ratio in dB; zero MSE returns the 100 dB cap so that
// metric records stay finite and sortable.
template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
  check_same_shape(a, b, "psnr");
  if (peak <= 0) throw std::invalid_argument("psnr: peak must be positive");
  double mse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    mse += d * d;
  }
  mse /= double(a.size());
  if (mse == 0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

namespace detail {

// 1-D Gaussian window with explicit std (the SSIM window uses 11/1.5).
template <class T>
std::vector<T> ssim_window(int size, double std) {
  std::vector<T> k(static_cast<std::size_t>(size));
  const int r = size / 2;
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-double(i) * i / (2.0 * std * std));
    k[std::size_t(i + r)] = T(v);
    sum += v;
  }
  for (auto& e : k) e = T(double(e) / sum);
  return k;
}

}  // namespace detail

struct SsimOptions {
  int window = 11;
  double window_std = 1.5;
  double c1 = 0.01 * 0.01;  // (0.01 L)^2, L = 1
  double c2 = 0.03 * 0.03;  // (0.03 L)^2

  // Largest odd window that fits the image; images below 3 px are rejected.
  int effective_window(int h, int w) const {
    const int m = std::min({window, h, w});
    if (m < 3)
      throw std::invalid_argument("ssim: image smaller than minimal window");
    return (m % 2 == 0) ? m - 1 : m;
  }
};

// SSIM map over the valid region, differentiable with respect to both
// inputs. Per-channel maps; callers reduce as needed.
template <class T>
Var<T> ssim_map(const Var<T>& a, const Var<T>& b,
                const SsimOptions& opt = {}) {
  check_same_shape(a->value, b->value, "ssim");
  const Shape s = a->value.shape();
  const int win = opt.effective_window(s.h, s.w);
  const auto k = detail::ssim_window<T>(win, opt.window_std);
  const T c1 = T(opt.c1), c2 = T(opt.c2);

  auto mu_a = window_filter_valid(a, k);
  auto mu_b = window_filter_valid(b, k);
  auto mu_aa = window_filter_valid(mul(a, a), k);
  auto mu_bb = window_filter_valid(mul(b, b), k);
  auto mu_ab = window_filter_valid(mul(a, b), k);

  auto var_a = sub(mu_aa, mul(mu_a, mu_a));
  auto var_b = sub(mu_bb, mul(mu_b, mu_b));
  auto cov = sub(mu_ab, mul(mu_a, mu_b));

  auto num = mul(add_scalar(mul_scalar(mul(mu_a, mu_b), T(2)), c1),
                 add_scalar(mul_scalar(cov, T(2)), c2));
  auto den = mul(add_scalar(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), c1),
                 add_scalar(add(var_a, var_b), c2));
  return div_v(num, den);
}

// Mean SSIM per sample: (n,1,1,1).
template <class T>
Var<T> ssim_per_sample(const Var<T>& a, const Var<T>& b,
                       const SsimOptions& opt = {}) {
  return mean_per_sample(ssim_map(a, b, opt));
}

// Scalar mean SSIM over the whole batch.
template <class T>
double ssim(const Tensor<T>& a, const Tensor<T>& b,
            const SsimOptions& opt = {}) {
  auto av = constant(Tensor<T>(a));
  auto bv = constant(Tensor<T>(b));
  auto m = ssim_map(av, bv, opt);
  return m->value.mean();
}

template <class T>
double ssim_loss(const Tensor<T>& a, const Tensor<T>& b,
                 const SsimOptions& opt = {}) {
  return 1.0 - ssim(a, b, opt);
}

}  // namespace scdn
