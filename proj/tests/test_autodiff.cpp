#include <catch2/catch_amalgamated.hpp>

#include "scdn/autodiff.hpp"
#include "scdn/blur.hpp"
#include "scdn/rng.hpp"

#include "test_util.hpp"

using namespace scdn;

namespace {

// Probes d(sum(op(x) * W))/dx against central differences, with a fixed
// random weighting W so element permutation bugs cannot cancel out.
template <class T>
void check_unary(const std::function<Var<T>(const Var<T>&)>& op,
                 Tensor<T> x0, double h, double tol, double lo = 0.05,
                 double hi = 0.95) {
  Rng rng(2024);
  x0.fill_uniform(rng, lo, hi);
  auto xv = make_var(Tensor<T>(x0), true);
  auto out = op(xv);
  Tensor<T> wts(out->value.shape());
  wts.fill_uniform(rng, -1.0, 1.0);
  auto loss = sum_all(mul(out, constant(Tensor<T>(wts))));
  backward(loss);

  auto f = [&](const Tensor<T>& x) {
    auto out2 = op(constant(Tensor<T>(x)));
    double acc = 0;
    for (std::size_t i = 0; i < out2->value.size(); ++i)
      acc += double(out2->value[i]) * double(wts[i]);
    return acc;
  };
  const auto fd = testutil::fd_gradient<T>(f, x0, h);
  REQUIRE(testutil::rel_error(xv->grad, fd) <= tol);
}

template <class T>
void run_unary_suite(double h, double tol) {
  Tensor<T> x(2, 2, 5, 4);
  check_unary<T>([](const Var<T>& v) { return relu(add_scalar(v, T(-0.5))); },
                 x, h, tol);
  check_unary<T>(
      [](const Var<T>& v) { return leaky_relu(add_scalar(v, T(-0.5)), T(0.2)); },
      x, h, tol);
  check_unary<T>([](const Var<T>& v) { return tanh_v(v); }, x, h, tol);
  check_unary<T>([](const Var<T>& v) { return abs_v(add_scalar(v, T(-0.5))); },
                 x, h, tol, 0.55, 0.95);  // keep away from the |.| kink
  check_unary<T>([](const Var<T>& v) { return rsqrt_eps(v, T(0.01)); }, x, h,
                 tol);
  check_unary<T>([](const Var<T>& v) { return affine(v, T(3), T(-1)); }, x, h,
                 tol);
  check_unary<T>([](const Var<T>& v) { return mean_per_sample(v); }, x, h, tol);
  check_unary<T>([](const Var<T>& v) { return mean_hw(v); }, x, h, tol);
  check_unary<T>([](const Var<T>& v) { return upsample_nearest2(v); }, x, h,
                 tol);
  check_unary<T>([](const Var<T>& v) { return slice_c(v, 1, 1); }, x, h, tol);
  check_unary<T>([](const Var<T>& v) { return gaussian_blur(v, 3); }, x, h,
                 tol);
  check_unary<T>([](const Var<T>& v) { return gaussian_blur(v, 9); }, x, h,
                 tol);
  check_unary<T>(
      [](const Var<T>& v) {
        return window_filter_valid(v, gaussian_kernel<T>(3));
      },
      x, h, tol);
  check_unary<T>(
      [](const Var<T>& v) { return bsub(v, mean_hw(v)); }, x, h, tol);
  check_unary<T>(
      [](const Var<T>& v) { return bmul(v, mean_hw(v)); }, x, h, tol);
}

template <class T>
void run_binary_suite(double h, double tol) {
  Rng rng(77);
  Tensor<T> a0(1, 2, 4, 4), b0(1, 2, 4, 4);
  a0.fill_uniform(rng, 0.2, 0.8);
  b0.fill_uniform(rng, 0.3, 0.9);

  auto check_pair = [&](auto op) {
    auto av = make_var(Tensor<T>(a0), true);
    auto bv = make_var(Tensor<T>(b0), true);
    auto loss = mean_all(op(av, bv));
    backward(loss);
    auto fa = [&](const Tensor<T>& a) {
      return double(scalar_value(
          mean_all(op(constant(Tensor<T>(a)), constant(Tensor<T>(b0))))));
    };
    auto fb = [&](const Tensor<T>& b) {
      return double(scalar_value(
          mean_all(op(constant(Tensor<T>(a0)), constant(Tensor<T>(b))))));
    };
    REQUIRE(testutil::rel_error(av->grad,
                                testutil::fd_gradient<T>(fa, a0, h)) <= tol);
    REQUIRE(testutil::rel_error(bv->grad,
                                testutil::fd_gradient<T>(fb, b0, h)) <= tol);
  };

  check_pair([](const Var<T>& a, const Var<T>& b) { return add(a, b); });
  check_pair([](const Var<T>& a, const Var<T>& b) { return sub(a, b); });
  check_pair([](const Var<T>& a, const Var<T>& b) { return mul(a, b); });
  check_pair([](const Var<T>& a, const Var<T>& b) { return div_v(a, b); });
  check_pair([](const Var<T>& a, const Var<T>& b) { return concat_c(a, b); });
  check_pair([](const Var<T>& a, const Var<T>& b) {
    return mul(a, a);  // shared-node accumulation; b enters linearly
  });
}

template <class T>
void run_conv_suite(double h, double tol, int stride, int pad) {
  Rng rng(55);
  Tensor<T> x0(2, 2, 6, 6), w0(3, 2, 3, 3), b0(1, 3, 1, 1);
  x0.fill_uniform(rng, 0.1, 0.9);
  w0.fill_uniform(rng, -0.5, 0.5);
  b0.fill_uniform(rng, -0.2, 0.2);

  auto xv = make_var(Tensor<T>(x0), true);
  auto wv = make_var(Tensor<T>(w0), true);
  auto bv = make_var(Tensor<T>(b0), true);
  auto out = conv2d(xv, wv, bv, stride, pad);
  Tensor<T> wts(out->value.shape());
  wts.fill_uniform(rng, -1.0, 1.0);
  auto loss = sum_all(mul(out, constant(Tensor<T>(wts))));
  backward(loss);

  auto eval = [&](const Tensor<T>& x, const Tensor<T>& w,
                  const Tensor<T>& b) {
    auto o = conv2d(constant(Tensor<T>(x)), constant(Tensor<T>(w)),
                    constant(Tensor<T>(b)), stride, pad);
    double acc = 0;
    for (std::size_t i = 0; i < o->value.size(); ++i)
      acc += double(o->value[i]) * double(wts[i]);
    return acc;
  };
  auto fx = [&](const Tensor<T>& x) { return eval(x, w0, b0); };
  auto fw = [&](const Tensor<T>& w) { return eval(x0, w, b0); };
  auto fb = [&](const Tensor<T>& b) { return eval(x0, w0, b); };
  REQUIRE(testutil::rel_error(xv->grad, testutil::fd_gradient<T>(fx, x0, h)) <=
          tol);
  REQUIRE(testutil::rel_error(wv->grad, testutil::fd_gradient<T>(fw, w0, h)) <=
          tol);
  REQUIRE(testutil::rel_error(bv->grad, testutil::fd_gradient<T>(fb, b0, h)) <=
          tol);
}

}  // namespace

TEST_CASE("unary op gradients, 64-bit") { run_unary_suite<double>(1e-4, 1e-6); }
TEST_CASE("unary op gradients, 32-bit") { run_unary_suite<float>(1e-2, 1e-3); }
TEST_CASE("binary op gradients, 64-bit") { run_binary_suite<double>(1e-4, 1e-6); }
TEST_CASE("binary op gradients, 32-bit") { run_binary_suite<float>(1e-2, 1e-3); }
TEST_CASE("conv2d gradients, stride 1, 64-bit") {
  run_conv_suite<double>(1e-4, 1e-6, 1, 1);
}
TEST_CASE("conv2d gradients, stride 2, 64-bit") {
  run_conv_suite<double>(1e-4, 1e-6, 2, 1);
}
TEST_CASE("conv2d gradients, stride 2 k=3 pad 0") {
  run_conv_suite<double>(1e-4, 1e-6, 2, 0);
}
TEST_CASE("conv2d gradients, 32-bit") { run_conv_suite<float>(1e-2, 1e-3, 1, 1); }

TEST_CASE("affine_channel gradients") {
  Rng rng(66);
  Tensor<double> x0(2, 3, 4, 4), g0(1, 3, 1, 1), be0(1, 3, 1, 1);
  x0.fill_uniform(rng, 0.1, 0.9);
  g0.fill_uniform(rng, 0.5, 1.5);
  be0.fill_uniform(rng, -0.3, 0.3);
  auto xv = make_var(Tensor<double>(x0), true);
  auto gv = make_var(Tensor<double>(g0), true);
  auto bv = make_var(Tensor<double>(be0), true);
  auto loss = mean_all(mul(affine_channel(xv, gv, bv),
                           affine_channel(xv, gv, bv)));
  backward(loss);
  auto f = [&](const Tensor<double>& x, const Tensor<double>& g,
               const Tensor<double>& b) {
    auto o = affine_channel(constant(Tensor<double>(x)),
                            constant(Tensor<double>(g)),
                            constant(Tensor<double>(b)));
    return double(scalar_value(mean_all(mul(o, o))));
  };
  auto fx = [&](const Tensor<double>& t) { return f(t, g0, be0); };
  auto fg = [&](const Tensor<double>& t) { return f(x0, t, be0); };
  auto fb = [&](const Tensor<double>& t) { return f(x0, g0, t); };
  REQUIRE(testutil::rel_error(xv->grad,
                              testutil::fd_gradient<double>(fx, x0, 1e-4)) <=
          1e-6);
  REQUIRE(testutil::rel_error(gv->grad,
                              testutil::fd_gradient<double>(fg, g0, 1e-4)) <=
          1e-6);
  REQUIRE(testutil::rel_error(bv->grad,
                              testutil::fd_gradient<double>(fb, be0, 1e-4)) <=
          1e-6);
}

TEST_CASE("detach stops gradients") {
  Tensor<double> x0(1, 1, 2, 2, 0.5);
  auto xv = make_var(Tensor<double>(x0), true);
  auto d = detach(mul(xv, xv));
  REQUIRE_FALSE(d->requires_grad);
  auto loss = mean_all(mul(d, d));
  REQUIRE_FALSE(loss->requires_grad);
}

TEST_CASE("repeated backward over a shared subgraph does not accumulate stale grads") {
  Rng rng(88);
  Tensor<double> x0(1, 1, 3, 3);
  x0.fill_uniform(rng);
  auto xv = make_var(Tensor<double>(x0), true);
  auto shared = mul(xv, xv);
  auto l1 = mean_all(shared);
  auto l2 = sum_all(shared);
  backward(l1);
  Tensor<double> g1 = xv->grad;
  backward(l2);
  backward(l1);
  REQUIRE(xv->grad == g1);
}

TEST_CASE("backward requires a scalar root") {
  auto xv = make_var(Tensor<double>(1, 1, 2, 2, 0.5), true);
  REQUIRE_THROWS_AS(backward(mul(xv, xv)), std::invalid_argument);
}

TEST_CASE("clamp01 value semantics and gated gradient") {
  Tensor<double> x0(1, 1, 1, 3);
  x0[0] = -0.5; x0[1] = 0.5; x0[2] = 1.5;
  auto xv = make_var(Tensor<double>(x0), true);
  auto out = clamp01_v(xv);
  REQUIRE(out->value[0] == 0.0);
  REQUIRE(out->value[1] == 0.5);
  REQUIRE(out->value[2] == 1.0);
  auto loss = sum_all(out);
  backward(loss);
  REQUIRE(xv->grad[0] == 0.0);
  REQUIRE(xv->grad[1] == 1.0);
  REQUIRE(xv->grad[2] == 0.0);
}
