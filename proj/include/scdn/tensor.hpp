#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "scdn/common.hpp"
#include "scdn/rng.hpp"

namespace scdn {

// Shape of a dense 4-D array: (batch, channels, height, width).
struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::size_t numel() const {
    return std::size_t(n) * std::size_t(c) * std::size_t(h) * std::size_t(w);
  }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense NCHW tensor. Images live in [0,1] at I/O boundaries; intermediate
// values (noise maps, scores, gradients) are unconstrained reals.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape_(s), data_(s.numel(), fill) {}
  Tensor(int n, int c, int h, int w, T fill = T(0))
      : Tensor(Shape{n, c, h, w}, fill) {}

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((std::size_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }

  void fill(T v) {
    for (auto& e : data_) e = v;
  }

  bool all_finite() const {
    for (const T& e : data_)
      if (!std::isfinite(double(e))) return false;
    return true;
  }

  T min() const {
    T m = data_.empty() ? T(0) : data_[0];
    for (const T& e : data_) m = e < m ? e : m;
    return m;
  }
  T max() const {
    T m = data_.empty() ? T(0) : data_[0];
    for (const T& e : data_) m = e > m ? e : m;
    return m;
  }

  double mean() const {
    double s = 0;
    for (const T& e : data_) s += double(e);
    return data_.empty() ? 0.0 : s / double(data_.size());
  }

  double variance() const {
    const double mu = mean();
    double s = 0;
    for (const T& e : data_) s += (double(e) - mu) * (double(e) - mu);
    return data_.empty() ? 0.0 : s / double(data_.size());
  }

  void clamp01() {
    for (auto& e : data_) e = e < T(0) ? T(0) : (e > T(1) ? T(1) : e);
  }

  void fill_uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
    for (auto& e : data_) e = T(rng.uniform(lo, hi));
  }
  void fill_normal(Rng& rng, double mean = 0.0, double std = 1.0) {
    for (auto& e : data_) e = T(mean + std * rng.normal());
  }

  std::uint64_t byte_checksum(std::uint64_t h = 0xcbf29ce484222325ull) const {
    return fnv1a64(data_.data(), data_.size() * sizeof(T), h);
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = U(data_[i]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* where) {
  if (!(a.shape() == b.shape()))
    throw std::invalid_argument(std::string(where) + ": shape mismatch " +
                                a.shape().str() + " vs " + b.shape().str());
}

}  // namespace scdn
