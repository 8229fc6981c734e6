#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "scdn/common.hpp"

namespace scdn {

// Deterministic splitmix64 generator. We do not use <random> distributions:
// their output is implementation-defined, and reproducibility across
// compilers is part of the contract here. State is a single word, which
// makes checkpoint/resume trivial.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double uniform_open() {
    return double((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. Two uniforms per draw, no cached spare,
  // so the state alone fully describes the stream.
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Uniform integer in [0, n). Modulo bias is < n / 2^64, irrelevant here.
  int below(int n) { return int(next_u64() % std::uint64_t(n)); }

  // Fisher-Yates; std::shuffle is implementation-defined.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = int(v.size()) - 1; i > 0; --i) {
      const int j = below(i + 1);
      std::swap(v[i], v[std::size_t(j)]);
    }
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

}  // namespace scdn
