#pragma once

// Deterministic randomness. Every random draw in the toolkit flows from one
// run seed through named streams: Rng(seed, "synth/theta/3") yields the same
// sequence no matter what other streams consumed before it.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

namespace aru {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view label) : gen_(seed ^ fnv1a64(label)) {}

  std::uint64_t bits() { return gen_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Two uniforms per draw, no cached pair,
  /// so the stream position depends only on the number of calls.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  /// Uniform integer in [0, n). Rejection sampling, exactly uniform.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t lim = max - max % n;
    std::uint64_t v = bits();
    while (v >= lim) v = bits();
    return v % n;
  }

  /// Fisher-Yates; hand-rolled so shuffles are identical across standard
  /// library implementations.
  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i)
      std::swap(xs[i - 1], xs[below(i)]);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace aru
