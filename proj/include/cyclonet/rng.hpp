#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace cyclonet {

// Counter-based pseudorandom stream: draw i of stream k is
// splitmix64_finalize(key_k + i * golden_gamma). Identical (seed, fork path)
// gives identical draws on every platform, independent of how many other
// streams exist. Forking by label or index derives a statistically
// independent stream without consuming draws from the parent.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed) : key_(finalize(seed ^ kDomain)) {}

  RngStream fork(std::uint64_t index) const {
    RngStream child;
    child.key_ = finalize(key_ ^ finalize(index + 0x9E3779B97F4A7C15ULL));
    return child;
  }

  RngStream fork(std::string_view label) const { return fork(fnv1a(label)); }

  std::uint64_t next_u64() { return finalize(key_ + kGamma * ++counter_); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; consumes two draws.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kDomain = 0x4359C64F8D21B5E7ULL;
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t finalize(std::uint64_t z) {
    z += kGamma;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    return h;
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace cyclonet
