#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>

namespace ttus {

/// Finalizing mix of SplitMix64 (Steele, Lea & Flood). Stateless; used both as
/// the generator step and as the seed-derivation hash.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Deterministic stream derivation: every random stage of the pipeline draws
/// from derive_seed(parent_seed, stage_name, index). Streams derived with
/// distinct (stage, index) pairs are independent for all practical purposes,
/// which is what makes parallel execution order-insensitive.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage,
                                 std::uint64_t index = 0) {
  std::uint64_t h = mix64(seed ^ (fnv1a64(stage) + 0x9E3779B97F4A7C15ULL));
  h ^= index + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  return mix64(h);
}

/// Small counter-based PRNG with 64-bit state. One stream per prompt keeps
/// results bitwise independent of thread scheduling.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  /// Uniform draw on the open interval (0, 1); never returns 0 or 1, so it is
  /// safe under log().
  double next_double() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  bool next_bernoulli(double p) { return next_double() < p; }

  /// One Box-Muller pair of independent standard normals.
  std::pair<double, double> next_gaussian_pair() {
    const double u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
  }

 private:
  std::uint64_t state_;
};

}  // namespace ttus
