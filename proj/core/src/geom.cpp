#include "ttus/geom.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ttus {

namespace {

// Largest double that still rounds into the int64 range.
constexpr double kMaxCount = 9.2233720368547738e18;

[[noreturn]] void throw_count_overflow(double r) {
  throw std::overflow_error("geometric count overflows 64-bit range: " +
                            std::to_string(r));
}

}  // namespace

UnsafeProbability::UnsafeProbability(double p) : p_(p) {
  if (!(std::isfinite(p) && p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("unsafe probability must lie in (0, 1), got " +
                                std::to_string(p));
  }
}

double UnsafeProbability::log1m() const { return std::log1p(-p_); }

double geom_cdf(UnsafeProbability p, std::int64_t k) {
  if (k < 0) throw std::invalid_argument("geom_cdf requires k >= 0");
  if (k == 0) return 0.0;
  return -std::expm1(static_cast<double>(k) * p.log1m());
}

double geom_sf(UnsafeProbability p, std::int64_t k) {
  if (k < 1) throw std::invalid_argument("geom_sf requires k >= 1");
  return std::exp(static_cast<double>(k - 1) * p.log1m());
}

std::int64_t geom_quantile(UnsafeProbability p, double tau) {
  if (!(tau >= 0.0 && tau < 1.0)) {
    throw std::invalid_argument("geom_quantile requires tau in [0, 1), got " +
                                std::to_string(tau));
  }
  if (tau == 0.0) return 0;
  const double r = std::log1p(-tau) / p.log1m();
  if (r >= kMaxCount) throw_count_overflow(r);
  const double nearest = std::nearbyint(r);
  std::int64_t k;
  if (std::abs(r - nearest) <= 1e-12 * std::max(1.0, std::abs(r))) {
    k = static_cast<std::int64_t>(nearest);
  } else {
    k = static_cast<std::int64_t>(std::ceil(r));
  }
  return k < 1 ? 1 : k;
}

double inv_quantile_level(UnsafeProbability p, std::int64_t k) {
  if (k < 0) throw std::invalid_argument("inv_quantile_level requires k >= 0");
  return geom_cdf(p, k);
}

std::int64_t sample_geometric(UnsafeProbability p, SplitMix64& rng) {
  const double u = rng.next_double();
  const double r = std::log(u) / p.log1m();
  if (r >= kMaxCount) throw_count_overflow(r);
  const std::int64_t k = static_cast<std::int64_t>(std::ceil(r));
  return k < 1 ? 1 : k;
}

}  // namespace ttus
