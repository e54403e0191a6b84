#pragma once

#include <cstdint>

#include "ttus/rng.hpp"

namespace ttus {

/// Per-prompt probability of sampling an unsafe output. The open interval
/// (0, 1) is enforced at construction: p = 0 makes every quantile infinite
/// and p = 1 degenerates the first-unsafe time to 1.
class UnsafeProbability {
 public:
  explicit UnsafeProbability(double p);

  double value() const { return p_; }
  /// log(1 - p), evaluated with log1p so that p down to ~1e-9 keeps full
  /// relative precision.
  double log1m() const;

 private:
  double p_;
};

/// P(T <= k) for T ~ Geom(p) on {1, 2, ...}; k >= 0, geom_cdf(p, 0) = 0.
double geom_cdf(UnsafeProbability p, std::int64_t k);

/// P(T >= k); k >= 1, geom_sf(p, 1) = 1.
double geom_sf(UnsafeProbability p, std::int64_t k);

/// Smallest k with P(T <= k) >= tau, i.e. ceil(log(1-tau)/log(1-p)).
/// tau in [0, 1); tau = 0 maps to 0. Values within a relative 1e-12 of an
/// integer are snapped before the ceiling so that float noise in tau cannot
/// shift the discrete quantile by one. Throws std::overflow_error when the
/// result exceeds the signed 64-bit range.
std::int64_t geom_quantile(UnsafeProbability p, double tau);

/// sup{tau : geom_quantile(p, tau) <= k} = 1 - (1-p)^k. Right inverse of
/// geom_quantile: geom_quantile(p, inv_quantile_level(p, k)) == k.
double inv_quantile_level(UnsafeProbability p, std::int64_t k);

/// One draw from Geom(p) by inverse-transform sampling,
/// ceil(log(U)/log(1-p)) with U uniform on (0,1). Identical in distribution
/// to looping Bernoulli(p) trials until the first success.
std::int64_t sample_geometric(UnsafeProbability p, SplitMix64& rng);

}  // namespace ttus
