#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ttus/geom.hpp"
#include "ttus/rng.hpp"

namespace ttus {

/// One prompt. true_p is the ground-truth unsafe probability and is present
/// only for synthetic data; real backends would leave it empty.
struct PromptRecord {
  std::int64_t id = 0;
  std::vector<double> features;
  std::optional<UnsafeProbability> true_p;
};

/// Outcome of running generation-and-audit rounds for one prompt under a
/// censoring cap: observed_time = min(T, C) and event says whether the unsafe
/// outcome was actually reached.
struct CensoredObservation {
  std::int64_t prompt_id = 0;
  std::int64_t censor_time = 0;
  std::int64_t observed_time = 0;
  bool event = false;
  std::int64_t draws_used = 0;
};

/// Throws std::invalid_argument if the field combination is impossible
/// (observed > censor, event at time 0, draws after a zero cap).
void validate_observation(const CensoredObservation& obs);

/// A generation-and-audit backend: one call samples one output for the prompt
/// and audits it. Implementations must be safe to call concurrently for
/// distinct prompts; calls for a single prompt are sequential by contract.
class Oracle {
 public:
  virtual ~Oracle() = default;
  /// True iff the sampled output is unsafe.
  virtual bool draw(const PromptRecord& prompt, SplitMix64& rng) const = 0;
};

/// Bernoulli(true_p) oracle for synthetic experiments.
class SyntheticOracle final : public Oracle {
 public:
  bool draw(const PromptRecord& prompt, SplitMix64& rng) const override;
};

/// Sequential generation loop: draw outcomes one at a time, stop at the first
/// unsafe one or when censor_time rounds have been spent. censor_time = 0
/// performs no draws. The censoring cap is fixed before any outcome is drawn,
/// which is what makes censoring conditionally independent of the event time.
CensoredObservation generate_censored(const Oracle& oracle,
                                      const PromptRecord& prompt,
                                      std::int64_t censor_time,
                                      SplitMix64& rng);

/// Synthetic-only shortcut: draws T ~ Geom(true_p) once and truncates at the
/// cap. Identical in distribution to generate_censored on a SyntheticOracle;
/// draws_used reports min(T, C), the number of rounds the sequential loop
/// would have simulated.
CensoredObservation generate_censored_fast(const PromptRecord& prompt,
                                           std::int64_t censor_time,
                                           SplitMix64& rng);

}  // namespace ttus
