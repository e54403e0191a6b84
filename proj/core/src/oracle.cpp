#include "ttus/oracle.hpp"

#include <stdexcept>

namespace ttus {

void validate_observation(const CensoredObservation& obs) {
  if (obs.censor_time < 0 || obs.observed_time < 0 || obs.draws_used < 0) {
    throw std::invalid_argument("observation fields must be nonnegative");
  }
  if (obs.observed_time > obs.censor_time) {
    throw std::invalid_argument("observed_time exceeds censor_time");
  }
  if (obs.event && obs.observed_time < 1) {
    throw std::invalid_argument("an event requires observed_time >= 1");
  }
  if (obs.censor_time == 0 && (obs.observed_time != 0 || obs.event || obs.draws_used != 0)) {
    throw std::invalid_argument("censor_time 0 admits no draws");
  }
}

bool SyntheticOracle::draw(const PromptRecord& prompt, SplitMix64& rng) const {
  if (!prompt.true_p.has_value()) {
    throw std::invalid_argument(
        "synthetic oracle requires a prompt with true_p set");
  }
  return rng.next_bernoulli(prompt.true_p->value());
}

CensoredObservation generate_censored(const Oracle& oracle,
                                      const PromptRecord& prompt,
                                      std::int64_t censor_time,
                                      SplitMix64& rng) {
  if (censor_time < 0) {
    throw std::invalid_argument("censor_time must be nonnegative");
  }
  CensoredObservation obs;
  obs.prompt_id = prompt.id;
  obs.censor_time = censor_time;
  for (std::int64_t j = 1; j <= censor_time; ++j) {
    obs.draws_used = j;
    obs.observed_time = j;
    if (oracle.draw(prompt, rng)) {
      obs.event = true;
      break;
    }
  }
  return obs;
}

CensoredObservation generate_censored_fast(const PromptRecord& prompt,
                                           std::int64_t censor_time,
                                           SplitMix64& rng) {
  if (censor_time < 0) {
    throw std::invalid_argument("censor_time must be nonnegative");
  }
  if (!prompt.true_p.has_value()) {
    throw std::invalid_argument(
        "generate_censored_fast requires a prompt with true_p set");
  }
  CensoredObservation obs;
  obs.prompt_id = prompt.id;
  obs.censor_time = censor_time;
  if (censor_time == 0) return obs;
  const std::int64_t t = sample_geometric(*prompt.true_p, rng);
  if (t <= censor_time) {
    obs.observed_time = t;
    obs.event = true;
  } else {
    obs.observed_time = censor_time;
  }
  obs.draws_used = obs.observed_time;
  return obs;
}

}  // namespace ttus
