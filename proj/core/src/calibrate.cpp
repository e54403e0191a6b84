#include "ttus/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ttus {

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::naive: return "naive";
    case Mode::naive_efficient: return "naive_efficient";
    case Mode::basic: return "basic";
    case Mode::trimmed: return "trimmed";
    case Mode::optimized: return "optimized";
  }
  throw std::logic_error("unknown mode");
}

Mode mode_from_string(std::string_view name) {
  if (name == "naive") return Mode::naive;
  if (name == "naive_efficient") return Mode::naive_efficient;
  if (name == "basic") return Mode::basic;
  if (name == "trimmed") return Mode::trimmed;
  if (name == "optimized") return Mode::optimized;
  throw std::invalid_argument("unknown calibration mode: " + std::string(name));
}

bool is_adaptive(Mode mode) {
  return mode == Mode::basic || mode == Mode::trimmed || mode == Mode::optimized;
}

void CalibrationConfig::validate(std::size_t n_prompts) const {
  if (n_prompts == 0) throw std::invalid_argument("empty calibration set");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1)");
  }
  if (!(tau_prior > 0.0 && tau_prior <= 1.0)) {
    throw std::invalid_argument("tau_prior must lie in (0, 1]");
  }
  if (tau_prior == 1.0 && mode != Mode::naive) {
    throw std::invalid_argument(
        "tau_prior = 1 implies an infinite sampling target; only the naive "
        "mode admits it");
  }
  if (!(budget > 0.0)) throw std::invalid_argument("budget must be positive");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0, 1)");
  }
  if ((mode == Mode::trimmed || mode == Mode::optimized)) {
    if (!trim_M.has_value()) {
      throw std::invalid_argument("trim_M is required for trimmed/optimized modes");
    }
    if (*trim_M < 1) throw std::invalid_argument("trim_M must be >= 1");
  }
}

double CensoringPlan::weight(std::size_t i, std::int64_t q) const {
  if (q <= 0) return 1.0;
  if (mode == Mode::naive) {
    if (q == 1) return 1.0;  // P(C >= 1) = 1
    // 1 / P(Geom(rho) >= q) = (1 - rho)^{-(q-1)}
    return std::exp(-static_cast<double>(q - 1) * std::log1p(-rho));
  }
  return inv_pi[i];
}

namespace {

double censoring_rate(std::size_t n, double budget) {
  return std::min(static_cast<double>(n) / budget, 1.0);
}

std::vector<std::int64_t> prior_quantiles(std::span<const double> p_hat,
                                          double tau_prior) {
  std::vector<std::int64_t> q(p_hat.size());
  for (std::size_t i = 0; i < p_hat.size(); ++i) {
    q[i] = geom_quantile(UnsafeProbability(p_hat[i]), tau_prior);
  }
  return q;
}

}  // namespace

CensoringPlan assign_censoring_naive(std::span<const PromptRecord> prompts,
                                     double budget, std::uint64_t seed) {
  if (prompts.empty()) throw std::invalid_argument("empty calibration set");
  if (!(budget > 0.0)) throw std::invalid_argument("budget must be positive");
  const std::size_t n = prompts.size();
  CensoringPlan plan;
  plan.mode = Mode::naive;
  plan.rho = censoring_rate(n, budget);
  plan.censor_times.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (plan.rho >= 1.0) {
      plan.censor_times[i] = 1;
    } else {
      SplitMix64 rng(derive_seed(seed, "censor", static_cast<std::uint64_t>(prompts[i].id)));
      plan.censor_times[i] = sample_geometric(UnsafeProbability(plan.rho), rng);
    }
  }
  plan.expected_total_draws = static_cast<double>(n) / plan.rho;
  plan.simulated_total_draws = plan.expected_total_draws;
  return plan;
}

CensoringPlan assign_censoring_naive_efficient(
    std::span<const PromptRecord> prompts, std::span<const double> p_hat,
    double tau_prior, double budget, std::uint64_t seed) {
  if (prompts.empty()) throw std::invalid_argument("empty calibration set");
  if (prompts.size() != p_hat.size()) {
    throw std::invalid_argument("p_hat is not aligned with prompts");
  }
  if (!(budget > 0.0)) throw std::invalid_argument("budget must be positive");
  const std::size_t n = prompts.size();
  CensoringPlan plan;
  plan.mode = Mode::naive_efficient;
  plan.rho = censoring_rate(n, budget);
  plan.targets = prior_quantiles(p_hat, tau_prior);
  plan.censor_times.resize(n);
  plan.pi.resize(n);
  plan.inv_pi.resize(n);
  const double log1m_rho = plan.rho < 1.0 ? std::log1p(-plan.rho) : -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t target = plan.targets[i];
    double g;
    if (plan.rho >= 1.0) {
      g = target <= 1 ? 1.0 : 0.0;
    } else {
      g = std::exp(static_cast<double>(target - 1) * log1m_rho);
    }
    plan.pi[i] = g;
    plan.inv_pi[i] = 1.0 / g;
    SplitMix64 rng(derive_seed(seed, "censor", static_cast<std::uint64_t>(prompts[i].id)));
    plan.censor_times[i] = rng.next_bernoulli(g) ? target : 0;
    plan.expected_total_draws += g * static_cast<double>(target);
  }
  plan.simulated_total_draws = static_cast<double>(n) / plan.rho;
  return plan;
}

CensoringPlan assign_censoring_adaptive(std::span<const PromptRecord> prompts,
                                        std::span<const double> p_hat,
                                        const CalibrationConfig& config,
                                        std::uint64_t seed) {
  if (!is_adaptive(config.mode)) {
    throw std::invalid_argument("assign_censoring_adaptive requires an adaptive mode");
  }
  config.validate(prompts.size());
  if (prompts.size() != p_hat.size()) {
    throw std::invalid_argument("p_hat is not aligned with prompts");
  }
  const std::size_t n = prompts.size();
  CensoringPlan plan;
  plan.mode = config.mode;
  plan.targets = prior_quantiles(p_hat, config.tau_prior);
  if (config.mode != Mode::basic) {
    for (auto& t : plan.targets) t = std::min(t, *config.trim_M);
  }

  if (config.mode == Mode::optimized) {
    AllocationPlan alloc = solve(plan.targets, config.budget);
    plan.pi = std::move(alloc.pi);
    plan.lambda_star = alloc.lambda_star;
  } else {
    plan.pi.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      plan.pi[i] = std::min(
          config.budget / (static_cast<double>(n) * static_cast<double>(plan.targets[i])),
          1.0);
    }
  }

  plan.inv_pi.resize(n);
  plan.censor_times.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    plan.inv_pi[i] = 1.0 / plan.pi[i];
    SplitMix64 rng(derive_seed(seed, "censor", static_cast<std::uint64_t>(prompts[i].id)));
    plan.censor_times[i] = rng.next_bernoulli(plan.pi[i]) ? plan.targets[i] : 0;
    plan.expected_total_draws += plan.pi[i] * static_cast<double>(plan.targets[i]);
  }
  plan.simulated_total_draws = plan.expected_total_draws;
  return plan;
}

std::vector<CensoredObservation> draw_observations(
    const Oracle& oracle, std::span<const PromptRecord> prompts,
    std::span<const std::int64_t> censor_times, std::uint64_t seed) {
  if (prompts.size() != censor_times.size()) {
    throw std::invalid_argument("censor_times is not aligned with prompts");
  }
  std::vector<CensoredObservation> obs(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    SplitMix64 rng(derive_seed(seed, "outcome", static_cast<std::uint64_t>(prompts[i].id)));
    obs[i] = generate_censored(oracle, prompts[i], censor_times[i], rng);
  }
  return obs;
}

std::vector<CensoredObservation> draw_observations_fast(
    std::span<const PromptRecord> prompts,
    std::span<const std::int64_t> censor_times, std::uint64_t seed) {
  if (prompts.size() != censor_times.size()) {
    throw std::invalid_argument("censor_times is not aligned with prompts");
  }
  std::vector<CensoredObservation> obs(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    SplitMix64 rng(derive_seed(seed, "outcome", static_cast<std::uint64_t>(prompts[i].id)));
    obs[i] = generate_censored_fast(prompts[i], censor_times[i], rng);
  }
  return obs;
}

std::vector<double> build_tau_grid(std::span<const double> p_hat,
                                   std::span<const CensoredObservation> obs,
                                   std::optional<double> tau_cap) {
  if (obs.empty()) throw std::invalid_argument("empty calibration set");
  if (obs.size() != p_hat.size()) {
    throw std::invalid_argument("p_hat is not aligned with observations");
  }
  std::vector<double> grid;
  grid.reserve(2 * obs.size() + 1);
  grid.push_back(0.0);
  // Levels that round to 1.0 are float saturation of 1-(1-p)^k (the true sup
  // is always < 1); they are unobservable and outside the quantile domain,
  // so they are dropped rather than clamped.
  auto push = [&grid](double level) {
    if (level < 1.0) grid.push_back(level);
  };
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const UnsafeProbability p(p_hat[i]);
    push(inv_quantile_level(p, obs[i].observed_time));
    push(inv_quantile_level(p, obs[i].censor_time));
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (tau_cap.has_value()) {
    grid.erase(std::upper_bound(grid.begin(), grid.end(), *tau_cap), grid.end());
  }
  return grid;
}

bool miscoverage_indicator(const CensoredObservation& obs, std::int64_t q) {
  if (obs.event) return obs.observed_time < q;
  // Censored: only T > observed_time is known.
  if (q <= obs.observed_time + 1) return false;
  throw std::logic_error(
      "miscoverage indicator is undetermined for an unselected censored "
      "observation");
}

namespace {

std::int64_t effective_quantile(UnsafeProbability p, double tau,
                                std::optional<std::int64_t> trim_M) {
  std::int64_t q = geom_quantile(p, tau);
  if (trim_M.has_value()) q = std::min(q, *trim_M);
  return q;
}

std::optional<double> grid_cap(const CalibrationConfig& config) {
  if (is_adaptive(config.mode) || config.mode == Mode::naive_efficient) {
    return config.tau_prior;
  }
  if (config.restrict_naive_grid) return config.tau_prior;
  return std::nullopt;
}

}  // namespace

double alpha_hat(double tau, std::span<const double> p_hat,
                 std::optional<std::int64_t> trim_M,
                 std::span<const CensoredObservation> obs,
                 const CensoringPlan& plan) {
  if (obs.size() != p_hat.size() || obs.size() != plan.censor_times.size()) {
    throw std::invalid_argument("alpha_hat inputs are not aligned");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const std::int64_t f = effective_quantile(UnsafeProbability(p_hat[i]), tau, trim_M);
    if (f > obs[i].censor_time) continue;  // not selected
    if (miscoverage_indicator(obs[i], f)) sum += plan.weight(i, f);
  }
  return sum / static_cast<double>(obs.size());
}

std::vector<double> alpha_curve(std::span<const double> grid,
                                std::span<const double> p_hat,
                                std::optional<std::int64_t> trim_M,
                                std::span<const CensoredObservation> obs,
                                const CensoringPlan& plan) {
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw std::invalid_argument("tau grid must be sorted ascending");
  }
  std::vector<double> values(grid.size(), 0.0);
  if (grid.empty()) return values;

  if (plan.mode == Mode::naive) {
    // Weights change with tau; evaluate each level directly.
    for (std::size_t k = 0; k < grid.size(); ++k) {
      values[k] = alpha_hat(grid[k], p_hat, trim_M, obs, plan);
    }
    return values;
  }

  // Constant per-prompt weights: prompt i contributes w_i exactly on the
  // levels in (inv_level(T_i), sel_max_i], so a difference array over the
  // grid gives the whole curve in one sweep.
  std::vector<double> diff(grid.size() + 1, 0.0);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!obs[i].event) continue;
    if (trim_M.has_value() && obs[i].observed_time >= *trim_M) continue;
    const UnsafeProbability p(p_hat[i]);
    const double lo = inv_quantile_level(p, obs[i].observed_time);
    std::size_t a = static_cast<std::size_t>(
        std::upper_bound(grid.begin(), grid.end(), lo) - grid.begin());
    std::size_t b;
    if (trim_M.has_value() && obs[i].censor_time >= *trim_M) {
      b = grid.size() - 1;  // f_tau <= M <= C: selected on the whole grid
    } else {
      const double hi = inv_quantile_level(p, obs[i].censor_time);
      const auto it = std::upper_bound(grid.begin(), grid.end(), hi);
      if (it == grid.begin()) continue;
      b = static_cast<std::size_t>(it - grid.begin()) - 1;
    }
    if (a > b) continue;
    const double w = plan.inv_pi.empty() ? 1.0 : plan.inv_pi[i];
    diff[a] += w;
    diff[b + 1] -= w;
  }
  double acc = 0.0;
  const double inv_n = 1.0 / static_cast<double>(obs.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    acc += diff[k];
    values[k] = acc * inv_n;
  }
  return values;
}

double select_tau(std::span<const double> grid,
                  std::span<const double> alpha_values, double alpha) {
  if (grid.size() != alpha_values.size()) {
    throw std::invalid_argument("alpha curve is not aligned with the grid");
  }
  double best = 0.0;
  double running_max = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    running_max = std::max(running_max, alpha_values[k]);
    if (running_max <= alpha) best = grid[k];
  }
  return best;
}

double pac_slack(double gamma, std::size_t n, double delta) {
  if (!(gamma >= 1.0)) throw std::invalid_argument("gamma must be >= 1");
  if (n == 0) throw std::invalid_argument("n must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0, 1)");
  }
  return std::sqrt((2.0 * gamma * gamma + 5.0) / static_cast<double>(n) *
                   std::log(1.0 / delta));
}

CalibrationResult estimate(std::span<const double> p_hat,
                           std::span<const CensoredObservation> obs,
                           const CensoringPlan& plan,
                           const CalibrationConfig& config) {
  const std::size_t n = obs.size();
  config.validate(n);
  if (p_hat.size() != n || plan.censor_times.size() != n) {
    throw std::invalid_argument("estimate inputs are not aligned");
  }

  const std::optional<std::int64_t> trim =
      (config.mode == Mode::trimmed || config.mode == Mode::optimized)
          ? config.trim_M
          : std::nullopt;

  CalibrationResult result;
  result.mode = config.mode;
  result.alpha = config.alpha;
  result.tau_prior = config.tau_prior;
  result.trim_M = trim;
  result.n_calibration = n;
  result.tau_grid = build_tau_grid(p_hat, obs, grid_cap(config));
  result.alpha_values = alpha_curve(result.tau_grid, p_hat, trim, obs, plan);
  result.tau_hat = select_tau(result.tau_grid, result.alpha_values, config.alpha);

  result.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t f =
        effective_quantile(UnsafeProbability(p_hat[i]), result.tau_hat, trim);
    result.weights[i] = plan.weight(i, f);
  }
  result.pi = plan.pi;

  switch (config.mode) {
    case Mode::naive: {
      // Supremum over the search grid of the largest per-level weight.
      double gamma = 1.0;
      const double tau_max = result.tau_grid.back();
      for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t q = geom_quantile(UnsafeProbability(p_hat[i]), tau_max);
        gamma = std::max(gamma, plan.weight(i, q));
      }
      result.gamma = gamma;
      break;
    }
    case Mode::naive_efficient:
    case Mode::basic: {
      double gamma = 1.0;
      for (double w : plan.inv_pi) gamma = std::max(gamma, w);
      result.gamma = gamma;
      break;
    }
    case Mode::trimmed:
    case Mode::optimized:
      result.gamma = weight_bound(n, *trim, config.budget);
      break;
  }
  result.pac_slack = std::isinf(result.gamma)
                         ? std::numeric_limits<double>::infinity()
                         : pac_slack(result.gamma, n, config.delta);

  double realized = 0.0;
  for (std::int64_t c : plan.censor_times) realized += static_cast<double>(c);
  result.realized_budget = realized;
  result.simulated_budget = (config.mode == Mode::naive_efficient)
                                ? plan.simulated_total_draws
                                : realized;
  return result;
}

CalibrationResult calibrate_synthetic(std::span<const PromptRecord> prompts,
                                      std::span<const double> p_hat,
                                      const CalibrationConfig& config,
                                      std::uint64_t run_seed) {
  config.validate(prompts.size());
  CensoringPlan plan;
  switch (config.mode) {
    case Mode::naive:
      plan = assign_censoring_naive(prompts, config.budget, run_seed);
      break;
    case Mode::naive_efficient:
      plan = assign_censoring_naive_efficient(prompts, p_hat, config.tau_prior,
                                              config.budget, run_seed);
      break;
    default:
      plan = assign_censoring_adaptive(prompts, p_hat, config, run_seed);
      break;
  }
  const auto obs = draw_observations_fast(prompts, plan.censor_times, run_seed);
  return estimate(p_hat, obs, plan, config);
}

std::int64_t lower_predictive_bound(const CalibrationResult& result,
                                    UnsafeProbability p_hat) {
  std::int64_t q = geom_quantile(p_hat, result.tau_hat);
  if (result.trim_M.has_value()) q = std::min(q, *result.trim_M);
  return q;
}

}  // namespace ttus
