#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ttus/allocator.hpp"
#include "ttus/geom.hpp"
#include "ttus/oracle.hpp"

namespace ttus {

enum class Mode {
  naive,            // C_i ~ Geom(min(n/B, 1)), per-level inverse-censoring weights
  naive_efficient,  // C_i = Ber(g_i) * qhat_prior_i, run-time efficient variant
  basic,            // C_i = Ber(pi_i) * qhat_prior_i, pi_i = min(B/(n qhat_i), 1)
  trimmed,          // basic with quantiles capped at M
  optimized,        // trimmed with pi from the convex allocation
};

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view name);
bool is_adaptive(Mode mode);

struct CalibrationConfig {
  double alpha = 0.1;
  double tau_prior = 0.5623413251903491;  // 10^(-1/4)
  Mode mode = Mode::optimized;
  std::optional<std::int64_t> trim_M;
  double budget = 0.0;  // total budget B over the calibration set
  double delta = 0.1;   // PAC tolerance
  std::uint64_t seed = 0;
  /// The naive grid is restricted to [0, tau_prior] by default; the
  /// unrestricted variant is known to be unstable but can be re-enabled.
  bool restrict_naive_grid = true;

  void validate(std::size_t n_prompts) const;
};

/// Censoring times plus everything needed to weight the miscoverage
/// estimator under the law that generated them.
struct CensoringPlan {
  Mode mode = Mode::naive;
  std::vector<std::int64_t> censor_times;
  /// Per-prompt sampling targets fhat_prior(X_i); empty for naive.
  std::vector<std::int64_t> targets;
  /// Evaluation probabilities: Ber success probability per prompt for the
  /// adaptive modes, selection probability g for naive_efficient; empty for
  /// naive.
  std::vector<double> pi;
  /// Per-prompt inverse probabilities 1/pi (or 1/g); empty for naive.
  std::vector<double> inv_pi;
  /// Geometric censoring rate min(n/B, 1); meaningful for the naive laws.
  double rho = 0.0;
  std::optional<double> lambda_star;
  /// Analytic E[sum C_i | X] under this plan; always <= budget.
  double expected_total_draws = 0.0;
  /// For naive_efficient: expected draw count of the equivalent Geom-law
  /// naive run (the "simulated" sample count). Equals expected_total_draws
  /// for the other modes.
  double simulated_total_draws = 0.0;

  /// Inverse probability that a prompt with quantile value q is selected,
  /// 1 / P(q <= C_i). Selection is certain for q = 0.
  double weight(std::size_t i, std::int64_t q) const;
};

/// C_i ~ Geom(rho), rho = min(n/B, 1), i.i.d. over prompts. Weights depend on
/// tau through the quantile value.
CensoringPlan assign_censoring_naive(std::span<const PromptRecord> prompts,
                                     double budget, std::uint64_t seed);

/// Run-time efficient naive variant: C_i = Ber(g_i) * qhat_prior_i with
/// g_i = P(Geom(rho) >= qhat_prior_i); the weight for every tau in the
/// restricted grid is 1/g_i, the true selection probability under this law.
CensoringPlan assign_censoring_naive_efficient(
    std::span<const PromptRecord> prompts, std::span<const double> p_hat,
    double tau_prior, double budget, std::uint64_t seed);

/// Basic/trimmed/optimized: C_i = Ber(pi_i) * fhat_prior_i where fhat is the
/// (optionally capped) prior quantile and pi comes from the closed form or
/// the convex allocation.
CensoringPlan assign_censoring_adaptive(std::span<const PromptRecord> prompts,
                                        std::span<const double> p_hat,
                                        const CalibrationConfig& config,
                                        std::uint64_t seed);

/// Draws observations for the given censor times through the oracle's
/// sequential loop; one derived RNG stream per prompt id.
std::vector<CensoredObservation> draw_observations(
    const Oracle& oracle, std::span<const PromptRecord> prompts,
    std::span<const std::int64_t> censor_times, std::uint64_t seed);

/// Same law on synthetic prompts via the single-geometric shortcut.
std::vector<CensoredObservation> draw_observations_fast(
    std::span<const PromptRecord> prompts,
    std::span<const std::int64_t> censor_times, std::uint64_t seed);

/// Candidate quantile levels: every level at which some selection or
/// miscoverage indicator can flip, i.e. inv_quantile_level at the observed
/// and censoring times, plus 0. Sorted, deduplicated, and intersected with
/// [0, tau_cap] when a cap is given.
std::vector<double> build_tau_grid(std::span<const double> p_hat,
                                   std::span<const CensoredObservation> obs,
                                   std::optional<double> tau_cap);

/// True iff T_i < q given that the observation was selected (q <= C_i).
/// Throws if the comparison is not determined by (observed_time, event).
bool miscoverage_indicator(const CensoredObservation& obs, std::int64_t q);

/// Inverse-censoring-weighted miscoverage estimate at a single level:
/// (1/n) * sum w_i 1{fhat_tau(X_i) <= C_i} 1{T_i < fhat_tau(X_i)} with
/// fhat_tau = min(qhat_tau, trim_M).
double alpha_hat(double tau, std::span<const double> p_hat,
                 std::optional<std::int64_t> trim_M,
                 std::span<const CensoredObservation> obs,
                 const CensoringPlan& plan);

/// alpha_hat over an ascending grid. Constant-weight modes use an O(n log n)
/// sweep; the naive mode evaluates each level directly.
std::vector<double> alpha_curve(std::span<const double> grid,
                                std::span<const double> p_hat,
                                std::optional<std::int64_t> trim_M,
                                std::span<const CensoredObservation> obs,
                                const CensoringPlan& plan);

/// Largest grid level whose running prefix-maximum of alpha_hat stays at or
/// below alpha; 0 when no positive level qualifies.
double select_tau(std::span<const double> grid,
                  std::span<const double> alpha_values, double alpha);

/// PAC coverage slack sqrt((2 gamma^2 + 5)/n * log(1/delta)).
double pac_slack(double gamma, std::size_t n, double delta);

struct CalibrationResult {
  Mode mode = Mode::naive;
  double tau_hat = 0.0;
  std::vector<double> tau_grid;
  std::vector<double> alpha_values;  // aligned with tau_grid
  std::vector<double> weights;       // per prompt, at the selected level
  std::vector<double> pi;            // per prompt; empty for naive
  double gamma = 1.0;
  double pac_slack = 0.0;
  double realized_budget = 0.0;   // sum of C_i as drawn
  double simulated_budget = 0.0;  // Geom-law expected draws for naive_efficient
  double alpha = 0.0;
  double tau_prior = 1.0;
  std::optional<std::int64_t> trim_M;
  std::size_t n_calibration = 0;
};

/// Grid construction, the alpha curve, level selection, and bookkeeping for
/// already-drawn observations.
CalibrationResult estimate(std::span<const double> p_hat,
                           std::span<const CensoredObservation> obs,
                           const CensoringPlan& plan,
                           const CalibrationConfig& config);

/// Full calibration pass on synthetic prompts: assign censoring, draw
/// outcomes through the fast synthetic path, estimate.
CalibrationResult calibrate_synthetic(std::span<const PromptRecord> prompts,
                                      std::span<const double> p_hat,
                                      const CalibrationConfig& config,
                                      std::uint64_t run_seed);

/// LPB for a test prompt with prediction p_hat: the selected quantile,
/// additionally capped at trim_M in the trimmed and optimized modes. One
/// model evaluation, no oracle calls.
std::int64_t lower_predictive_bound(const CalibrationResult& result,
                                    UnsafeProbability p_hat);

}  // namespace ttus
