#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ttus {

/// Solution of the per-prompt evaluation-probability program: minimize the
/// mean inverse probability subject to sum(cost_i * pi_i) <= budget.
struct AllocationPlan {
  std::vector<double> pi;
  /// Absent exactly when the budget covers every cost in full (all pi = 1).
  std::optional<double> lambda_star;
  std::vector<std::int64_t> effective_costs;
  double budget = 0.0;
  /// Max inverse probability over the plan.
  double gamma = 1.0;
};

struct SolveOptions {
  /// Absolute tolerance on |usage - budget|; defaults to 1e-9 * budget.
  std::optional<double> epsilon;
  int max_iterations = 200;
  /// Override for the initial upper bisection bracket (used to exercise the
  /// uniqueness property; the default follows the analytic interval).
  std::optional<double> lambda_high_init;
};

/// Stationary-point probabilities min(1, 1/sqrt(n * lambda * cost_i)).
/// Zero costs map to probability 1.
std::vector<double> pi_of_lambda(std::span<const std::int64_t> costs,
                                 double lambda, std::size_t n);

/// U(lambda) = sum(cost_i * pi_i).
double budget_usage(std::span<const std::int64_t> costs,
                    std::span<const double> pi);

/// Solves the allocation by bisection on the Lagrange multiplier. When the
/// total cost exceeds the budget the returned usage is budget-tight within
/// epsilon, approached from above so that every pi_i >= B/(n*M) holds exactly
/// and the max weight never exceeds max(n*M/B, 1).
AllocationPlan solve(std::vector<std::int64_t> costs, double budget,
                     const SolveOptions& options = {});

/// Analytic weight bound max(n*M/budget, 1).
double weight_bound(std::size_t n, std::int64_t max_cost, double budget);

}  // namespace ttus
