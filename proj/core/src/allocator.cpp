#include "ttus/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ttus {

std::vector<double> pi_of_lambda(std::span<const std::int64_t> costs,
                                 double lambda, std::size_t n) {
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("pi_of_lambda requires lambda > 0");
  }
  if (n == 0) throw std::invalid_argument("pi_of_lambda requires n >= 1");
  std::vector<double> pi(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (costs[i] < 0) throw std::invalid_argument("costs must be nonnegative");
    if (costs[i] == 0) {
      pi[i] = 1.0;
      continue;
    }
    const double denom =
        std::sqrt(static_cast<double>(n) * lambda * static_cast<double>(costs[i]));
    pi[i] = std::min(1.0, 1.0 / denom);
  }
  return pi;
}

double budget_usage(std::span<const std::int64_t> costs,
                    std::span<const double> pi) {
  if (costs.size() != pi.size()) {
    throw std::invalid_argument("budget_usage: costs and pi lengths differ");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    total += static_cast<double>(costs[i]) * pi[i];
  }
  return total;
}

AllocationPlan solve(std::vector<std::int64_t> costs, double budget,
                     const SolveOptions& options) {
  if (!(budget > 0.0)) throw std::invalid_argument("budget must be positive");
  const std::size_t n = costs.size();
  if (n == 0) throw std::invalid_argument("solve requires at least one cost");

  double total_cost = 0.0;
  std::int64_t max_cost = 0;
  std::int64_t min_pos_cost = 0;
  for (std::int64_t c : costs) {
    if (c < 0) throw std::invalid_argument("costs must be nonnegative");
    total_cost += static_cast<double>(c);
    max_cost = std::max(max_cost, c);
    if (c > 0 && (min_pos_cost == 0 || c < min_pos_cost)) min_pos_cost = c;
  }

  AllocationPlan plan;
  plan.effective_costs = std::move(costs);
  plan.budget = budget;

  if (total_cost <= budget) {
    plan.pi.assign(n, 1.0);
    plan.gamma = 1.0;
    return plan;
  }

  const double eps = options.epsilon.value_or(1e-9 * budget);
  if (!(eps > 0.0)) throw std::invalid_argument("epsilon must be positive");

  const double nd = static_cast<double>(n);
  double lo = 1.0 / (nd * static_cast<double>(max_cost));
  double hi = options.lambda_high_init.value_or(
      nd * static_cast<double>(max_cost) * static_cast<double>(max_cost) /
      (budget * budget * static_cast<double>(min_pos_cost)));
  hi = std::max(hi, lo * 2.0);

  auto usage_at = [&](double lambda) {
    return budget_usage(plan.effective_costs,
                        pi_of_lambda(plan.effective_costs, lambda, n));
  };

  // Doubling safety net from the algorithm: grow the bracket until the usage
  // at lambda_high drops to the budget or below.
  int guard = 0;
  while (usage_at(hi) > budget) {
    hi *= 2.0;
    if (++guard > 200) {
      throw std::runtime_error("allocator bracket expansion failed at lambda_high=" +
                               std::to_string(hi));
    }
  }

  // Bisection keeping usage(lo) >= budget. Converging onto lambda* from below
  // means every pi_i(lo) >= pi_i(lambda*), so the analytic weight bound
  // transfers to the returned plan without tolerance.
  double usage_lo = usage_at(lo);
  int iterations = 0;
  while (usage_lo - budget > eps) {
    if (++iterations > options.max_iterations) {
      throw std::runtime_error(
          "allocator bisection did not converge: bracket [" + std::to_string(lo) +
          ", " + std::to_string(hi) + "], residual " +
          std::to_string(usage_lo - budget));
    }
    const double mid = 0.5 * (lo + hi);
    const double usage_mid = usage_at(mid);
    if (usage_mid >= budget) {
      lo = mid;
      usage_lo = usage_mid;
    } else {
      hi = mid;
    }
  }

  plan.lambda_star = lo;
  plan.pi = pi_of_lambda(plan.effective_costs, lo, n);
  plan.gamma = 1.0;
  for (double p : plan.pi) plan.gamma = std::max(plan.gamma, 1.0 / p);
  return plan;
}

double weight_bound(std::size_t n, std::int64_t max_cost, double budget) {
  if (n == 0 || max_cost <= 0 || !(budget > 0.0)) {
    throw std::invalid_argument("weight_bound requires positive arguments");
  }
  return std::max(static_cast<double>(n) * static_cast<double>(max_cost) / budget,
                  1.0);
}

}  // namespace ttus
