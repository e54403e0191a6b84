#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "support/test_support.hpp"
#include "ttus/allocator.hpp"
#include "ttus/rng.hpp"

using namespace ttus;
namespace ts = ttus::testsupport;

TEST_CASE("pi_of_lambda evaluates the stationary form") {
  const std::vector<std::int64_t> costs{1, 4};
  SUBCASE("hand case n=4, lambda=1/4") {
    const auto pi = pi_of_lambda(costs, 0.25, 4);
    CHECK(pi[0] == doctest::Approx(1.0));
    CHECK(pi[1] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("boundary of the min at lambda = 1/(n c_i)") {
    const auto pi = pi_of_lambda(costs, 1.0 / (2.0 * 4.0), 2);
    CHECK(pi[1] == doctest::Approx(1.0));
  }
  SUBCASE("large lambda keeps probabilities strictly positive") {
    const auto pi = pi_of_lambda(costs, 1e12, 2);
    CHECK(pi[0] > 0.0);
    CHECK(pi[1] > 0.0);
    CHECK(pi[0] < 1e-5);
  }
  SUBCASE("nonpositive lambda rejected") {
    CHECK_THROWS_AS(pi_of_lambda(costs, 0.0, 2), std::invalid_argument);
    CHECK_THROWS_AS(pi_of_lambda(costs, -1.0, 2), std::invalid_argument);
  }
}

TEST_CASE("budget_usage arithmetic and monotonicity") {
  const std::vector<std::int64_t> costs{2, 2, 2};
  const std::vector<double> half{0.5, 0.5, 0.5};
  CHECK(budget_usage(costs, half) == doctest::Approx(3.0));
  const std::vector<double> ones{1.0, 1.0, 1.0};
  CHECK(budget_usage(costs, ones) == doctest::Approx(6.0));
  CHECK_THROWS_AS(budget_usage(costs, std::vector<double>{0.5}), std::invalid_argument);

  SplitMix64 rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::int64_t> c;
    const std::size_t n = 2 + rng.next() % 8;
    for (std::size_t i = 0; i < n; ++i) c.push_back(1 + static_cast<std::int64_t>(rng.next() % 20));
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda = 1e-4; lambda < 1e4; lambda *= 3.7) {
      const double u = budget_usage(c, pi_of_lambda(c, lambda, n));
      CHECK(u <= prev + 1e-12);
      prev = u;
    }
  }
}

TEST_CASE("solve: sufficient budget returns all ones without a multiplier") {
  const auto plan = solve({10, 10}, 25.0);
  CHECK_FALSE(plan.lambda_star.has_value());
  CHECK(plan.pi == std::vector<double>{1.0, 1.0});
  CHECK(plan.gamma == doctest::Approx(1.0));
}

TEST_CASE("solve: homogeneous costs give the closed-form base case") {
  const auto plan = solve({8, 8, 8, 8}, 16.0);
  REQUIRE(plan.lambda_star.has_value());
  for (double pi : plan.pi) CHECK(pi == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(budget_usage(plan.effective_costs, plan.pi) ==
        doctest::Approx(16.0).epsilon(1e-9));
}

TEST_CASE("solve: interior KKT hand case and the projected-gradient oracle") {
  // n=2, costs {1,4}, B=2: stationarity gives pi_1 = 2 pi_2, and the tight
  // budget pi_1 + 4 pi_2 = 2, so pi = (2/3, 1/3).
  const std::vector<std::int64_t> costs{1, 4};
  const auto plan = solve(costs, 2.0);
  CHECK(plan.pi[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
  CHECK(plan.pi[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

  const auto oracle_pi = ts::projected_gradient_allocate(costs, 2.0);
  CHECK(ts::allocation_objective(plan.pi) ==
        doctest::Approx(ts::allocation_objective(oracle_pi)).epsilon(1e-6));
  CHECK(oracle_pi[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-4));
}

TEST_CASE("solve: budget tightness and the weight bound hold on random instances") {
  SplitMix64 rng(97);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 1 + rng.next() % 50;
    std::vector<std::int64_t> costs;
    std::int64_t max_cost = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t c = 1 + static_cast<std::int64_t>(rng.next() % 100);
      costs.push_back(c);
      max_cost = std::max(max_cost, c);
      total += static_cast<double>(c);
    }
    const double budget = total * (0.05 + 0.9 * rng.next_double());
    const auto plan = solve(costs, budget);
    if (total <= budget) {
      CHECK_FALSE(plan.lambda_star.has_value());
      continue;
    }
    const double usage = budget_usage(plan.effective_costs, plan.pi);
    CHECK(std::abs(usage - budget) <= 1e-9 * budget);
    // Analytic weight bound, exact: no tolerance here.
    const double bound = weight_bound(n, max_cost, budget);
    for (double pi : plan.pi) {
      CHECK(1.0 / pi <= bound);
      CHECK(pi > 0.0);
      CHECK(pi <= 1.0);
    }
    CHECK(plan.gamma <= bound);
  }
}

TEST_CASE("solve: zero-cost entries are carried at probability one") {
  const auto plan = solve({0, 5, 3}, 4.0);
  CHECK(plan.pi[0] == 1.0);
  REQUIRE(plan.lambda_star.has_value());
  const double usage = budget_usage(plan.effective_costs, plan.pi);
  CHECK(std::abs(usage - 4.0) <= 1e-9 * 4.0);
}

TEST_CASE("solve: different initial brackets agree (uniqueness)") {
  const std::vector<std::int64_t> costs{3, 7, 1, 12, 5};
  SolveOptions wide;
  wide.lambda_high_init = 1e9;
  const auto a = solve(costs, 9.0);
  const auto b = solve(costs, 9.0, wide);
  for (std::size_t i = 0; i < costs.size(); ++i) {
    CHECK(a.pi[i] == doctest::Approx(b.pi[i]).epsilon(1e-7));
  }
}

TEST_CASE("solve input validation") {
  CHECK_THROWS_AS(solve({1, 2}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(solve({}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(solve({-1, 2}, 1.0), std::invalid_argument);
}

TEST_CASE("weight_bound formula") {
  CHECK(weight_bound(1000, 10, 10000.0) == doctest::Approx(1.0));
  CHECK(weight_bound(45000, 10, 45000.0) == doctest::Approx(10.0));
  CHECK_THROWS_AS(weight_bound(0, 10, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(weight_bound(10, 0, 1.0), std::invalid_argument);
}
