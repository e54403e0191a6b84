#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "support/test_support.hpp"
#include "ttus/io.hpp"
#include "ttus/synthgen.hpp"

using namespace ttus;

TEST_CASE("sample_p_pool band proportions and determinism") {
  SplitMix64 rng(5);
  const auto pool = sample_p_pool(10, rng);
  REQUIRE(pool.size() == 10);
  int high = 0, low = 0;
  for (const auto& p : pool) {
    const double v = p.value();
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    if (v >= 1e-4 && v <= 1e-3) ++high;
    if (v >= 1e-6 && v <= 1e-5) ++low;
  }
  CHECK(high == 9);
  CHECK(low == 1);

  SplitMix64 a(42), b(42);
  const auto pa = sample_p_pool(100, a);
  const auto pb = sample_p_pool(100, b);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].value() == pb[i].value());
  }
}

TEST_CASE("mu_of_p evaluates the fourth-root quantile profile") {
  // p = 0.5, d = 2: tau grid {0.1, 0.9}; quantiles 1 and 4.
  const auto mu = mu_of_p(UnsafeProbability(0.5), 2, 1.0);
  REQUIRE(mu.size() == 2);
  CHECK(mu[0] == doctest::Approx(1.0));
  CHECK(mu[1] == doctest::Approx(std::pow(4.0, 0.25)).epsilon(1e-12));

  SUBCASE("componentwise non-increasing in p") {
    SplitMix64 rng(7);
    for (int rep = 0; rep < 100; ++rep) {
      double p1 = 1e-5 + 0.4 * rng.next_double();
      double p2 = 1e-5 + 0.4 * rng.next_double();
      if (p1 > p2) std::swap(p1, p2);
      const auto lo = mu_of_p(UnsafeProbability(p2), 6, 2.0);
      const auto hi = mu_of_p(UnsafeProbability(p1), 6, 2.0);
      for (std::size_t j = 0; j < lo.size(); ++j) CHECK(hi[j] >= lo[j]);
    }
  }
  SUBCASE("argument validation") {
    CHECK_THROWS_AS(mu_of_p(UnsafeProbability(0.5), 1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(mu_of_p(UnsafeProbability(0.5), 4, 0.0), std::invalid_argument);
  }
}

TEST_CASE("generate_dataset") {
  SynthConfig config;
  config.n = 2000;
  config.d = 10;
  config.sigma = 0.1;
  config.seed = 99;

  const auto ds = generate_dataset(config);
  REQUIRE(ds.records.size() == 2000);

  SUBCASE("split sizes are floor/floor/remainder, disjoint and exhaustive") {
    const auto train = ds.indices(Split::train);
    const auto calib = ds.indices(Split::calib);
    const auto test = ds.indices(Split::test);
    CHECK(train.size() == 900);
    CHECK(calib.size() == 900);
    CHECK(test.size() == 200);
    std::set<std::size_t> all;
    for (auto i : train) all.insert(i);
    for (auto i : calib) all.insert(i);
    for (auto i : test) all.insert(i);
    CHECK(all.size() == 2000);
  }
  SUBCASE("normalizer is the global mean of the transformed quantiles") {
    double sum = 0.0;
    for (const auto& rec : ds.records) {
      const auto raw = mu_of_p(*rec.true_p, config.d, 1.0);
      for (double v : raw) sum += v;
    }
    CHECK(ds.mu_bar ==
          doctest::Approx(sum / (2000.0 * config.d)).epsilon(1e-12));
  }
  SUBCASE("noise has the configured scale") {
    // Residuals against the known mean vector are N(0, sigma^2).
    double ss = 0.0;
    std::size_t count = 0;
    for (const auto& rec : ds.records) {
      const auto mean = mu_of_p(*rec.true_p, config.d, ds.mu_bar);
      for (std::size_t j = 0; j < mean.size(); ++j) {
        const double r = rec.features[j] - mean[j];
        ss += r * r;
        ++count;
      }
    }
    const double sd = std::sqrt(ss / static_cast<double>(count));
    const double se = 0.1 / std::sqrt(2.0 * static_cast<double>(count));
    CHECK(std::abs(sd - 0.1) <= 3.0 * se);
  }
  SUBCASE("sigma = 0 degenerates to the exact mean vector") {
    SynthConfig exact = config;
    exact.sigma = 0.0;
    exact.n = 50;
    const auto d0 = generate_dataset(exact);
    for (const auto& rec : d0.records) {
      const auto mean = mu_of_p(*rec.true_p, exact.d, d0.mu_bar);
      for (std::size_t j = 0; j < mean.size(); ++j) {
        CHECK(rec.features[j] == mean[j]);
      }
    }
  }
  SUBCASE("fractions must sum to one") {
    SynthConfig bad = config;
    bad.test_frac = 0.3;
    CHECK_THROWS_AS(generate_dataset(bad), std::invalid_argument);
  }
}

TEST_CASE("dataset CSV round-trips and regenerates byte-identically") {
  SynthConfig config;
  config.n = 300;
  config.d = 4;
  config.seed = 123;
  const auto ds = generate_dataset(config);

  const auto dir = std::filesystem::temp_directory_path() / "ttus_synth_test";
  std::filesystem::create_directories(dir);
  const auto path_a = dir / "a.csv";
  const auto path_b = dir / "b.csv";
  write_dataset_csv(ds, path_a);
  write_dataset_csv(generate_dataset(config), path_b);
  CHECK(read_text_file(path_a) == read_text_file(path_b));

  const auto back = read_dataset_csv(path_a);
  REQUIRE(back.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    CHECK(back.records[i].id == ds.records[i].id);
    CHECK(back.records[i].true_p->value() == ds.records[i].true_p->value());
    CHECK(back.records[i].features == ds.records[i].features);
    CHECK(back.split[i] == ds.split[i]);
  }
  std::filesystem::remove_all(dir);
}
