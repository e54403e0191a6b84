#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "support/test_support.hpp"
#include "ttus/model.hpp"

using namespace ttus;

namespace {

std::vector<TrainingExample> cluster_examples(double x, double ybar, int count,
                                              std::int64_t trials) {
  std::vector<TrainingExample> out;
  for (int i = 0; i < count; ++i) {
    out.push_back({{x}, trials, ybar});
  }
  return out;
}

ProbabilityModel linear_model(std::vector<double> weights, double bias,
                              double p_min = 1e-9) {
  mlp::Net net;
  net.input_dim = static_cast<int>(weights.size());
  net.params = std::move(weights);
  net.params.push_back(bias);
  return ProbabilityModel(std::move(net), p_min);
}

}  // namespace

TEST_CASE("aggregate BCE equals the mean of per-sample BCE") {
  SplitMix64 rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.next() % 40);
    std::int64_t unsafe = 0;
    for (std::int64_t j = 0; j < n; ++j) unsafe += (rng.next_double() < 0.3) ? 1 : 0;
    const double ybar = static_cast<double>(unsafe) / static_cast<double>(n);
    const double p_hat = 0.01 + 0.98 * rng.next_double();
    double expanded = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      expanded += aggregate_bce(j < unsafe ? 1.0 : 0.0, p_hat);
    }
    expanded /= static_cast<double>(n);
    CHECK(aggregate_bce(ybar, p_hat) == doctest::Approx(expanded).epsilon(1e-10));
  }
}

TEST_CASE("fit drives a constant-output model to the aggregate mean") {
  ModelConfig config;
  config.hidden_layers = {};
  config.learning_rate = 0.2;
  config.weight_decay = 0.0;
  config.batch_size = 1;
  config.epochs = 400;
  config.seed = 3;
  const auto model = ProbabilityModel::fit({{{0.0}, 10, 0.3}}, config);
  CHECK(model.predict_p(std::vector<double>{0.0}).value() ==
        doctest::Approx(0.3).epsilon(1e-3));
}

TEST_CASE("fit separates two clusters to their aggregate means") {
  auto examples = cluster_examples(-2.0, 0.9, 40, 10);
  const auto lo = cluster_examples(2.0, 0.1, 40, 10);
  examples.insert(examples.end(), lo.begin(), lo.end());
  ModelConfig config;
  config.hidden_layers = {};
  config.learning_rate = 0.05;
  config.weight_decay = 0.0;
  config.batch_size = 8;
  config.epochs = 600;
  config.seed = 5;
  const auto model = ProbabilityModel::fit(examples, config);
  CHECK(std::abs(model.predict_p(std::vector<double>{-2.0}).value() - 0.9) < 0.05);
  CHECK(std::abs(model.predict_p(std::vector<double>{2.0}).value() - 0.1) < 0.05);
}

TEST_CASE("analytic gradients match central finite differences") {
  SplitMix64 rng(23);
  mlp::Net net;
  net.input_dim = 3;
  net.hidden = {4, 3};
  net.params.resize(mlp::Net::param_count(3, {4, 3}));
  for (auto& p : net.params) p = 0.5 * rng.next_gaussian_pair().first;

  std::vector<TrainingExample> examples;
  for (int i = 0; i < 5; ++i) {
    TrainingExample ex;
    ex.features = {rng.next_gaussian_pair().first, rng.next_gaussian_pair().first,
                   rng.next_gaussian_pair().first};
    ex.trials = 10;
    ex.unsafe_fraction = static_cast<double>(rng.next() % 11) / 10.0;
    examples.push_back(ex);
  }

  std::vector<double> grad;
  mlp::loss_and_grad(net, examples, &grad);

  const double h = 1e-5;
  for (std::size_t k = 0; k < net.params.size(); ++k) {
    mlp::Net plus = net, minus = net;
    plus.params[k] += h;
    minus.params[k] -= h;
    const double fd = (mlp::loss_and_grad(plus, examples, nullptr) -
                       mlp::loss_and_grad(minus, examples, nullptr)) /
                      (2.0 * h);
    const double denom = std::max(std::abs(fd), 1e-6);
    CHECK(std::abs(grad[k] - fd) / denom <= 1e-4);
  }
}

TEST_CASE("epoch losses are non-increasing up to tolerance, or training stopped early") {
  SplitMix64 rng(29);
  std::vector<TrainingExample> examples;
  for (int i = 0; i < 200; ++i) {
    const double x = rng.next_gaussian_pair().first;
    const double p_true = 1.0 / (1.0 + std::exp(-x));
    std::int64_t unsafe = 0;
    for (int j = 0; j < 20; ++j) unsafe += rng.next_double() < p_true ? 1 : 0;
    examples.push_back({{x}, 20, static_cast<double>(unsafe) / 20.0});
  }
  ModelConfig config;
  config.hidden_layers = {8, 8};
  config.learning_rate = 0.01;
  config.batch_size = 20;
  config.epochs = 30;
  config.seed = 7;
  const auto model = ProbabilityModel::fit(examples, config);
  const auto& losses = model.epoch_losses();
  REQUIRE(!losses.empty());
  for (std::size_t e = 1; e + 1 < losses.size(); ++e) {
    CHECK(losses[e] <= losses[e - 1] + 1e-6);
  }
  // The final recorded epoch either kept the trend or triggered the stop.
  if (losses.size() >= 2 && losses.back() > losses[losses.size() - 2] + 1e-6) {
    CHECK(losses.size() < static_cast<std::size_t>(config.epochs));
  }
}

TEST_CASE("predictions are clamped, pure, and dimension-checked") {
  const auto model = linear_model({50.0}, 0.0, 1e-6);
  CHECK(model.predict_p(std::vector<double>{10.0}).value() == doctest::Approx(1.0 - 1e-6));
  CHECK(model.predict_p(std::vector<double>{-10.0}).value() == doctest::Approx(1e-6));
  const double a = model.predict_p(std::vector<double>{0.37}).value();
  const double b = model.predict_p(std::vector<double>{0.37}).value();
  CHECK(a == b);
  CHECK_THROWS_AS(model.predict_p(std::vector<double>{1.0, 2.0}), std::invalid_argument);

  SUBCASE("bias-only model is the clamped sigmoid") {
    const auto biased = linear_model({0.0}, -1.2, 1e-9);
    CHECK(biased.predict_p(std::vector<double>{123.0}).value() ==
          doctest::Approx(1.0 / (1.0 + std::exp(1.2))).epsilon(1e-12));
  }
}

TEST_CASE("predict_quantile composes the closed-form transform") {
  // logit(0.1) bias gives p_hat exactly 0.1.
  const auto model = linear_model({0.0}, std::log(0.1 / 0.9));
  CHECK(model.predict_quantile(std::vector<double>{0.0}, 0.0) == 0);
  CHECK(model.predict_quantile(std::vector<double>{0.0}, 0.9) == 22);

  SplitMix64 rng(41);
  const auto random_model = linear_model({0.7, -0.3}, 0.1);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::vector<double> x{rng.next_gaussian_pair().first,
                                rng.next_gaussian_pair().second};
    double t1 = 0.999 * rng.next_double();
    double t2 = 0.999 * rng.next_double();
    if (t1 > t2) std::swap(t1, t2);
    CHECK(random_model.predict_quantile(x, t1) <= random_model.predict_quantile(x, t2));
  }
}

TEST_CASE("fit validation and failure reporting") {
  ModelConfig config;
  config.hidden_layers = {};
  CHECK_THROWS_AS(ProbabilityModel::fit({}, config), std::invalid_argument);
  CHECK_THROWS_AS(
      ProbabilityModel::fit({{{1.0}, 10, 0.5}, {{1.0, 2.0}, 10, 0.5}}, config),
      std::invalid_argument);
  // 0.305 * 10 = 3.05 is not a count.
  CHECK_THROWS_AS(ProbabilityModel::fit({{{1.0}, 10, 0.305}}, config),
                  std::invalid_argument);
  CHECK_THROWS_AS(ProbabilityModel::fit({{{1.0}, 0, 0.0}}, config),
                  std::invalid_argument);

  SUBCASE("non-finite inputs surface as a runtime error naming the step") {
    const double inf = std::numeric_limits<double>::infinity();
    ModelConfig cfg;
    cfg.hidden_layers = {};
    cfg.epochs = 1;
    try {
      ProbabilityModel::fit({{{inf}, 10, 0.5}}, cfg);
      FAIL("expected a runtime_error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }
}

TEST_CASE("model persistence round-trips bit-exactly") {
  ModelConfig config;
  config.hidden_layers = {6, 4};
  config.epochs = 2;
  config.seed = 11;
  std::vector<TrainingExample> examples;
  SplitMix64 rng(13);
  for (int i = 0; i < 30; ++i) {
    examples.push_back({{rng.next_gaussian_pair().first, rng.next_double()},
                        5,
                        static_cast<double>(rng.next() % 6) / 5.0});
  }
  const auto model = ProbabilityModel::fit(examples, config);

  const auto path = std::filesystem::temp_directory_path() / "ttus_model_test.bin";
  model.save(path);
  const auto loaded = ProbabilityModel::load(path);
  CHECK(loaded.input_dim() == model.input_dim());
  CHECK(loaded.p_min() == model.p_min());
  for (int rep = 0; rep < 50; ++rep) {
    const std::vector<double> x{rng.next_gaussian_pair().first, rng.next_double()};
    CHECK(loaded.predict_p(x).value() == model.predict_p(x).value());
  }
  std::filesystem::remove(path);

  SUBCASE("corrupt magic is rejected") {
    const auto bad = std::filesystem::temp_directory_path() / "ttus_model_bad.bin";
    std::FILE* f = std::fopen(bad.c_str(), "wb");
    std::fputs("NOTAMODEL", f);
    std::fclose(f);
    CHECK_THROWS_AS(ProbabilityModel::load(bad), std::runtime_error);
    std::filesystem::remove(bad);
  }
}

TEST_CASE("fit is deterministic given a seed") {
  std::vector<TrainingExample> examples;
  SplitMix64 rng(99);
  for (int i = 0; i < 50; ++i) {
    examples.push_back({{rng.next_gaussian_pair().first}, 4,
                        static_cast<double>(rng.next() % 5) / 4.0});
  }
  ModelConfig config;
  config.hidden_layers = {8};
  config.epochs = 3;
  config.seed = 21;
  const auto a = ProbabilityModel::fit(examples, config);
  const auto b = ProbabilityModel::fit(examples, config);
  CHECK(a.net().params == b.net().params);
}
