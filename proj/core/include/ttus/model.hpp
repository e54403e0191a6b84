#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ttus/geom.hpp"

namespace ttus {

/// One training prompt with its aggregate audit outcome: unsafe_fraction is
/// the empirical unsafe rate over `trials` sampled outputs.
struct TrainingExample {
  std::vector<double> features;
  std::int64_t trials = 0;
  double unsafe_fraction = 0.0;
};

/// Binary cross-entropy against an aggregate target. Minimizing the mean of
/// this over prompts equals minimizing the mean per-sample BCE over the
/// expanded outcome set.
double aggregate_bce(double unsafe_fraction, double p_hat);

struct ModelConfig {
  /// Hidden layer widths; empty means plain logistic regression.
  std::vector<int> hidden_layers{32, 32, 32, 32};
  /// Large enough for the optimizer to traverse the logit range of
  /// rare-event data within the default epoch budget.
  double learning_rate = 1e-2;
  double weight_decay = 1e-5;
  int batch_size = 100;
  int epochs = 10;
  double p_min = 1e-9;
  std::uint64_t seed = 0;
};

namespace mlp {

/// Flat-parameter MLP with ReLU hidden activations and a single linear
/// output unit read through a sigmoid. Exposed so tests can finite-difference
/// the gradients.
struct Net {
  int input_dim = 0;
  std::vector<int> hidden;
  std::vector<double> params;

  static std::size_t param_count(int input_dim, const std::vector<int>& hidden);
  double logit(std::span<const double> x) const;
};

/// Mean aggregate BCE over `examples` and, if grad != nullptr, its gradient
/// with respect to net.params (accumulated into *grad, which is zeroed here).
double loss_and_grad(const Net& net,
                     std::span<const TrainingExample> examples,
                     std::vector<double>* grad);

}  // namespace mlp

/// Unsafe-probability estimator p_hat(x) with the closed-form geometric
/// quantile transform on top. Immutable after fit(); safe to share across
/// threads for prediction.
class ProbabilityModel {
 public:
  ProbabilityModel(mlp::Net net, double p_min);

  /// Trains by mini-batch gradient descent with adaptive moment scaling and
  /// decoupled weight decay on the aggregate BCE. Deterministic given
  /// config.seed. An epoch whose full-set loss worsens by more than 1e-6
  /// triggers early stopping at the best epoch seen.
  static ProbabilityModel fit(const std::vector<TrainingExample>& examples,
                              const ModelConfig& config);

  /// Prediction clamped to [p_min, 1 - p_min].
  UnsafeProbability predict_p(std::span<const double> features) const;

  /// geom_quantile(predict_p(x), tau).
  std::int64_t predict_quantile(std::span<const double> features,
                                double tau) const;

  int input_dim() const { return net_.input_dim; }
  double p_min() const { return p_min_; }
  const mlp::Net& net() const { return net_; }
  /// Full-training-set loss recorded after each completed epoch.
  const std::vector<double>& epoch_losses() const { return epoch_losses_; }

  /// Flat little-endian binary: header (magic, version, architecture, p_min)
  /// followed by the parameter vector as 64-bit floats.
  void save(const std::filesystem::path& path) const;
  static ProbabilityModel load(const std::filesystem::path& path);

 private:
  mlp::Net net_;
  double p_min_;
  std::vector<double> epoch_losses_;
};

}  // namespace ttus
