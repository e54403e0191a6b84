#include "ttus/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ttus/rng.hpp"

namespace ttus {

namespace {

double softplus(double z) {
  // log(1 + e^z) without overflow on either tail.
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<int> layer_sizes(int input_dim, const std::vector<int>& hidden) {
  std::vector<int> sizes;
  sizes.push_back(input_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return sizes;
}

void validate_examples(const std::vector<TrainingExample>& examples) {
  if (examples.empty()) {
    throw std::invalid_argument("fit requires a nonempty training set");
  }
  const std::size_t d = examples.front().features.size();
  if (d == 0) throw std::invalid_argument("training features are empty");
  for (const auto& ex : examples) {
    if (ex.features.size() != d) {
      throw std::invalid_argument("training examples disagree on feature dimension");
    }
    if (ex.trials < 1) throw std::invalid_argument("trials must be positive");
    if (!(ex.unsafe_fraction >= 0.0 && ex.unsafe_fraction <= 1.0)) {
      throw std::invalid_argument("unsafe_fraction must lie in [0, 1]");
    }
    const double scaled = ex.unsafe_fraction * static_cast<double>(ex.trials);
    if (std::abs(scaled - std::nearbyint(scaled)) > 1e-9) {
      throw std::invalid_argument(
          "unsafe_fraction * trials must be integral (got " +
          std::to_string(scaled) + ")");
    }
  }
}

}  // namespace

double aggregate_bce(double unsafe_fraction, double p_hat) {
  return -(unsafe_fraction * std::log(p_hat) +
           (1.0 - unsafe_fraction) * std::log1p(-p_hat));
}

namespace mlp {

std::size_t Net::param_count(int input_dim, const std::vector<int>& hidden) {
  const auto sizes = layer_sizes(input_dim, hidden);
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    count += static_cast<std::size_t>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
  }
  return count;
}

double Net::logit(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != input_dim) {
    throw std::invalid_argument("feature dimension mismatch: expected " +
                                std::to_string(input_dim) + ", got " +
                                std::to_string(x.size()));
  }
  const auto sizes = layer_sizes(input_dim, hidden);
  std::vector<double> act(x.begin(), x.end());
  std::vector<double> next;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    next.assign(static_cast<std::size_t>(out), 0.0);
    const double* w = params.data() + offset;
    const double* b = w + static_cast<std::size_t>(out) * in;
    for (int o = 0; o < out; ++o) {
      double z = b[o];
      const double* row = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) z += row[i] * act[i];
      const bool is_last = (l + 2 == sizes.size());
      next[o] = is_last ? z : (z > 0.0 ? z : 0.0);
    }
    act.swap(next);
    offset += static_cast<std::size_t>(out) * in + out;
  }
  return act[0];
}

double loss_and_grad(const Net& net, std::span<const TrainingExample> examples,
                     std::vector<double>* grad) {
  const auto sizes = layer_sizes(net.input_dim, net.hidden);
  const std::size_t n_layers = sizes.size() - 1;
  if (grad != nullptr) grad->assign(net.params.size(), 0.0);

  // Per-layer parameter offsets.
  std::vector<std::size_t> offsets(n_layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(sizes[l + 1]) * sizes[l] + sizes[l + 1];
  }

  double total_loss = 0.0;
  std::vector<std::vector<double>> acts(n_layers + 1);
  std::vector<std::vector<double>> deltas(n_layers + 1);

  for (const auto& ex : examples) {
    if (static_cast<int>(ex.features.size()) != net.input_dim) {
      throw std::invalid_argument("feature dimension mismatch in training set");
    }
    acts[0].assign(ex.features.begin(), ex.features.end());
    for (std::size_t l = 0; l < n_layers; ++l) {
      const int in = sizes[l];
      const int out = sizes[l + 1];
      acts[l + 1].assign(static_cast<std::size_t>(out), 0.0);
      const double* w = net.params.data() + offsets[l];
      const double* b = w + static_cast<std::size_t>(out) * in;
      for (int o = 0; o < out; ++o) {
        double z = b[o];
        const double* row = w + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) z += row[i] * acts[l][i];
        const bool is_last = (l + 1 == n_layers);
        acts[l + 1][o] = is_last ? z : (z > 0.0 ? z : 0.0);
      }
    }

    const double z = acts[n_layers][0];
    const double y = ex.unsafe_fraction;
    total_loss += y * softplus(-z) + (1.0 - y) * softplus(z);
    if (grad == nullptr) continue;

    deltas[n_layers].assign(1, sigmoid(z) - y);
    for (std::size_t l = n_layers; l-- > 0;) {
      const int in = sizes[l];
      const int out = sizes[l + 1];
      const double* w = net.params.data() + offsets[l];
      double* gw = grad->data() + offsets[l];
      double* gb = gw + static_cast<std::size_t>(out) * in;
      deltas[l].assign(static_cast<std::size_t>(in), 0.0);
      for (int o = 0; o < out; ++o) {
        const double d = deltas[l + 1][o];
        if (d == 0.0) continue;
        const double* row = w + static_cast<std::size_t>(o) * in;
        double* grow = gw + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
          grow[i] += d * acts[l][i];
          deltas[l][i] += d * row[i];
        }
        gb[o] += d;
      }
      if (l > 0) {
        // ReLU gate: the activation is zero exactly where the unit was off.
        for (int i = 0; i < in; ++i) {
          if (acts[l][i] <= 0.0) deltas[l][i] = 0.0;
        }
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(examples.size());
  if (grad != nullptr) {
    for (double& g : *grad) g *= inv_n;
  }
  return total_loss * inv_n;
}

}  // namespace mlp

ProbabilityModel::ProbabilityModel(mlp::Net net, double p_min)
    : net_(std::move(net)), p_min_(p_min) {
  if (!(p_min > 0.0 && p_min < 0.5)) {
    throw std::invalid_argument("p_min must lie in (0, 0.5)");
  }
  if (net_.params.size() != mlp::Net::param_count(net_.input_dim, net_.hidden)) {
    throw std::invalid_argument("parameter vector does not match architecture");
  }
}

ProbabilityModel ProbabilityModel::fit(
    const std::vector<TrainingExample>& examples, const ModelConfig& config) {
  validate_examples(examples);
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("learning_rate must be positive");
  }

  const int d = static_cast<int>(examples.front().features.size());
  mlp::Net net;
  net.input_dim = d;
  net.hidden = config.hidden_layers;
  net.params.assign(mlp::Net::param_count(d, net.hidden), 0.0);

  SplitMix64 rng(derive_seed(config.seed, "model-init"));
  const auto sizes = layer_sizes(d, net.hidden);
  {
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const int in = sizes[l];
      const int out = sizes[l + 1];
      const bool is_last = (l + 2 == sizes.size());
      // He scaling in front of ReLU, Glorot-style 1/fan_in at the output.
      const double scale = is_last ? std::sqrt(1.0 / in) : std::sqrt(2.0 / in);
      for (int j = 0; j < out * in; ++j) {
        net.params[off + j] = scale * rng.next_gaussian_pair().first;
      }
      off += static_cast<std::size_t>(out) * in + out;
    }
    // Start the output unit at the base rate so the sigmoid is not stuck at
    // 0.5 when unsafe outcomes are rare.
    double mean_y = 0.0;
    for (const auto& ex : examples) mean_y += ex.unsafe_fraction;
    mean_y /= static_cast<double>(examples.size());
    mean_y = std::clamp(mean_y, config.p_min, 1.0 - config.p_min);
    net.params[net.params.size() - 1] = std::log(mean_y / (1.0 - mean_y));
  }

  const std::size_t n = examples.size();
  const std::size_t n_params = net.params.size();
  std::vector<double> m(n_params, 0.0), v(n_params, 0.0), grad;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TrainingExample> batch;

  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  SplitMix64 shuffle_rng(derive_seed(config.seed, "model-shuffle"));

  std::vector<double> epoch_losses;
  std::vector<double> best_params = net.params;
  double best_loss = mlp::loss_and_grad(net, examples, nullptr);
  bool stopped_early = false;
  std::int64_t step = 0;

  for (int epoch = 0; epoch < config.epochs && !stopped_early; ++epoch) {
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = shuffle_rng.next() % i;
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(examples[order[i]]);
      const double batch_loss = mlp::loss_and_grad(net, batch, &grad);
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("non-finite training loss at epoch " +
                                 std::to_string(epoch + 1) + ", step " +
                                 std::to_string(step + 1));
      }
      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < n_params; ++k) {
        m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
        v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
        const double update = (m[k] / bc1) / (std::sqrt(v[k] / bc2) + adam_eps);
        net.params[k] -= config.learning_rate * update +
                         config.learning_rate * config.weight_decay * net.params[k];
      }
    }
    const double epoch_loss = mlp::loss_and_grad(net, examples, nullptr);
    if (!std::isfinite(epoch_loss)) {
      throw std::runtime_error("non-finite training loss after epoch " +
                               std::to_string(epoch + 1));
    }
    epoch_losses.push_back(epoch_loss);
    if (epoch_loss > best_loss + 1e-6) {
      net.params = best_params;
      stopped_early = true;
    } else if (epoch_loss < best_loss) {
      best_loss = epoch_loss;
      best_params = net.params;
    }
  }

  ProbabilityModel model(std::move(net), config.p_min);
  model.epoch_losses_ = std::move(epoch_losses);
  return model;
}

UnsafeProbability ProbabilityModel::predict_p(
    std::span<const double> features) const {
  const double z = net_.logit(features);
  const double p = std::clamp(sigmoid(z), p_min_, 1.0 - p_min_);
  return UnsafeProbability(p);
}

std::int64_t ProbabilityModel::predict_quantile(std::span<const double> features,
                                                double tau) const {
  return geom_quantile(predict_p(features), tau);
}

namespace {

constexpr char kMagic[8] = {'T', 'T', 'U', 'S', 'M', 'D', 'L', '1'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(buf, 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(buf, 8);
}

void put_f64(std::ofstream& out, double d) {
  put_u64(out, std::bit_cast<std::uint64_t>(d));
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void ProbabilityModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open model file for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(net_.input_dim));
  put_u32(out, static_cast<std::uint32_t>(net_.hidden.size()));
  for (int h : net_.hidden) put_u32(out, static_cast<std::uint32_t>(h));
  put_f64(out, p_min_);
  put_u64(out, net_.params.size());
  for (double p : net_.params) put_f64(out, p);
  if (!out) throw std::runtime_error("failed writing model file: " + path.string());
}

ProbabilityModel ProbabilityModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a model file: " + path.string());
  }
  const std::uint32_t version = get_u32(in);
  if (version != 1) {
    throw std::runtime_error("unsupported model file version " + std::to_string(version));
  }
  mlp::Net net;
  net.input_dim = static_cast<int>(get_u32(in));
  const std::uint32_t n_hidden = get_u32(in);
  for (std::uint32_t i = 0; i < n_hidden; ++i) {
    net.hidden.push_back(static_cast<int>(get_u32(in)));
  }
  const double p_min = get_f64(in);
  const std::uint64_t count = get_u64(in);
  if (count != mlp::Net::param_count(net.input_dim, net.hidden)) {
    throw std::runtime_error("model file parameter count mismatch");
  }
  net.params.resize(count);
  for (auto& p : net.params) p = get_f64(in);
  if (!in) throw std::runtime_error("truncated model file: " + path.string());
  return ProbabilityModel(std::move(net), p_min);
}

}  // namespace ttus
