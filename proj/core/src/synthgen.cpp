#include "ttus/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ttus/io.hpp"

namespace ttus {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::calib: return "calib";
    case Split::test: return "test";
  }
  throw std::logic_error("unknown split");
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "calib") return Split::calib;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split name: " + std::string(name));
}

void SynthConfig::validate() const {
  if (n < 1) throw std::invalid_argument("dataset size n must be >= 1");
  if (d < 2) throw std::invalid_argument("feature dimension d must be >= 2");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be nonnegative");
  if (!(train_frac >= 0.0 && calib_frac >= 0.0 && test_frac >= 0.0)) {
    throw std::invalid_argument("split fractions must be nonnegative");
  }
  if (std::abs(train_frac + calib_frac + test_frac - 1.0) > 1e-12) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
}

std::vector<std::size_t> Dataset::indices(Split which) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == which) idx.push_back(i);
  }
  return idx;
}

std::vector<UnsafeProbability> sample_p_pool(std::size_t n, SplitMix64& rng) {
  if (n < 1) throw std::invalid_argument("pool size must be >= 1");
  const std::size_t n_high = static_cast<std::size_t>(0.9 * static_cast<double>(n));
  std::vector<UnsafeProbability> pool;
  pool.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool high_risk = i < n_high;
    const double lo = high_risk ? -4.0 : -6.0;
    const double exponent = lo + rng.next_double();
    pool.emplace_back(std::pow(10.0, exponent));
  }
  // Assignment without replacement: a Fisher-Yates permutation of the pool.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.next() % i;
    std::swap(pool[i - 1], pool[j]);
  }
  return pool;
}

std::vector<double> mu_of_p(UnsafeProbability p, int d, double normalizer) {
  if (d < 2) throw std::invalid_argument("mu_of_p requires d >= 2");
  if (!(normalizer > 0.0)) throw std::invalid_argument("normalizer must be positive");
  std::vector<double> mu(static_cast<std::size_t>(d));
  for (int j = 1; j <= d; ++j) {
    const double tau = 0.1 + 0.8 * static_cast<double>(j - 1) / (d - 1);
    const double q = static_cast<double>(geom_quantile(p, tau));
    mu[static_cast<std::size_t>(j - 1)] = std::pow(q, 0.25) / normalizer;
  }
  return mu;
}

Dataset generate_dataset(const SynthConfig& config) {
  config.validate();
  Dataset ds;
  ds.config = config;
  const std::size_t n = config.n;
  const int d = config.d;

  SplitMix64 pool_rng(derive_seed(config.seed, "p-pool"));
  const auto pool = sample_p_pool(n, pool_rng);

  // Single global normalizer over the full pool; computed before splitting.
  double sum = 0.0;
  for (const auto& p : pool) {
    for (int j = 1; j <= d; ++j) {
      const double tau = 0.1 + 0.8 * static_cast<double>(j - 1) / (d - 1);
      sum += std::pow(static_cast<double>(geom_quantile(p, tau)), 0.25);
    }
  }
  ds.mu_bar = sum / (static_cast<double>(n) * static_cast<double>(d));

  SplitMix64 noise_rng(derive_seed(config.seed, "noise"));
  ds.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    PromptRecord& rec = ds.records[i];
    rec.id = static_cast<std::int64_t>(i);
    rec.true_p = pool[i];
    rec.features = mu_of_p(pool[i], d, ds.mu_bar);
    for (int j = 0; j < d; j += 2) {
      const auto [z0, z1] = noise_rng.next_gaussian_pair();
      rec.features[static_cast<std::size_t>(j)] += config.sigma * z0;
      if (j + 1 < d) rec.features[static_cast<std::size_t>(j + 1)] += config.sigma * z1;
    }
  }

  const std::size_t n_train = static_cast<std::size_t>(config.train_frac * static_cast<double>(n));
  const std::size_t n_calib = static_cast<std::size_t>(config.calib_frac * static_cast<double>(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 split_rng(derive_seed(config.seed, "split"));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = split_rng.next() % i;
    std::swap(order[i - 1], order[j]);
  }
  ds.split.assign(n, Split::test);
  for (std::size_t k = 0; k < n_train; ++k) ds.split[order[k]] = Split::train;
  for (std::size_t k = n_train; k < n_train + n_calib; ++k) ds.split[order[k]] = Split::calib;
  return ds;
}

void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ostringstream out;
  const int d = dataset.config.d;
  out << "id,p";
  for (int j = 1; j <= d; ++j) out << ",x_" << j;
  out << ",split\n";
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& rec = dataset.records[i];
    out << rec.id << ',' << fmt_g17(rec.true_p->value());
    for (double x : rec.features) out << ',' << fmt_g17(x);
    out << ',' << to_string(dataset.split[i]) << '\n';
  }
  write_text_file(path, out.str());
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path.string());
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "p" ||
      header.back() != "split") {
    throw std::runtime_error("unexpected dataset header in " + path.string());
  }
  const int d = static_cast<int>(header.size()) - 3;

  Dataset ds;
  ds.config.d = d;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error("ragged dataset row in " + path.string());
    }
    PromptRecord rec;
    rec.id = std::strtoll(fields[0].c_str(), nullptr, 10);
    rec.true_p = UnsafeProbability(std::strtod(fields[1].c_str(), nullptr));
    rec.features.resize(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      rec.features[static_cast<std::size_t>(j)] =
          std::strtod(fields[static_cast<std::size_t>(j) + 2].c_str(), nullptr);
    }
    ds.split.push_back(split_from_string(fields.back()));
    ds.records.push_back(std::move(rec));
  }
  ds.config.n = ds.records.size();
  if (ds.records.empty()) throw std::runtime_error("dataset has no rows: " + path.string());
  return ds;
}

}  // namespace ttus
