#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "ttus/geom.hpp"
#include "ttus/oracle.hpp"
#include "ttus/rng.hpp"

namespace ttus {

enum class Split { train, calib, test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct SynthConfig {
  std::size_t n = 0;
  int d = 10;
  double sigma = 0.1;
  std::uint64_t seed = 0;
  double train_frac = 0.45;
  double calib_frac = 0.45;
  double test_frac = 0.10;

  void validate() const;
};

struct Dataset {
  std::vector<PromptRecord> records;  // true_p always present
  std::vector<Split> split;           // aligned with records
  double mu_bar = 0.0;                // feature normalizer of this dataset
  SynthConfig config;

  std::vector<std::size_t> indices(Split which) const;
};

/// Heavy-tailed unsafe-probability pool: floor(0.9 n) values log10-uniform in
/// [-4, -3] and the rest log10-uniform in [-6, -5], assigned to positions by
/// a random permutation.
std::vector<UnsafeProbability> sample_p_pool(std::size_t n, SplitMix64& rng);

/// Mean vector: component j is geom_quantile(p, tau_j)^(1/4) / normalizer
/// with tau_j = 0.1 + 0.8 (j-1)/(d-1). The fourth root tames the raw
/// quantile scale.
std::vector<double> mu_of_p(UnsafeProbability p, int d, double normalizer);

/// Full generator: p pool, global normalizer mu_bar over all n records,
/// features ~ N(mu(p), sigma^2 I) via Box-Muller, and a seeded-permutation
/// split (floor(train), floor(calib), remainder test).
Dataset generate_dataset(const SynthConfig& config);

/// CSV with header id,p,x_1..x_d,split; floats at 17 significant digits so
/// the round trip is lossless and regeneration is byte-identical.
void write_dataset_csv(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace ttus
