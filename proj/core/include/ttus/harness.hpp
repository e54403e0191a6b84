#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttus/calibrate.hpp"
#include "ttus/model.hpp"
#include "ttus/synthgen.hpp"

namespace ttus {

/// One calibration run's metrics. avg_coverage is the analytic
/// P(T >= LPB) averaged over the test set; avg_coverage_strict is the
/// complementary-atom convention P(T > LPB) and is reported in the JSON
/// summary only (the CSV schema is fixed).
struct MetricsRow {
  int run_index = 0;
  std::string mode;
  double budget_per_prompt = 0.0;
  double avg_coverage = 0.0;
  double avg_lpb = 0.0;
  double avg_budget = 0.0;
  double tau_hat = 0.0;
  double gamma = 0.0;
  double pac_slack = 0.0;
  std::uint64_t seed = 0;
  double avg_coverage_strict = 0.0;
};

/// Numerically stable single-pass mean/std accumulator.
class RunningStat {
 public:
  void add(double x);
  std::size_t count() const { return count_; }
  double mean() const;
  /// Sample standard deviation; 0 for fewer than two points.
  double std_sample() const;

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct Aggregate {
  std::size_t runs = 0;
  double coverage_mean = 0.0, coverage_std = 0.0;
  double coverage_strict_mean = 0.0, coverage_strict_std = 0.0;
  double lpb_mean = 0.0, lpb_std = 0.0;
  double budget_mean = 0.0, budget_std = 0.0;
  double tau_hat_mean = 0.0, tau_hat_std = 0.0;
};

std::map<std::string, Aggregate> aggregate_by_mode(std::span<const MetricsRow> rows);

/// Analytic metrics for one calibrated run: coverage from the true
/// generating probabilities (never the oracle), mean LPB over the test set,
/// and the realized (or simulated) calibration draw count per prompt.
MetricsRow evaluate_run(const CalibrationResult& result,
                        std::span<const double> p_hat_test,
                        std::span<const PromptRecord> test_prompts,
                        double budget_per_prompt, int run_index,
                        std::uint64_t seed);

/// The raw-quantile baseline: LPB = qhat_alpha(x), no calibration and no
/// sampling budget spent. gamma and pac_slack carry NaN (no guarantee exists).
MetricsRow evaluate_uncalibrated(std::span<const double> p_hat_test,
                                 std::span<const PromptRecord> test_prompts,
                                 double alpha, double budget_per_prompt,
                                 int run_index, std::uint64_t seed);

struct ExperimentSpec {
  std::vector<std::string> modes{"uncalibrated", "naive", "naive_efficient",
                                 "basic",        "trimmed", "optimized"};
  double budget_per_prompt = 100.0;
  int runs = 20;
  double alpha = 0.1;
  double tau_prior = 0.5623413251903491;
  double delta = 0.1;
  /// Cap for trimmed/optimized; derived as floor(budget_per_prompt *
  /// gamma_target) when absent.
  std::optional<std::int64_t> trim_M;
  double gamma_target = 10.0;
  bool restrict_naive_grid = true;
  std::uint64_t master_seed = 0;
  int threads = 1;
};

struct ExperimentResult {
  double budget_per_prompt = 0.0;
  double gamma_target = 0.0;
  double alpha = 0.0;
  std::optional<std::int64_t> trim_M;
  std::vector<MetricsRow> rows;  // ordered by (run_index, configured mode order)
};

/// J independent censoring/outcome redraws on the fixed dataset split. Runs
/// may execute in parallel; per-run seeds are derived from the master seed
/// and the mode name, so row content is independent of scheduling.
ExperimentResult run_experiment(const Dataset& dataset,
                                const ProbabilityModel& model,
                                const ExperimentSpec& spec);

struct SweepSpec {
  ExperimentSpec base;
  std::vector<double> budgets_per_prompt{10, 25, 50, 100, 200, 300, 600, 1200};
  std::vector<double> gammas{10.0};
  std::vector<double> alphas{0.1};
};

struct SweepResult {
  std::vector<ExperimentResult> cells;
  std::vector<std::string> skipped;  // settings with derived M < 1
};

SweepResult sweep(const Dataset& dataset, const ProbabilityModel& model,
                  const SweepSpec& spec);

/// CSV with the exact MetricsRow header
/// run_index,mode,budget_per_prompt,avg_coverage,avg_lpb,avg_budget,tau_hat,gamma,pac_slack,seed
std::string metrics_csv(std::span<const MetricsRow> rows);
void write_metrics_csv(std::span<const MetricsRow> rows,
                       const std::filesystem::path& path);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

/// JSON summary: coverage-convention flags, per-cell per-mode aggregates and
/// per-run selections. config_echo_json must be a serialized JSON object (or
/// empty for none) and is embedded verbatim.
std::string summary_json(const SweepResult& result,
                         const std::string& config_echo_json);

/// Serialized calibration artifact (alpha curve, weights, pi, selections).
std::string calibration_result_json(const CalibrationResult& result);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> std_dev;
};

struct PanelSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  std::optional<double> dashed_y;
  bool log_x = true;
};

/// Standalone SVG line chart with a +-1 std band per series.
std::string render_line_chart_svg(const PanelSpec& panel);

struct EmitResult {
  std::vector<std::filesystem::path> files;
  std::string notice;  // set when nothing was plotted
};

/// Three panels (coverage, mean samplings per prompt, mean LPB, each vs
/// budget per prompt) for every (gamma, alpha) group in the sweep, as SVG
/// plus a data CSV per panel.
EmitResult emit_plots(const SweepResult& result,
                      const std::filesystem::path& out_dir);

}  // namespace ttus
