#include "ttus/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "ttus/io.hpp"

namespace ttus {

namespace {

using nlohmann::json;

void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  const int workers = std::min<int>(threads, static_cast<int>(count));
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double coverage_at(const UnsafeProbability& true_p, std::int64_t lpb) {
  return lpb == 0 ? 1.0 : geom_sf(true_p, lpb);
}

json stat_json(double mean, double std_dev) {
  return json{{"mean", mean}, {"std", std_dev}};
}

}  // namespace

void RunningStat::add(double x) {
  ++count_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (x - mean_);
}

double RunningStat::mean() const { return count_ == 0 ? 0.0 : mean_; }

double RunningStat::std_sample() const {
  if (count_ < 2) return 0.0;
  return std::sqrt(m2_ / static_cast<double>(count_ - 1));
}

std::map<std::string, Aggregate> aggregate_by_mode(
    std::span<const MetricsRow> rows) {
  struct Acc {
    RunningStat coverage, coverage_strict, lpb, budget, tau_hat;
  };
  std::map<std::string, Acc> accs;
  for (const auto& row : rows) {
    Acc& a = accs[row.mode];
    a.coverage.add(row.avg_coverage);
    a.coverage_strict.add(row.avg_coverage_strict);
    a.lpb.add(row.avg_lpb);
    a.budget.add(row.avg_budget);
    a.tau_hat.add(row.tau_hat);
  }
  std::map<std::string, Aggregate> out;
  for (const auto& [mode, a] : accs) {
    Aggregate agg;
    agg.runs = a.coverage.count();
    agg.coverage_mean = a.coverage.mean();
    agg.coverage_std = a.coverage.std_sample();
    agg.coverage_strict_mean = a.coverage_strict.mean();
    agg.coverage_strict_std = a.coverage_strict.std_sample();
    agg.lpb_mean = a.lpb.mean();
    agg.lpb_std = a.lpb.std_sample();
    agg.budget_mean = a.budget.mean();
    agg.budget_std = a.budget.std_sample();
    agg.tau_hat_mean = a.tau_hat.mean();
    agg.tau_hat_std = a.tau_hat.std_sample();
    out.emplace(mode, agg);
  }
  return out;
}

MetricsRow evaluate_run(const CalibrationResult& result,
                        std::span<const double> p_hat_test,
                        std::span<const PromptRecord> test_prompts,
                        double budget_per_prompt, int run_index,
                        std::uint64_t seed) {
  if (p_hat_test.size() != test_prompts.size()) {
    throw std::invalid_argument("test predictions are not aligned with prompts");
  }
  if (test_prompts.empty()) throw std::invalid_argument("empty test set");
  MetricsRow row;
  row.run_index = run_index;
  row.mode = std::string(to_string(result.mode));
  row.budget_per_prompt = budget_per_prompt;
  row.seed = seed;
  row.tau_hat = result.tau_hat;
  row.gamma = result.gamma;
  row.pac_slack = result.pac_slack;

  double cov = 0.0, cov_strict = 0.0, lpb_sum = 0.0;
  for (std::size_t t = 0; t < test_prompts.size(); ++t) {
    if (!test_prompts[t].true_p.has_value()) {
      throw std::invalid_argument("test prompt lacks true_p; analytic coverage needs it");
    }
    const std::int64_t lpb =
        lower_predictive_bound(result, UnsafeProbability(p_hat_test[t]));
    cov += coverage_at(*test_prompts[t].true_p, lpb);
    cov_strict += geom_sf(*test_prompts[t].true_p, lpb + 1);
    lpb_sum += static_cast<double>(lpb);
  }
  const double inv_t = 1.0 / static_cast<double>(test_prompts.size());
  row.avg_coverage = cov * inv_t;
  row.avg_coverage_strict = cov_strict * inv_t;
  row.avg_lpb = lpb_sum * inv_t;
  const double draws = result.mode == Mode::naive_efficient
                           ? result.simulated_budget
                           : result.realized_budget;
  row.avg_budget = draws / static_cast<double>(result.n_calibration);
  return row;
}

MetricsRow evaluate_uncalibrated(std::span<const double> p_hat_test,
                                 std::span<const PromptRecord> test_prompts,
                                 double alpha, double budget_per_prompt,
                                 int run_index, std::uint64_t seed) {
  if (p_hat_test.size() != test_prompts.size()) {
    throw std::invalid_argument("test predictions are not aligned with prompts");
  }
  if (test_prompts.empty()) throw std::invalid_argument("empty test set");
  MetricsRow row;
  row.run_index = run_index;
  row.mode = "uncalibrated";
  row.budget_per_prompt = budget_per_prompt;
  row.seed = seed;
  row.tau_hat = alpha;
  row.gamma = std::numeric_limits<double>::quiet_NaN();
  row.pac_slack = std::numeric_limits<double>::quiet_NaN();
  row.avg_budget = 0.0;

  double cov = 0.0, cov_strict = 0.0, lpb_sum = 0.0;
  for (std::size_t t = 0; t < test_prompts.size(); ++t) {
    if (!test_prompts[t].true_p.has_value()) {
      throw std::invalid_argument("test prompt lacks true_p; analytic coverage needs it");
    }
    const std::int64_t lpb = geom_quantile(UnsafeProbability(p_hat_test[t]), alpha);
    cov += coverage_at(*test_prompts[t].true_p, lpb);
    cov_strict += geom_sf(*test_prompts[t].true_p, lpb + 1);
    lpb_sum += static_cast<double>(lpb);
  }
  const double inv_t = 1.0 / static_cast<double>(test_prompts.size());
  row.avg_coverage = cov * inv_t;
  row.avg_coverage_strict = cov_strict * inv_t;
  row.avg_lpb = lpb_sum * inv_t;
  return row;
}

ExperimentResult run_experiment(const Dataset& dataset,
                                const ProbabilityModel& model,
                                const ExperimentSpec& spec) {
  if (spec.runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (spec.modes.empty()) throw std::invalid_argument("no modes requested");
  const auto calib_idx = dataset.indices(Split::calib);
  const auto test_idx = dataset.indices(Split::test);
  if (calib_idx.empty() || test_idx.empty()) {
    throw std::invalid_argument("dataset needs nonempty calib and test splits");
  }

  std::vector<PromptRecord> calib_prompts, test_prompts;
  calib_prompts.reserve(calib_idx.size());
  for (auto i : calib_idx) calib_prompts.push_back(dataset.records[i]);
  test_prompts.reserve(test_idx.size());
  for (auto i : test_idx) test_prompts.push_back(dataset.records[i]);

  std::vector<double> p_hat_calib(calib_prompts.size());
  for (std::size_t i = 0; i < calib_prompts.size(); ++i) {
    p_hat_calib[i] = model.predict_p(calib_prompts[i].features).value();
  }
  std::vector<double> p_hat_test(test_prompts.size());
  for (std::size_t i = 0; i < test_prompts.size(); ++i) {
    p_hat_test[i] = model.predict_p(test_prompts[i].features).value();
  }

  const double n_calib = static_cast<double>(calib_prompts.size());
  const double budget_total = spec.budget_per_prompt * n_calib;
  std::int64_t trim_m = spec.trim_M.value_or(static_cast<std::int64_t>(
      std::floor(spec.budget_per_prompt * spec.gamma_target)));
  const bool needs_trim =
      std::find(spec.modes.begin(), spec.modes.end(), "trimmed") != spec.modes.end() ||
      std::find(spec.modes.begin(), spec.modes.end(), "optimized") != spec.modes.end();
  if (needs_trim && trim_m < 1) {
    throw std::invalid_argument("derived trim threshold M is below 1");
  }

  ExperimentResult result;
  result.budget_per_prompt = spec.budget_per_prompt;
  result.gamma_target = spec.gamma_target;
  result.alpha = spec.alpha;
  result.trim_M = needs_trim ? std::optional<std::int64_t>(trim_m) : std::nullopt;

  const std::size_t n_cells = static_cast<std::size_t>(spec.runs) * spec.modes.size();
  result.rows.resize(n_cells);
  parallel_for(n_cells, spec.threads, [&](std::size_t cell) {
    const int j = static_cast<int>(cell / spec.modes.size());
    const std::string& mode_name = spec.modes[cell % spec.modes.size()];
    const std::uint64_t run_seed =
        derive_seed(spec.master_seed, mode_name, static_cast<std::uint64_t>(j));
    if (mode_name == "uncalibrated") {
      result.rows[cell] =
          evaluate_uncalibrated(p_hat_test, test_prompts, spec.alpha,
                                spec.budget_per_prompt, j, run_seed);
      return;
    }
    CalibrationConfig config;
    config.alpha = spec.alpha;
    config.tau_prior = spec.tau_prior;
    config.mode = mode_from_string(mode_name);
    config.budget = budget_total;
    config.delta = spec.delta;
    config.seed = run_seed;
    config.restrict_naive_grid = spec.restrict_naive_grid;
    if (config.mode == Mode::trimmed || config.mode == Mode::optimized) {
      config.trim_M = trim_m;
    }
    const CalibrationResult cal =
        calibrate_synthetic(calib_prompts, p_hat_calib, config, run_seed);
    result.rows[cell] = evaluate_run(cal, p_hat_test, test_prompts,
                                     spec.budget_per_prompt, j, run_seed);
  });
  return result;
}

SweepResult sweep(const Dataset& dataset, const ProbabilityModel& model,
                  const SweepSpec& spec) {
  if (spec.budgets_per_prompt.empty() || spec.gammas.empty() || spec.alphas.empty()) {
    throw std::invalid_argument("sweep grids must be nonempty");
  }
  SweepResult result;
  for (double budget : spec.budgets_per_prompt) {
    for (double gamma : spec.gammas) {
      for (double alpha : spec.alphas) {
        ExperimentSpec cell = spec.base;
        cell.budget_per_prompt = budget;
        cell.gamma_target = gamma;
        cell.alpha = alpha;
        cell.trim_M.reset();
        const auto derived_m =
            static_cast<std::int64_t>(std::floor(budget * gamma));
        const bool needs_trim =
            std::find(cell.modes.begin(), cell.modes.end(), "trimmed") != cell.modes.end() ||
            std::find(cell.modes.begin(), cell.modes.end(), "optimized") != cell.modes.end();
        if (needs_trim && derived_m < 1) {
          std::ostringstream msg;
          msg << "skipped budget_per_prompt=" << budget << " gamma=" << gamma
              << " alpha=" << alpha << ": derived trim M=" << derived_m << " < 1";
          result.skipped.push_back(msg.str());
          continue;
        }
        result.cells.push_back(run_experiment(dataset, model, cell));
      }
    }
  }
  return result;
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::ostringstream out;
  out << "run_index,mode,budget_per_prompt,avg_coverage,avg_lpb,avg_budget,"
         "tau_hat,gamma,pac_slack,seed\n";
  for (const auto& r : rows) {
    out << r.run_index << ',' << r.mode << ',' << fmt_g17(r.budget_per_prompt)
        << ',' << fmt_g17(r.avg_coverage) << ',' << fmt_g17(r.avg_lpb) << ','
        << fmt_g17(r.avg_budget) << ',' << fmt_g17(r.tau_hat) << ','
        << fmt_g17(r.gamma) << ',' << fmt_g17(r.pac_slack) << ',' << r.seed
        << '\n';
  }
  return out.str();
}

void write_metrics_csv(std::span<const MetricsRow> rows,
                       const std::filesystem::path& path) {
  write_text_file(path, metrics_csv(rows));
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty metrics file: " + path.string());
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 10) throw std::runtime_error("bad metrics row in " + path.string());
    MetricsRow r;
    r.run_index = static_cast<int>(std::strtol(f[0].c_str(), nullptr, 10));
    r.mode = f[1];
    r.budget_per_prompt = std::strtod(f[2].c_str(), nullptr);
    r.avg_coverage = std::strtod(f[3].c_str(), nullptr);
    r.avg_lpb = std::strtod(f[4].c_str(), nullptr);
    r.avg_budget = std::strtod(f[5].c_str(), nullptr);
    r.tau_hat = std::strtod(f[6].c_str(), nullptr);
    r.gamma = std::strtod(f[7].c_str(), nullptr);
    r.pac_slack = std::strtod(f[8].c_str(), nullptr);
    r.seed = std::strtoull(f[9].c_str(), nullptr, 10);
    r.avg_coverage_strict = std::numeric_limits<double>::quiet_NaN();
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string summary_json(const SweepResult& result,
                         const std::string& config_echo_json) {
  json doc;
  doc["coverage_convention"] = {
      {"primary", "P(T >= LPB)"},
      {"alternative", "P(T > LPB)"},
      {"note",
       "The two conventions differ only on the atom T = LPB; the alternative "
       "is reported as avg_coverage_strict."},
  };
  doc["config_echo"] = config_echo_json.empty()
                           ? json(nullptr)
                           : json::parse(config_echo_json);
  doc["cells"] = json::array();
  for (const auto& cell : result.cells) {
    json c;
    c["budget_per_prompt"] = cell.budget_per_prompt;
    c["gamma_target"] = cell.gamma_target;
    c["alpha"] = cell.alpha;
    c["trim_M"] = cell.trim_M.has_value() ? json(*cell.trim_M) : json(nullptr);
    const auto aggs = aggregate_by_mode(cell.rows);
    json modes = json::object();
    for (const auto& [mode, agg] : aggs) {
      json m;
      m["runs"] = agg.runs;
      m["avg_coverage"] = stat_json(agg.coverage_mean, agg.coverage_std);
      m["avg_coverage_strict"] =
          stat_json(agg.coverage_strict_mean, agg.coverage_strict_std);
      m["avg_lpb"] = stat_json(agg.lpb_mean, agg.lpb_std);
      m["avg_budget"] = stat_json(agg.budget_mean, agg.budget_std);
      m["tau_hat"] = stat_json(agg.tau_hat_mean, agg.tau_hat_std);
      json per_run = json::array();
      for (const auto& row : cell.rows) {
        if (row.mode != mode) continue;
        per_run.push_back({{"run_index", row.run_index},
                           {"tau_hat", row.tau_hat},
                           {"gamma", row.gamma},
                           {"pac_slack", row.pac_slack},
                           {"seed", row.seed}});
      }
      m["per_run"] = std::move(per_run);
      modes[mode] = std::move(m);
    }
    c["modes"] = std::move(modes);
    doc["cells"].push_back(std::move(c));
  }
  doc["skipped_cells"] = result.skipped;
  return doc.dump(2) + "\n";
}

std::string calibration_result_json(const CalibrationResult& result) {
  json doc;
  doc["mode"] = std::string(to_string(result.mode));
  doc["tau_hat"] = result.tau_hat;
  doc["alpha"] = result.alpha;
  doc["tau_prior"] = result.tau_prior;
  doc["trim_M"] = result.trim_M.has_value() ? json(*result.trim_M) : json(nullptr);
  doc["gamma"] = result.gamma;
  doc["pac_slack"] = result.pac_slack;
  doc["realized_budget"] = result.realized_budget;
  doc["simulated_budget"] = result.simulated_budget;
  doc["n_calibration"] = result.n_calibration;
  doc["coverage_convention"] = "P(T >= LPB)";
  json curve = json::array();
  for (std::size_t k = 0; k < result.tau_grid.size(); ++k) {
    curve.push_back({result.tau_grid[k], result.alpha_values[k]});
  }
  doc["alpha_curve"] = std::move(curve);
  doc["weights"] = result.weights;
  doc["pi"] = result.pi;
  return doc.dump(2) + "\n";
}

}  // namespace ttus
