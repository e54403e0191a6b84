// ttus: budget-constrained survival calibration for time-to-unsafe sampling.
//
// Subcommands: synth, train, calibrate, sweep, report. One JSON config file
// drives everything; dotted-path --set flags override individual leaves, and
// every command echoes the fully resolved config into its output directory
// before doing any work.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttus/calibrate.hpp"
#include "ttus/harness.hpp"
#include "ttus/io.hpp"
#include "ttus/model.hpp"
#include "ttus/oracle.hpp"
#include "ttus/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ttus;

namespace {

/// Configuration problems exit with code 1; runtime failures with 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json default_config() {
  return json{
      {"master_seed", 0},
      {"dataset",
       {{"path", nullptr},
        {"n", 100000},
        {"d", 10},
        {"sigma", 0.1},
        {"split", {0.45, 0.45, 0.10}}}},
      {"oracle", {{"kind", "synthetic"}}},
      {"model",
       {{"path", nullptr},
        {"hidden_layers", {32, 32, 32, 32}},
        {"learning_rate", 1e-2},
        {"weight_decay", 1e-5},
        {"batch_size", 100},
        {"epochs", 10},
        {"p_min", 1e-9},
        {"outputs_per_prompt", 500}}},
      {"calibration",
       {{"alpha", 0.1},
        {"tau_prior", 0.5623413251903491},
        {"mode", "optimized"},
        {"trim_M", nullptr},
        {"gamma_target", 10.0},
        {"budget_per_prompt", 100.0},
        {"delta", 0.1},
        {"restrict_naive_grid", true}}},
      {"harness",
       {{"runs", 20},
        {"modes",
         {"uncalibrated", "naive", "naive_efficient", "basic", "trimmed",
          "optimized"}},
        {"budgets_per_prompt", {10, 25, 50, 100, 200, 300, 600, 1200}},
        {"gammas", {10.0}},
        {"alphas", {0.1}},
        {"out_dir", nullptr},
        {"threads", 1}}},
  };
}

void deep_merge(json& base, const json& overlay) {
  if (!overlay.is_object() || !base.is_object()) {
    base = overlay;
    return;
  }
  for (const auto& [key, value] : overlay.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object()) {
      deep_merge(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--set expects key.path=value, got: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // plain string
  }
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("empty key segment in --set path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

struct Context {
  json config;
  fs::path out_dir;
};

fs::path resolve_out_dir(const std::string& flag_out, const json& config) {
  if (!flag_out.empty()) return flag_out;
  const auto& configured = config.at("harness").at("out_dir");
  if (!configured.is_null()) return configured.get<std::string>();
  if (const char* root = std::getenv("TTUS_OUT_ROOT")) {
    return fs::path(root) / "ttus-out";
  }
  return "ttus-out";
}

void echo_config(const Context& ctx) {
  fs::create_directories(ctx.out_dir);
  write_text_file(ctx.out_dir / "config.resolved.json", ctx.config.dump(2) + "\n");
}

SynthConfig synth_config(const json& config) {
  const auto& d = config.at("dataset");
  SynthConfig sc;
  sc.n = d.at("n").get<std::size_t>();
  sc.d = d.at("d").get<int>();
  sc.sigma = d.at("sigma").get<double>();
  sc.seed = derive_seed(config.at("master_seed").get<std::uint64_t>(), "dataset");
  const auto split = d.at("split");
  if (!split.is_array() || split.size() != 3) {
    throw ConfigError("dataset.split must be [train, calib, test]");
  }
  sc.train_frac = split[0].get<double>();
  sc.calib_frac = split[1].get<double>();
  sc.test_frac = split[2].get<double>();
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("dataset config: ") + e.what());
  }
  return sc;
}

fs::path dataset_path(const Context& ctx) {
  const auto& p = ctx.config.at("dataset").at("path");
  return p.is_null() ? ctx.out_dir / "dataset.csv" : fs::path(p.get<std::string>());
}

fs::path model_path(const Context& ctx) {
  const auto& p = ctx.config.at("model").at("path");
  return p.is_null() ? ctx.out_dir / "model.bin" : fs::path(p.get<std::string>());
}

void require_synthetic_oracle(const json& config) {
  const std::string kind = config.at("oracle").at("kind").get<std::string>();
  if (kind != "synthetic") {
    throw ConfigError("unknown oracle kind '" + kind +
                      "': only 'synthetic' is implemented (other kinds are an "
                      "extension point)");
  }
}

Dataset load_dataset(const Context& ctx) {
  const auto path = dataset_path(ctx);
  if (!fs::exists(path)) {
    throw ConfigError("dataset file does not exist: " + path.string() +
                      " (run `ttus synth` first or set dataset.path)");
  }
  return read_dataset_csv(path);
}

ModelConfig model_config(const json& config) {
  const auto& m = config.at("model");
  ModelConfig mc;
  mc.hidden_layers = m.at("hidden_layers").get<std::vector<int>>();
  mc.learning_rate = m.at("learning_rate").get<double>();
  mc.weight_decay = m.at("weight_decay").get<double>();
  mc.batch_size = m.at("batch_size").get<int>();
  mc.epochs = m.at("epochs").get<int>();
  mc.p_min = m.at("p_min").get<double>();
  mc.seed = derive_seed(config.at("master_seed").get<std::uint64_t>(), "fit");
  return mc;
}

std::optional<std::int64_t> trim_for(const json& calibration, double budget_per_prompt,
                                     Mode mode) {
  if (mode != Mode::trimmed && mode != Mode::optimized) return std::nullopt;
  const auto& trim = calibration.at("trim_M");
  if (!trim.is_null()) return trim.get<std::int64_t>();
  const double gamma = calibration.at("gamma_target").get<double>();
  const auto derived =
      static_cast<std::int64_t>(std::floor(budget_per_prompt * gamma));
  if (derived < 1) {
    throw ConfigError("derived trim threshold M < 1; raise budget_per_prompt or "
                      "gamma_target, or set calibration.trim_M");
  }
  return derived;
}

ProbabilityModel train_model(const Context& ctx, const Dataset& ds) {
  require_synthetic_oracle(ctx.config);
  const auto n_outputs =
      ctx.config.at("model").at("outputs_per_prompt").get<int>();
  if (n_outputs < 1) throw ConfigError("model.outputs_per_prompt must be >= 1");
  const auto master = ctx.config.at("master_seed").get<std::uint64_t>();

  SyntheticOracle oracle;
  std::vector<TrainingExample> examples;
  for (auto i : ds.indices(Split::train)) {
    const auto& rec = ds.records[i];
    SplitMix64 rng(derive_seed(master, "train-outcomes",
                               static_cast<std::uint64_t>(rec.id)));
    std::int64_t unsafe = 0;
    for (int j = 0; j < n_outputs; ++j) unsafe += oracle.draw(rec, rng) ? 1 : 0;
    examples.push_back({rec.features, n_outputs,
                        static_cast<double>(unsafe) / n_outputs});
  }
  if (examples.empty()) throw ConfigError("dataset has no train split rows");

  const auto model = ProbabilityModel::fit(examples, model_config(ctx.config));
  for (std::size_t e = 0; e < model.epoch_losses().size(); ++e) {
    std::printf("epoch %zu: loss %.8f\n", e + 1, model.epoch_losses()[e]);
  }
  return model;
}

ExperimentSpec experiment_spec(const Context& ctx) {
  const auto& h = ctx.config.at("harness");
  const auto& c = ctx.config.at("calibration");
  ExperimentSpec spec;
  spec.modes = h.at("modes").get<std::vector<std::string>>();
  spec.runs = h.at("runs").get<int>();
  spec.alpha = c.at("alpha").get<double>();
  spec.tau_prior = c.at("tau_prior").get<double>();
  spec.delta = c.at("delta").get<double>();
  spec.gamma_target = c.at("gamma_target").get<double>();
  if (!c.at("trim_M").is_null()) spec.trim_M = c.at("trim_M").get<std::int64_t>();
  spec.restrict_naive_grid = c.at("restrict_naive_grid").get<bool>();
  spec.master_seed =
      derive_seed(ctx.config.at("master_seed").get<std::uint64_t>(), "experiment");
  spec.threads = h.at("threads").get<int>();
  return spec;
}

std::string cell_dir_name(const ExperimentResult& cell) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "b%g_g%g_a%g", cell.budget_per_prompt,
                cell.gamma_target, cell.alpha);
  return buf;
}

void write_sweep_artifacts(const Context& ctx, const SweepResult& swept) {
  std::vector<MetricsRow> all_rows;
  for (const auto& cell : swept.cells) {
    all_rows.insert(all_rows.end(), cell.rows.begin(), cell.rows.end());
    write_metrics_csv(cell.rows,
                      ctx.out_dir / "cells" / cell_dir_name(cell) / "runs.csv");
  }
  write_metrics_csv(all_rows, ctx.out_dir / "runs.csv");
  write_text_file(ctx.out_dir / "summary.json",
                  summary_json(swept, ctx.config.dump()));
  const auto emitted = emit_plots(swept, ctx.out_dir / "plots");
  if (!emitted.notice.empty()) {
    std::printf("plots: %s\n", emitted.notice.c_str());
  } else {
    std::printf("wrote %zu plot files under %s\n", emitted.files.size(),
                (ctx.out_dir / "plots").string().c_str());
  }
  for (const auto& note : swept.skipped) std::printf("%s\n", note.c_str());
}

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_synth(const Context& ctx) {
  echo_config(ctx);
  const auto sc = synth_config(ctx.config);
  const auto ds = generate_dataset(sc);
  const auto path = ctx.out_dir / "dataset.csv";
  write_dataset_csv(ds, path);

  json meta;
  meta["seed"] = sc.seed;
  meta["master_seed"] = ctx.config.at("master_seed");
  meta["mu_bar"] = ds.mu_bar;
  meta["n"] = ds.records.size();
  meta["d"] = sc.d;
  meta["sigma"] = sc.sigma;
  meta["normalizer_pool"] = "all records";
  meta["split_sizes"] = {{"train", ds.indices(Split::train).size()},
                         {"calib", ds.indices(Split::calib).size()},
                         {"test", ds.indices(Split::test).size()}};
  write_text_file(ctx.out_dir / "dataset_meta.json", meta.dump(2) + "\n");
  std::printf("wrote %zu rows to %s\n", ds.records.size(), path.string().c_str());
  return 0;
}

int cmd_train(const Context& ctx) {
  echo_config(ctx);
  const auto ds = load_dataset(ctx);
  const auto model = train_model(ctx, ds);
  const auto path = model_path(ctx);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  model.save(path);

  json meta;
  meta["epoch_losses"] = model.epoch_losses();
  meta["input_dim"] = model.input_dim();
  meta["p_min"] = model.p_min();
  meta["train_examples"] = ds.indices(Split::train).size();
  write_text_file(ctx.out_dir / "train_meta.json", meta.dump(2) + "\n");
  std::printf("wrote model to %s\n", path.string().c_str());
  return 0;
}

int cmd_calibrate(const Context& ctx) {
  echo_config(ctx);
  const auto ds = load_dataset(ctx);
  const auto mpath = model_path(ctx);
  if (!fs::exists(mpath)) {
    throw ConfigError("model file does not exist: " + mpath.string() +
                      " (run `ttus train` first or set model.path)");
  }
  const auto model = ProbabilityModel::load(mpath);

  const auto& c = ctx.config.at("calibration");
  CalibrationConfig config;
  config.alpha = c.at("alpha").get<double>();
  config.tau_prior = c.at("tau_prior").get<double>();
  config.mode = mode_from_string(c.at("mode").get<std::string>());
  config.delta = c.at("delta").get<double>();
  config.restrict_naive_grid = c.at("restrict_naive_grid").get<bool>();
  const double bpp = c.at("budget_per_prompt").get<double>();

  std::vector<PromptRecord> calib;
  std::vector<double> p_hat;
  for (auto i : ds.indices(Split::calib)) {
    calib.push_back(ds.records[i]);
    p_hat.push_back(model.predict_p(ds.records[i].features).value());
  }
  if (calib.empty()) throw ConfigError("dataset has no calib split rows");
  config.budget = bpp * static_cast<double>(calib.size());
  config.trim_M = trim_for(c, bpp, config.mode);
  config.seed = derive_seed(ctx.config.at("master_seed").get<std::uint64_t>(),
                            "calibrate", 0);
  try {
    config.validate(calib.size());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("calibration config: ") + e.what());
  }

  const auto result = calibrate_synthetic(calib, p_hat, config, config.seed);
  write_text_file(ctx.out_dir / "calibration_result.json",
                  calibration_result_json(result));
  std::printf("mode=%s tau_hat=%.6g gamma=%.6g pac_slack=%.6g\n",
              std::string(to_string(result.mode)).c_str(), result.tau_hat,
              result.gamma, result.pac_slack);
  return 0;
}

int cmd_sweep(const Context& ctx) {
  echo_config(ctx);
  const auto ds = load_dataset(ctx);
  const auto mpath = model_path(ctx);
  std::optional<ProbabilityModel> model;
  if (fs::exists(mpath)) {
    model = ProbabilityModel::load(mpath);
  } else {
    std::printf("model %s not found; training inline\n", mpath.string().c_str());
    model = train_model(ctx, ds);
    if (mpath.has_parent_path()) fs::create_directories(mpath.parent_path());
    model->save(mpath);
  }

  SweepSpec spec;
  spec.base = experiment_spec(ctx);
  const auto& h = ctx.config.at("harness");
  spec.budgets_per_prompt = h.at("budgets_per_prompt").get<std::vector<double>>();
  spec.gammas = h.at("gammas").get<std::vector<double>>();
  spec.alphas = h.at("alphas").get<std::vector<double>>();

  const auto swept = sweep(ds, *model, spec);
  write_sweep_artifacts(ctx, swept);
  std::printf("sweep complete: %zu cells, %zu skipped\n", swept.cells.size(),
              swept.skipped.size());
  return 0;
}

int cmd_report(const Context& ctx) {
  const auto summary_path = ctx.out_dir / "summary.json";
  if (!fs::exists(summary_path)) {
    throw ConfigError("no summary.json under " + ctx.out_dir.string() +
                      "; run `ttus sweep` first");
  }
  const json summary = json::parse(read_text_file(summary_path));

  SweepResult swept;
  for (const auto& cell_json : summary.at("cells")) {
    ExperimentResult cell;
    cell.budget_per_prompt = cell_json.at("budget_per_prompt").get<double>();
    cell.gamma_target = cell_json.at("gamma_target").get<double>();
    cell.alpha = cell_json.at("alpha").get<double>();
    if (!cell_json.at("trim_M").is_null()) {
      cell.trim_M = cell_json.at("trim_M").get<std::int64_t>();
    }
    const auto csv_path =
        ctx.out_dir / "cells" / cell_dir_name(cell) / "runs.csv";
    if (!fs::exists(csv_path)) {
      throw ConfigError("missing per-cell metrics: " + csv_path.string());
    }
    cell.rows = read_metrics_csv(csv_path);
    swept.cells.push_back(std::move(cell));
  }
  const auto emitted = emit_plots(swept, ctx.out_dir / "plots");
  if (!emitted.notice.empty()) {
    std::printf("plots: %s\n", emitted.notice.c_str());
  } else {
    std::printf("re-rendered %zu plot files under %s\n", emitted.files.size(),
                (ctx.out_dir / "plots").string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budget-constrained survival calibration for time-to-unsafe "
               "sampling"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_flag;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> threads_flag;
  app.add_option("--config,-c", config_path, "JSON configuration file");
  app.add_option("--out,-o", out_flag, "Output directory");
  app.add_option("--seed", seed_flag, "Override master_seed");
  app.add_option("--threads", threads_flag, "Cap worker threads");
  app.add_option("--set", overrides,
                 "Dotted-path config override, e.g. calibration.alpha=0.05");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  auto* train = app.add_subcommand("train", "Fit the unsafe-probability model");
  auto* calibrate = app.add_subcommand("calibrate",
                                       "Run one calibration and emit the result");
  auto* sweep_cmd = app.add_subcommand("sweep", "Multi-seed budget/gamma/alpha sweep");
  auto* report = app.add_subcommand("report", "Re-render plots from existing CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    Context ctx;
    ctx.config = default_config();
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) {
        throw ConfigError("config file does not exist: " + config_path);
      }
      json user;
      try {
        user = json::parse(read_text_file(config_path));
      } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
      }
      deep_merge(ctx.config, user);
    }
    for (const auto& assignment : overrides) apply_override(ctx.config, assignment);
    if (seed_flag.has_value()) ctx.config["master_seed"] = *seed_flag;
    if (threads_flag.has_value()) ctx.config["harness"]["threads"] = *threads_flag;
    ctx.out_dir = resolve_out_dir(out_flag, ctx.config);

    if (synth->parsed()) return cmd_synth(ctx);
    if (train->parsed()) return cmd_train(ctx);
    if (calibrate->parsed()) return cmd_calibrate(ctx);
    if (sweep_cmd->parsed()) return cmd_sweep(ctx);
    if (report->parsed()) return cmd_report(ctx);
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
