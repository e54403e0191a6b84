#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "ttus/io.hpp"

namespace fs = std::filesystem;
using ttus::read_text_file;
using ttus::write_text_file;

namespace {

const char* kConfig = R"({
  "master_seed": 7,
  "dataset": {"n": 800, "d": 5},
  "model": {"epochs": 3, "outputs_per_prompt": 40},
  "calibration": {"budget_per_prompt": 25, "mode": "optimized"},
  "harness": {
    "runs": 2,
    "budgets_per_prompt": [15, 40],
    "modes": ["uncalibrated", "trimmed", "optimized"]
  }
})";

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() /
          ("ttus_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_text_file(dir / "cfg.json", kConfig);
  }
  ~Workspace() { fs::remove_all(dir); }
};

int run(const std::string& args) {
  const std::string cmd = std::string(TTUS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("cli pipeline: synth, train, calibrate, sweep, report") {
  Workspace ws;
  const std::string cfg = (ws.dir / "cfg.json").string();
  const std::string out = (ws.dir / "out").string();

  REQUIRE(run("synth -c " + cfg + " -o " + out) == 0);
  CHECK(fs::exists(ws.dir / "out/dataset.csv"));
  CHECK(fs::exists(ws.dir / "out/dataset_meta.json"));
  CHECK(fs::exists(ws.dir / "out/config.resolved.json"));
  {
    std::ifstream in(ws.dir / "out/dataset.csv");
    std::string line;
    int rows = -1;  // header
    while (std::getline(in, line)) {
      if (!line.empty()) ++rows;
    }
    CHECK(rows == 800);
  }

  REQUIRE(run("train -c " + cfg + " -o " + out) == 0);
  CHECK(fs::exists(ws.dir / "out/model.bin"));
  CHECK(fs::exists(ws.dir / "out/train_meta.json"));

  REQUIRE(run("calibrate -c " + cfg + " -o " + out) == 0);
  const std::string calib_json = read_text_file(ws.dir / "out/calibration_result.json");
  CHECK(calib_json.find("\"tau_hat\"") != std::string::npos);
  CHECK(calib_json.find("\"alpha_curve\"") != std::string::npos);

  REQUIRE(run("sweep -c " + cfg + " -o " + out) == 0);
  CHECK(fs::exists(ws.dir / "out/runs.csv"));
  CHECK(fs::exists(ws.dir / "out/summary.json"));
  CHECK(fs::exists(ws.dir / "out/plots/coverage_g10_a0.1.svg"));

  SUBCASE("rerunning with the same config reproduces artifacts byte-identically") {
    const std::string runs_before = read_text_file(ws.dir / "out/runs.csv");
    const std::string data_before = read_text_file(ws.dir / "out/dataset.csv");
    const std::string out2 = (ws.dir / "out2").string();
    REQUIRE(run("synth -c " + cfg + " -o " + out2) == 0);
    REQUIRE(run("train -c " + cfg + " -o " + out2) == 0);
    REQUIRE(run("sweep -c " + cfg + " -o " + out2) == 0);
    CHECK(read_text_file(ws.dir / "out2/dataset.csv") == data_before);
    CHECK(read_text_file(ws.dir / "out2/runs.csv") == runs_before);
  }

  SUBCASE("rerunning from the echoed config reproduces artifacts") {
    const std::string echoed = (ws.dir / "out/config.resolved.json").string();
    const std::string out3 = (ws.dir / "out3").string();
    REQUIRE(run("synth -c " + echoed + " -o " + out3) == 0);
    CHECK(read_text_file(ws.dir / "out3/dataset.csv") ==
          read_text_file(ws.dir / "out/dataset.csv"));
  }

  SUBCASE("report re-renders plots from the persisted CSVs") {
    fs::remove_all(ws.dir / "out/plots");
    REQUIRE(run("report -c " + cfg + " -o " + out) == 0);
    CHECK(fs::exists(ws.dir / "out/plots/coverage_g10_a0.1.svg"));
  }
}

TEST_CASE("cli validation failures exit with code 1") {
  Workspace ws;
  const std::string cfg = (ws.dir / "cfg.json").string();
  const std::string out = (ws.dir / "out").string();

  SUBCASE("missing config file") {
    CHECK(run("synth -c " + (ws.dir / "missing.json").string() + " -o " + out) == 1);
  }
  SUBCASE("train without a dataset") {
    CHECK(run("train -c " + cfg + " -o " + out) == 1);
  }
  SUBCASE("calibrate without a model") {
    REQUIRE(run("synth -c " + cfg + " -o " + out) == 0);
    CHECK(run("calibrate -c " + cfg + " -o " + out) == 1);
  }
  SUBCASE("unknown oracle kind is a named extension point") {
    REQUIRE(run("synth -c " + cfg + " -o " + out) == 0);
    CHECK(run("train -c " + cfg + " -o " + out +
              " --set oracle.kind=remote") == 1);
  }
  SUBCASE("bad split fractions") {
    CHECK(run("synth -c " + cfg + " -o " + out +
              " --set dataset.split=[0.5,0.5,0.5]") == 1);
  }
  SUBCASE("report without a sweep") {
    CHECK(run("report -c " + cfg + " -o " + (ws.dir / "fresh").string()) == 1);
  }
}

TEST_CASE("cli overrides and environment output root") {
  Workspace ws;
  const std::string cfg = (ws.dir / "cfg.json").string();
  const std::string out = (ws.dir / "out").string();

  SUBCASE("--set overrides a leaf and lands in the echoed config") {
    REQUIRE(run("synth -c " + cfg + " -o " + out + " --set dataset.n=123") == 0);
    const std::string echoed = read_text_file(ws.dir / "out/config.resolved.json");
    CHECK(echoed.find("\"n\": 123") != std::string::npos);
  }
  SUBCASE("--seed overrides master_seed") {
    REQUIRE(run("synth -c " + cfg + " -o " + out + " --seed 999") == 0);
    const std::string echoed = read_text_file(ws.dir / "out/config.resolved.json");
    CHECK(echoed.find("\"master_seed\": 999") != std::string::npos);
  }
  SUBCASE("resolved defaults carry the study settings") {
    REQUIRE(run("synth -o " + out + " --set dataset.n=50") == 0);
    const std::string echoed = read_text_file(ws.dir / "out/config.resolved.json");
    CHECK(echoed.find("\"outputs_per_prompt\": 500") != std::string::npos);
    CHECK(echoed.find("\"tau_prior\": 0.5623413251903491") != std::string::npos);
    CHECK(echoed.find("\"gamma_target\": 10.0") != std::string::npos);
    CHECK(echoed.find("\"runs\": 20") != std::string::npos);
  }
  SUBCASE("TTUS_OUT_ROOT provides the default output root") {
    const std::string root = (ws.dir / "envroot").string();
    const std::string cmd = "TTUS_OUT_ROOT=" + root + " " + TTUS_CLI_PATH +
                            " synth -c " + cfg + " >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    CHECK(fs::exists(fs::path(root) / "ttus-out" / "dataset.csv"));
  }
}
