#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "eos/config.hpp"
#include "eos/csv.hpp"
#include "eos/data_io.hpp"
#include "eos/errors.hpp"
#include "eos/recipes.hpp"

namespace fs = std::filesystem;

#ifndef EOS_FIXTURE_DIR
#define EOS_FIXTURE_DIR "tests/fixtures"
#endif

namespace {

std::string fixture(const std::string& name) {
  return std::string(EOS_FIXTURE_DIR) + "/" + name;
}

std::string write_temp_config(const std::string& name, const std::string& body) {
  const std::string path = name;
  std::ofstream out(path);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("config loads with defaults and records its hash") {
  const auto cfg = eos::load_config(fixture("dln_config.json"));
  CHECK(cfg.recipe == "dln_phase_map");
  CHECK(cfg.dln.theta1 == -0.1);
  CHECK(cfg.dln.etas.size() == 4);
  CHECK(cfg.model.layer_widths.size() == 6);  // defaulted 4x32 architecture
  CHECK(cfg.model.loss_kind == eos::LossKind::kCrossEntropy);
  CHECK(cfg.config_hash.size() == 64);
  CHECK(cfg.dataset.train_count == 1000);
  CHECK(cfg.dataset.eval_count == 200);
}

TEST_CASE("config errors carry field diagnostics") {
  CHECK_THROWS_AS(eos::load_config(fixture("bad_config.json")), eos::ConfigInvalid);
  try {
    eos::load_config(fixture("bad_config.json"));
  } catch (const eos::ConfigInvalid& e) {
    CHECK(std::string(e.what()).find("recipe") != std::string::npos);
  }

  const auto malformed = write_temp_config("test_cfg_malformed.json", "{oops");
  CHECK_THROWS_AS(eos::load_config(malformed), eos::ConfigInvalid);
  std::remove(malformed.c_str());

  const auto empty_etas = write_temp_config(
      "test_cfg_empty_etas.json",
      R"({"recipe":"dln_phase_map","output_dir":"out/x","dln":{"etas":[]}})");
  CHECK_THROWS_AS(eos::load_config(empty_etas), eos::ConfigInvalid);
  std::remove(empty_etas.c_str());

  const auto bad_eta = write_temp_config(
      "test_cfg_bad_eta.json",
      R"({"recipe":"lr_sweep","output_dir":"out/x","sweep":{"etas":[0.1,-0.2]}})");
  CHECK_THROWS_AS(eos::load_config(bad_eta), eos::ConfigInvalid);
  std::remove(bad_eta.c_str());
}

TEST_CASE("dln_phase_map writes its artifacts deterministically") {
  auto cfg = eos::load_config(fixture("dln_config.json"));
  cfg.output_dir = "test_out_dln";
  fs::remove_all(cfg.output_dir);

  const eos::RunManifest m1 = eos::run_experiment(cfg, 1);
  CHECK_FALSE(m1.any_error());
  CHECK(fs::exists("test_out_dln/manifest.txt"));

  // every artifact referenced by the manifest exists and is non-empty
  std::vector<std::string> artifacts;
  for (const auto& run : m1.runs)
    for (const auto& a : run.artifacts) {
      CHECK(fs::exists(a));
      CHECK(fs::file_size(a) > 0);
      artifacts.push_back(a);
    }
  REQUIRE(artifacts.size() > 4);

  // thresholds CSV pins the Fig-1 values
  const eos::CsvTable th = eos::read_csv("test_out_dln/thresholds.csv");
  CHECK(th.num(0, th.column("eta_eos")) == 0.01);
  CHECK(th.num(0, th.column("eta_half")) == doctest::Approx(0.005));

  // re-running the identical config reproduces identical artifact bytes
  std::vector<std::string> before;
  for (const auto& a : artifacts) before.push_back(eos::sha256_file(a));
  const eos::RunManifest m2 = eos::run_experiment(cfg, 1);
  CHECK_FALSE(m2.any_error());
  for (std::size_t i = 0; i < artifacts.size(); ++i)
    CHECK(eos::sha256_file(artifacts[i]) == before[i]);

  fs::remove_all(cfg.output_dir);
}

TEST_CASE("lr_sweep micro-run: one manifest entry per (eta, seed) cell") {
  const auto path = write_temp_config("test_cfg_sweep.json", R"({
    "recipe": "lr_sweep",
    "output_dir": "test_out_sweep",
    "seeds": [1, 2],
    "model": {"layer_widths": [784, 16, 10], "activation": "relu",
              "loss": "cross_entropy"},
    "dataset": {"dir": "test_data_sweep", "train_count": 48, "eval_count": 24,
                "synthetic_fallback": true,
                "synthetic_train_pool": 96, "synthetic_test_pool": 48},
    "probes": {"cadence": 2, "lanczos_tol": 1e-5, "lanczos_max_iter": 120},
    "train": {"max_epochs": 60},
    "sweep": {"etas": [0.02, 0.05]}
  })");
  auto cfg = eos::load_config(path);
  fs::remove_all(cfg.output_dir);
  fs::remove_all("test_data_sweep");

  const eos::RunManifest m = eos::run_experiment(cfg, 2);
  int cells = 0;
  for (const auto& run : m.runs)
    if (run.id.rfind("sweep eta=", 0) == 0) ++cells;
  CHECK(cells == 4);  // 2 etas x 2 seeds, each exactly once
  CHECK(fs::exists("test_out_sweep/sweep_summary.csv"));
  CHECK(fs::exists("test_out_sweep/sweep_runs.csv"));
  CHECK(fs::exists("test_out_sweep/stability.csv"));
  CHECK(fs::exists("test_out_sweep/sweep.svg"));

  const eos::CsvTable runs = eos::read_csv("test_out_sweep/sweep_runs.csv");
  CHECK(runs.cells.size() == 4);

  std::remove(path.c_str());
  fs::remove_all(cfg.output_dir);
  fs::remove_all("test_data_sweep");
}

TEST_CASE("prepare_data falls back to the synthetic corpus and records it") {
  eos::DatasetConfig dc;
  dc.dir = "test_data_prep";
  dc.train_count = 40;
  dc.eval_count = 16;
  dc.synthetic_train_pool = 80;
  dc.synthetic_test_pool = 32;
  fs::remove_all(dc.dir);

  const eos::PreparedData data = eos::prepare_data(dc);
  CHECK(data.source == "synthetic");
  CHECK(data.train_batch.inputs.rows() == 40);
  CHECK(data.eval_batch.inputs.rows() == 16);
  CHECK(data.train_batch.classification());
  // train subset standardized by its own statistics
  CHECK(std::abs(data.train_batch.inputs.mean()) < 1e-9);

  bool found = false;
  for (const auto& line : data.metadata)
    if (line == "data_source=synthetic") found = true;
  CHECK(found);

  fs::remove_all(dc.dir);
}
