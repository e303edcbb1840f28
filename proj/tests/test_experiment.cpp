#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ciss/error.hpp"
#include "ciss/experiment.hpp"

using namespace ciss;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const fs::path& root) {
  ExperimentConfig cfg = ExperimentConfig::preset("voc15-5-mini");
  cfg.output_root = root;
  cfg.dataset.height = 32;
  cfg.dataset.width = 32;
  cfg.dataset.num_train = 24;
  cfg.dataset.num_val = 6;
  cfg.dataset.num_test = 6;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 4;
  return cfg;
}

} // namespace

TEST_CASE("config: json round-trip preserves the run hash") {
  const ExperimentConfig a = ExperimentConfig::preset("voc15-5-mini");
  const ExperimentConfig b = ExperimentConfig::from_json(a.to_json());
  CHECK(a.run_hash() == b.run_hash());
  CHECK(a.run_id() == b.run_id());
}

TEST_CASE("config: hash is stable under key order permutation") {
  json j1;
  j1["alpha"] = 1;
  j1["beta"] = json{{"x", 2}, {"y", 3}};
  json j2;
  j2["beta"]["y"] = 3;
  j2["beta"]["x"] = 2;
  j2["alpha"] = 1;
  CHECK(json_hash(j1) == json_hash(j2));
}

TEST_CASE("config: --set overrides nested keys with typed values") {
  json j = ExperimentConfig::preset("voc15-5-mini").to_json();
  ExperimentConfig::apply_override(j, "train.epochs=5");
  ExperimentConfig::apply_override(j, "tasks.regime=full_disjoint");
  ExperimentConfig::apply_override(j, "train.lambda=2.5");
  const ExperimentConfig cfg = ExperimentConfig::from_json(j);
  CHECK(cfg.train.epochs == 5);
  CHECK(cfg.regime == Regime::full_disjoint);
  CHECK(cfg.train.lambda == 2.5);
  CHECK_THROWS_AS(ExperimentConfig::apply_override(j, "no_equals_sign"), Error);
}

TEST_CASE("config: CISSBENCH_OUT overrides the output root") {
  setenv("CISSBENCH_OUT", "/tmp/ciss_env_root", 1);
  const ExperimentConfig cfg =
      ExperimentConfig::from_json(ExperimentConfig::preset("voc15-5-mini").to_json());
  CHECK(cfg.output_root == fs::path("/tmp/ciss_env_root"));
  unsetenv("CISSBENCH_OUT");
}

TEST_CASE("config: unknown names report the valid values") {
  try {
    (void)regime_from_string("bogus");
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("overlapped") != std::string::npos);
  }
  try {
    (void)method_from_string("sgd");
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("finetune") != std::string::npos);
  }
  CHECK_THROWS_AS((void)ExperimentConfig::preset("nope"), Error);
}

TEST_CASE("config: per-method lambda defaults are applied when unset") {
  json j = ExperimentConfig::preset("voc15-5-mini").to_json();
  j["train"].erase("lambda");
  j["train"]["method"] = "ewc";
  j["train"]["approach"] = "ewc";
  const ExperimentConfig cfg = ExperimentConfig::from_json(j);
  CHECK(cfg.train.lambda == 10000.0);
  CHECK(cfg.train.grad_clip_norm.has_value());
}

TEST_CASE("cmd_train: idempotent re-run skips, --force recomputes") {
  const fs::path root = fs::temp_directory_path() / "ciss_test_exp";
  fs::remove_all(root);
  const ExperimentConfig cfg = tiny_config(root);

  const fs::path run_dir = cmd_train(cfg);
  REQUIRE(fs::exists(run_dir / "metrics.json"));
  const auto t1 = fs::last_write_time(run_dir / "metrics.json");

  const fs::path again = cmd_train(cfg);
  CHECK(again == run_dir);
  CHECK(fs::last_write_time(run_dir / "metrics.json") == t1); // untouched

  const fs::path forced = cmd_train(cfg, /*force=*/true);
  CHECK(fs::last_write_time(run_dir / "metrics.json") != t1);
  fs::remove_all(root);
}

TEST_CASE("cmd_train: metrics are traceable and reported by cmd_report verbatim") {
  const fs::path root = fs::temp_directory_path() / "ciss_test_exp2";
  fs::remove_all(root);
  const ExperimentConfig cfg = tiny_config(root);
  const fs::path run_dir = cmd_train(cfg);
  cmd_diagnose(run_dir, {"confusion", "bias", "stitch", "cka", "predictions"});

  const fs::path report = cmd_report({run_dir}, root / "report");
  REQUIRE(fs::exists(report / "summary.csv"));
  REQUIRE(fs::exists(report / "summary.md"));

  std::ifstream metrics_in(run_dir / "metrics.json");
  const json metrics = json::parse(metrics_in);
  char expect[32];
  std::snprintf(expect, sizeof(expect), "%.4f", metrics["miou"]["all"].get<double>());
  std::ifstream csv_in(report / "summary.csv");
  std::string csv((std::istreambuf_iterator<char>(csv_in)), std::istreambuf_iterator<char>());
  CHECK(csv.find(expect) != std::string::npos);

  // one full experiment: at least 4 plot basenames plus the summary table
  int plots = 0;
  for (const auto& entry : fs::directory_iterator(report))
    if (entry.path().extension() == ".svg" || entry.path().extension() == ".png") ++plots;
  CHECK(plots >= 4);
  fs::remove_all(root);
}

TEST_CASE("cmd_report: missing artifacts are listed, run continues") {
  const fs::path root = fs::temp_directory_path() / "ciss_test_exp3";
  fs::remove_all(root);
  fs::create_directories(root / "empty_run");
  const fs::path report = cmd_report({root / "empty_run"}, root / "report");
  std::ifstream md_in(report / "summary.md");
  std::string md((std::istreambuf_iterator<char>(md_in)), std::istreambuf_iterator<char>());
  CHECK(md.find("missing") != std::string::npos);
  fs::remove_all(root);
}

TEST_CASE("cmd_matrix: enumerates methods x regimes x losses and writes the summary") {
  const fs::path root = fs::temp_directory_path() / "ciss_test_exp4";
  fs::remove_all(root);
  ExperimentConfig cfg = tiny_config(root);
  const fs::path matrix_dir =
      cmd_matrix(cfg, {"finetune", "ewc"}, {"disjoint", "overlapped"}, {"ce"});
  CHECK(fs::exists(matrix_dir / "matrix_summary.md"));
  CHECK(fs::exists(matrix_dir / "matrix_summary.csv"));
  int runs = 0;
  for (const auto& entry : fs::directory_iterator(root / "runs")) {
    (void)entry;
    ++runs;
  }
  CHECK(runs == 4);
  fs::remove_all(root);
}
