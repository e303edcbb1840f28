#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ciss/dataset.hpp"
#include "ciss/taskstream.hpp"
#include "ciss/trainer.hpp"

namespace ciss {

struct DiagnosticsConfig {
  std::vector<std::string> probes{"confusion", "stitch", "cka", "bias", "predictions"};
  int retrain_epochs = 12;
  int cka_positions = 512;
  int prediction_samples = 4;

  nlohmann::json to_json() const;
  static DiagnosticsConfig from_json(const nlohmann::json& j);
};

// One experiment: dataset recipe (or path), task split + regime, training
// setup, diagnostics selection. Fully serializable; the canonical
// serialization of the run-relevant sections identifies a run.
struct ExperimentConfig {
  uint64_t seed = 7;
  std::filesystem::path output_root = "out";
  SyntheticSceneConfig dataset;
  std::optional<std::string> dataset_path; // external dataset dir, overrides recipe
  std::vector<std::vector<int>> splits{{1, 2, 3, 4}, {5, 6}};
  Regime regime = Regime::disjoint;
  bool offline = false; // joint training on all classes instead of a sequence
  TrainConfig train;
  DiagnosticsConfig diagnostics;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);

  // Named presets; "voc15-5-mini" is the desk-scale two-step split of the
  // seven-class synthetic set.
  static ExperimentConfig preset(const std::string& name);

  // Applies a `--set a.b.c=value` style override onto the JSON form.
  static void apply_override(nlohmann::json& j, const std::string& assignment);

  std::string run_id() const;   // method-regime-loss-seed-hash tag
  std::string run_hash() const; // hash of the run-relevant sections
  std::string dataset_hash() const;
};

// FNV-1a over the canonical (sorted-key) JSON dump.
std::string json_hash(const nlohmann::json& j);

// Idempotent commands; each returns the artifact directory. Re-running with
// an unchanged config detects the existing artifact and skips unless force.
std::filesystem::path cmd_generate(const ExperimentConfig& config, bool force = false);
std::filesystem::path cmd_train(const ExperimentConfig& config, bool force = false);
void cmd_diagnose(const std::filesystem::path& run_dir, const std::vector<std::string>& probes,
                  bool force = false);
std::filesystem::path cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                                 const std::filesystem::path& report_dir);
std::filesystem::path cmd_matrix(const ExperimentConfig& config,
                                 const std::vector<std::string>& methods,
                                 const std::vector<std::string>& regimes,
                                 const std::vector<std::string>& losses, bool force = false);

// Loads the dataset for a config, generating and persisting it first if the
// directory does not exist yet.
Dataset ensure_dataset(const ExperimentConfig& config);

// Builds the task stream (or the joint single-task stream for offline runs).
TaskStream stream_for(const ExperimentConfig& config, const Dataset& dataset);
TaskStream joint_stream_for(const ExperimentConfig& config, const Dataset& dataset);

// Per-method training defaults mirroring the reference protocol: penalty
// weights and the gradient clip that accompanies EWC.
void apply_method_defaults(TrainConfig& train, Method method);

} // namespace ciss
