#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ciss/importance.hpp"
#include "ciss/model.hpp"
#include "ciss/replay.hpp"
#include "ciss/snapshot.hpp"
#include "ciss/taskstream.hpp"

namespace ciss {

enum class Method { finetune, ewc, mas, lwf, replay };
enum class LossKind { ce, unce };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct TrainConfig {
  double lr_first = 0.07;
  double lr_later = 5e-4;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  int epochs = 30;      // paper protocol: 100
  int batch_size = 8;   // paper protocol: 16
  int plateau_patience = 8;
  double plateau_factor = 0.5;
  std::optional<double> grad_clip_norm; // 10 when EWC is active
  Method method = Method::finetune;
  LossKind loss_kind = LossKind::ce;
  HeadKind head_kind = HeadKind::standard;
  double lambda = 0.0;      // penalty / distillation weight
  double temperature = 2.0; // LwF softening
  int importance_samples = 64;
  int replay_capacity = 20;
  uint64_t seed = 7;
  // diagnostics snapshot location for NaN aborts; unset = no dump
  std::optional<std::filesystem::path> diagnostic_dir;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct RunRecord {
  std::vector<EpochStats> epochs;
  double wall_seconds = 0.0;
  int task_index = 0;
  bool empty_loss_batches = false; // any batch with no supervised pixels
};

// Optional companions of a task: previous-task model for distillation,
// importance estimate for the quadratic penalty, exemplar buffer for replay.
struct MethodContext {
  const LayerTapModel* old_model = nullptr;
  const ImportanceEstimate* importance = nullptr;
  const ReplayBuffer* buffer = nullptr;
};

// One task's SGD loop: seeded shuffling, method-specific loss terms,
// plateau-halved learning rate, optional gradient clipping. Deterministic
// for a fixed config and seed.
RunRecord train_task(LayerTapModel& model, const TaskData& data, const TaskDefinition& task,
                     const TrainConfig& config, const MethodContext& context);

struct SequenceResult {
  LayerTapModel f0; // state after task 0, before head extension
  LayerTapModel f1; // final state
  std::vector<RunRecord> records;
  std::unique_ptr<ImportanceEstimate> importance;
  std::unique_ptr<ReplayBuffer> buffer;
};

// Task 0 with lr_first, snapshot f0, consolidate (importance estimate or
// buffer fill, as the method requires), extend the classifier, task 1..n
// with lr_later.
SequenceResult run_sequence(const Dataset& dataset, const TaskStream& stream,
                            const TrainConfig& config);

// Joint training on all classes in one step; the upper reference.
SequenceResult train_offline(const Dataset& dataset, const TaskStream& joint_stream,
                             const TrainConfig& config);

struct HyperGrid {
  std::vector<double> learning_rates;
  std::vector<double> lambdas;
};

struct HyperChoice {
  TrainConfig config;
  double stage1_new_miou = 0.0;
  double stage2_all_miou = 0.0;
  nlohmann::json trace;
};

// Two-stage continual hyperparameter selection: pick lr_later by new-task
// validation mIoU with plain fine-tuning, then with lr fixed pick lambda by
// all-class validation mIoU of the actual method.
HyperChoice select_hyperparameters(Method method, const HyperGrid& grid, const Dataset& dataset,
                                   const TaskStream& stream, const TrainConfig& base_config);

} // namespace ciss
