#pragma once

#include <string>
#include <vector>

#include "ciss/dataset.hpp"

namespace ciss {

// How off-task pixels are treated when building a task's training data.
enum class Regime { overlapped, disjoint, full_disjoint };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct TaskDefinition {
  int index = 0;
  std::vector<int> new_classes;  // S_t, sorted
  std::vector<int> seen_classes; // C_t = C_{t-1} u S_t, sorted, includes background
  Regime regime = Regime::disjoint;

  bool is_new(int cls) const;
  bool is_seen(int cls) const;
};

// Builds the task sequence from a class split, validating the incremental
// invariants (disjoint new-class sets, cumulative seen sets, background
// always present).
std::vector<TaskDefinition> make_task_sequence(const ClassCatalog& catalog,
                                               const std::vector<std::vector<int>>& splits,
                                               Regime regime);

// Maps labels outside the task's visible set: to background in the
// overlapped/disjoint regimes, to ignore_id in full_disjoint. Background
// stays background; the image is untouched.
SegSample relabel_for_task(const SegSample& sample, const TaskDefinition& task,
                           const ClassCatalog& catalog);

// Step-t evaluation view: classes seen so far keep their label, classes not
// yet seen are mapped to ignore_id.
SegSample restrict_to_seen(const SegSample& sample, const TaskDefinition& task,
                           const ClassCatalog& catalog);

struct TaskData {
  std::vector<SegSample> train; // relabeled for the task
  std::vector<SegSample> val;   // plateau-validation split carved from train
  std::vector<int> train_source_ids; // indices into the source dataset
  std::vector<int> val_source_ids;
};

struct TaskStream {
  ClassCatalog catalog;
  std::vector<TaskDefinition> tasks;
  std::vector<TaskData> task_data;
  // Cumulative evaluation sets with step-restricted original labels.
  std::vector<std::vector<SegSample>> test_at_step;
  std::vector<std::vector<SegSample>> val_at_step;
};

struct TaskStreamOptions {
  double val_fraction = 0.1; // share of each task's train images held out
  uint64_t seed = 0;
};

// Image selection per task: overlapped keeps images containing at least one
// new-class pixel; disjoint and full_disjoint additionally drop images with
// any future-class pixel. Selected images are then relabeled for the task.
TaskStream build_task_stream(const Dataset& dataset, const std::vector<TaskDefinition>& tasks,
                             const TaskStreamOptions& options);

} // namespace ciss
