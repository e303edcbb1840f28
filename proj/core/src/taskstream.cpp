#include "ciss/taskstream.hpp"

#include <algorithm>
#include <set>

#include "ciss/error.hpp"

namespace ciss {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::overlapped: return "overlapped";
    case Regime::disjoint: return "disjoint";
    case Regime::full_disjoint: return "full_disjoint";
  }
  return "?";
}

Regime regime_from_string(const std::string& s) {
  if (s == "overlapped") return Regime::overlapped;
  if (s == "disjoint") return Regime::disjoint;
  if (s == "full_disjoint") return Regime::full_disjoint;
  raise(ErrorKind::config,
        "unknown regime '" + s + "' (valid: overlapped, disjoint, full_disjoint)");
}

bool TaskDefinition::is_new(int cls) const {
  return std::binary_search(new_classes.begin(), new_classes.end(), cls);
}

bool TaskDefinition::is_seen(int cls) const {
  return std::binary_search(seen_classes.begin(), seen_classes.end(), cls);
}

std::vector<TaskDefinition> make_task_sequence(const ClassCatalog& catalog,
                                               const std::vector<std::vector<int>>& splits,
                                               Regime regime) {
  catalog.validate();
  CISS_CHECK(!splits.empty(), config, "task split list is empty");

  std::vector<TaskDefinition> tasks;
  std::set<int> seen{catalog.background_id};
  for (size_t t = 0; t < splits.size(); ++t) {
    TaskDefinition task;
    task.index = static_cast<int>(t);
    task.regime = regime;
    task.new_classes = splits[t];
    std::sort(task.new_classes.begin(), task.new_classes.end());
    CISS_CHECK(!task.new_classes.empty(), config, "task " + std::to_string(t) + " has no classes");
    CISS_CHECK(std::adjacent_find(task.new_classes.begin(), task.new_classes.end()) ==
                   task.new_classes.end(),
               config, "duplicate class within a task split");
    for (int cls : task.new_classes) {
      CISS_CHECK(catalog.contains(cls), config,
                 "class " + std::to_string(cls) + " not in catalog");
      CISS_CHECK(cls != catalog.background_id, config, "background cannot be a new class");
      CISS_CHECK(seen.find(cls) == seen.end(), config,
                 "class " + std::to_string(cls) + " appears in more than one task");
      seen.insert(cls);
    }
    task.seen_classes.assign(seen.begin(), seen.end());
    tasks.push_back(std::move(task));
  }
  return tasks;
}

namespace {

void check_labels_in_catalog(const SegSample& sample, const ClassCatalog& catalog) {
  for (int64_t i = 0; i < sample.label.size(); ++i) {
    const int v = sample.label[i];
    CISS_CHECK(catalog.contains(v) || v == catalog.ignore_id, invalid_sample,
               "label value " + std::to_string(v) + " outside catalog and ignore id");
  }
}

bool contains_any(const SegSample& sample, const std::vector<int>& classes) {
  for (int64_t i = 0; i < sample.label.size(); ++i)
    if (std::binary_search(classes.begin(), classes.end(), sample.label[i])) return true;
  return false;
}

bool contains_future(const SegSample& sample, const TaskDefinition& task,
                     const ClassCatalog& catalog) {
  for (int64_t i = 0; i < sample.label.size(); ++i) {
    const int v = sample.label[i];
    if (v == catalog.ignore_id) continue;
    if (!task.is_seen(v)) return true;
  }
  return false;
}

} // namespace

SegSample relabel_for_task(const SegSample& sample, const TaskDefinition& task,
                           const ClassCatalog& catalog) {
  check_labels_in_catalog(sample, catalog);
  SegSample out;
  out.image = sample.image;
  out.label = sample.label;
  const int hidden = task.regime == Regime::full_disjoint ? catalog.ignore_id
                                                          : catalog.background_id;
  for (int64_t i = 0; i < out.label.size(); ++i) {
    const int v = out.label[i];
    if (v == catalog.background_id || v == catalog.ignore_id) continue;
    if (!task.is_new(v)) out.label[i] = hidden;
  }
  return out;
}

SegSample restrict_to_seen(const SegSample& sample, const TaskDefinition& task,
                           const ClassCatalog& catalog) {
  check_labels_in_catalog(sample, catalog);
  SegSample out;
  out.image = sample.image;
  out.label = sample.label;
  for (int64_t i = 0; i < out.label.size(); ++i) {
    const int v = out.label[i];
    if (v == catalog.ignore_id) continue;
    if (!task.is_seen(v)) out.label[i] = catalog.ignore_id;
  }
  return out;
}

TaskStream build_task_stream(const Dataset& dataset, const std::vector<TaskDefinition>& tasks,
                             const TaskStreamOptions& options) {
  CISS_CHECK(!tasks.empty(), config, "no tasks");
  TaskStream stream;
  stream.catalog = dataset.catalog;
  stream.tasks = tasks;

  Rng rng(options.seed);
  for (const TaskDefinition& task : tasks) {
    // image selection over the source train split
    std::vector<int> kept;
    for (int id : dataset.train_ids) {
      const SegSample& s = dataset.samples[static_cast<size_t>(id)];
      if (!contains_any(s, task.new_classes)) continue;
      if (task.regime != Regime::overlapped && contains_future(s, task, dataset.catalog))
        continue;
      kept.push_back(id);
    }
    CISS_CHECK(!kept.empty(), empty_task,
               "task " + std::to_string(task.index) + " (" + to_string(task.regime) +
                   ") has an empty training split after filtering");

    // carve the plateau-validation split
    Rng split_rng = rng.split(static_cast<uint64_t>(task.index));
    std::vector<int> order = kept;
    split_rng.shuffle(order);
    size_t val_n = static_cast<size_t>(std::lround(options.val_fraction * order.size()));
    if (order.size() >= 2 && val_n == 0 && options.val_fraction > 0) val_n = 1;
    if (val_n >= order.size()) val_n = order.size() - 1;

    TaskData data;
    data.val_source_ids.assign(order.begin(), order.begin() + static_cast<long>(val_n));
    data.train_source_ids.assign(order.begin() + static_cast<long>(val_n), order.end());
    std::sort(data.val_source_ids.begin(), data.val_source_ids.end());
    std::sort(data.train_source_ids.begin(), data.train_source_ids.end());
    for (int id : data.train_source_ids)
      data.train.push_back(
          relabel_for_task(dataset.samples[static_cast<size_t>(id)], task, dataset.catalog));
    for (int id : data.val_source_ids)
      data.val.push_back(
          relabel_for_task(dataset.samples[static_cast<size_t>(id)], task, dataset.catalog));
    stream.task_data.push_back(std::move(data));

    std::vector<SegSample> test_t;
    for (int id : dataset.test_ids)
      test_t.push_back(restrict_to_seen(dataset.samples[static_cast<size_t>(id)], task,
                                        dataset.catalog));
    stream.test_at_step.push_back(std::move(test_t));

    std::vector<SegSample> val_t;
    for (int id : dataset.val_ids)
      val_t.push_back(restrict_to_seen(dataset.samples[static_cast<size_t>(id)], task,
                                       dataset.catalog));
    stream.val_at_step.push_back(std::move(val_t));
  }
  return stream;
}

} // namespace ciss
