#include <doctest.h>

#include <set>

#include "ciss/error.hpp"
#include "ciss/taskstream.hpp"

using namespace ciss;

namespace {

ClassCatalog catalog5() {
  ClassCatalog c;
  c.num_classes = 5;
  c.names = {"background", "a", "b", "c", "d"};
  return c;
}

SegSample patch_sample(const std::vector<int>& labels) {
  SegSample s;
  const int w = static_cast<int>(labels.size());
  s.image = Tensor({3, 1, w});
  s.label = IntTensor({1, w});
  for (int i = 0; i < w; ++i) s.label.at(0, i) = labels[static_cast<size_t>(i)];
  return s;
}

std::vector<int> label_vec(const SegSample& s) {
  return std::vector<int>(s.label.data(), s.label.data() + s.label.size());
}

Dataset tiny_dataset() {
  // hand-built source set over catalog {0..4}
  Dataset ds;
  ds.catalog = catalog5();
  ds.samples.push_back(patch_sample({1, 2, 0, 0}));  // only task-0 classes
  ds.samples.push_back(patch_sample({1, 3, 0, 0}));  // mixes tasks
  ds.samples.push_back(patch_sample({3, 4, 0, 0}));  // only task-1 classes
  ds.samples.push_back(patch_sample({0, 0, 0, 2}));  // task-0 only
  ds.samples.push_back(patch_sample({1, 4, 0, 0}));  // mixes tasks
  ds.samples.push_back(patch_sample({2, 0, 0, 0}));  // task-0 only
  ds.samples.push_back(patch_sample({0, 3, 4, 0}));  // task-1 only
  ds.samples.push_back(patch_sample({4, 0, 2, 1}));  // mixes tasks
  for (int i = 0; i < 8; ++i) ds.train_ids.push_back(i);
  ds.test_ids = {0, 2};
  ds.val_ids = {1};
  return ds;
}

} // namespace

TEST_CASE("task sequence: invariants enforced") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}, {3, 4}}, Regime::disjoint);
  CHECK(tasks.size() == 2);
  CHECK(tasks[0].seen_classes == std::vector<int>{0, 1, 2});
  CHECK(tasks[1].seen_classes == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(tasks[1].new_classes == std::vector<int>{3, 4});

  CHECK_THROWS_AS((void)make_task_sequence(cat, {{1, 2}, {2, 3}}, Regime::disjoint), Error);
  CHECK_THROWS_AS((void)make_task_sequence(cat, {{0, 1}}, Regime::disjoint), Error);
  CHECK_THROWS_AS((void)make_task_sequence(cat, {{9}}, Regime::disjoint), Error);
}

TEST_CASE("relabel: disjoint maps off-task classes to background") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}, {3, 4}}, Regime::disjoint);
  const SegSample out = relabel_for_task(patch_sample({1, 3, 0}), tasks[0], cat);
  CHECK(label_vec(out) == std::vector<int>{1, 0, 0});
}

TEST_CASE("relabel: full_disjoint maps off-task classes to ignore") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}, {3, 4}}, Regime::full_disjoint);
  const SegSample out = relabel_for_task(patch_sample({1, 3, 0}), tasks[0], cat);
  CHECK(label_vec(out) == std::vector<int>{1, 255, 0});
}

TEST_CASE("relabel: labels already within the task stay unchanged") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}, {3, 4}}, Regime::disjoint);
  const SegSample src = patch_sample({1, 2, 0, 0});
  const SegSample out = relabel_for_task(src, tasks[0], cat);
  CHECK(label_vec(out) == label_vec(src));
  CHECK(bit_equal(out.image, src.image));
}

TEST_CASE("relabel: label outside the catalog raises invalid-sample") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}}, Regime::disjoint);
  CHECK_THROWS_AS((void)relabel_for_task(patch_sample({1, 9, 0}), tasks[0], cat), Error);
}

TEST_CASE("stream: overlapped keeps mixed images and hides future classes as background") {
  const Dataset ds = tiny_dataset();
  const auto tasks = make_task_sequence(ds.catalog, {{1, 2}, {3, 4}}, Regime::overlapped);
  TaskStreamOptions opt;
  opt.val_fraction = 0.0;
  const TaskStream stream = build_task_stream(ds, tasks, opt);

  // sample 4 (labels {1,4,0,0}) stays in task 0, class 4 hidden as background
  bool found = false;
  for (size_t i = 0; i < stream.task_data[0].train_source_ids.size(); ++i) {
    if (stream.task_data[0].train_source_ids[i] == 4) {
      found = true;
      CHECK(label_vec(stream.task_data[0].train[i]) == std::vector<int>{1, 0, 0, 0});
    }
  }
  CHECK(found);
}

TEST_CASE("stream: disjoint discards images containing future classes") {
  const Dataset ds = tiny_dataset();
  const auto tasks = make_task_sequence(ds.catalog, {{1, 2}, {3, 4}}, Regime::disjoint);
  TaskStreamOptions opt;
  opt.val_fraction = 0.0;
  const TaskStream stream = build_task_stream(ds, tasks, opt);

  CHECK(stream.task_data[0].train_source_ids == std::vector<int>{0, 3, 5});
  // no task-0 training label contains a class of S_1
  for (const SegSample& s : stream.task_data[0].train)
    for (int64_t i = 0; i < s.label.size(); ++i) {
      CHECK(s.label[i] != 3);
      CHECK(s.label[i] != 4);
    }
}

TEST_CASE("stream: full_disjoint task-1 backgrounds carry no hidden old-class pixels") {
  const Dataset ds = tiny_dataset();
  const auto tasks = make_task_sequence(ds.catalog, {{1, 2}, {3, 4}}, Regime::full_disjoint);
  TaskStreamOptions opt;
  opt.val_fraction = 0.0;
  const TaskStream stream = build_task_stream(ds, tasks, opt);

  for (size_t i = 0; i < stream.task_data[1].train.size(); ++i) {
    const int src_id = stream.task_data[1].train_source_ids[i];
    const SegSample& original = ds.samples[static_cast<size_t>(src_id)];
    const SegSample& relabeled = stream.task_data[1].train[i];
    for (int64_t p = 0; p < relabeled.label.size(); ++p) {
      if (relabeled.label[p] == 0) {
        // background pixel in training data must be true background
        CHECK(original.label[p] == 0);
      }
    }
  }
}

TEST_CASE("stream: regime training-set cardinality ordering") {
  const Dataset ds = tiny_dataset();
  TaskStreamOptions opt;
  opt.val_fraction = 0.0;
  size_t counts[3];
  int i = 0;
  for (Regime r : {Regime::overlapped, Regime::disjoint, Regime::full_disjoint}) {
    const auto tasks = make_task_sequence(ds.catalog, {{1, 2}, {3, 4}}, r);
    const TaskStream stream = build_task_stream(ds, tasks, opt);
    counts[i++] = stream.task_data[0].train.size() + stream.task_data[1].train.size();
  }
  CHECK(counts[0] >= counts[1]);
  CHECK(counts[1] >= counts[2]);
}

TEST_CASE("stream: step-t test labels map unseen classes to ignore") {
  const Dataset ds = tiny_dataset();
  const auto tasks = make_task_sequence(ds.catalog, {{1, 2}, {3, 4}}, Regime::disjoint);
  TaskStreamOptions opt;
  opt.val_fraction = 0.0;
  const TaskStream stream = build_task_stream(ds, tasks, opt);
  // test id 2 has labels {3,4,0,0}; at step 0 both are unseen
  CHECK(label_vec(stream.test_at_step[0][1]) == std::vector<int>{255, 255, 0, 0});
  // at step 1 everything is seen
  CHECK(label_vec(stream.test_at_step[1][1]) == std::vector<int>{3, 4, 0, 0});
}

TEST_CASE("stream: empty task raises") {
  Dataset ds = tiny_dataset();
  ds.train_ids = {2, 6}; // only images containing future classes for task 0
  const auto tasks = make_task_sequence(ds.catalog, {{1, 2}, {3, 4}}, Regime::disjoint);
  CHECK_THROWS_AS((void)build_task_stream(ds, tasks, TaskStreamOptions{}), Error);
}

TEST_CASE("stream: deterministic under a fixed seed") {
  const Dataset ds = tiny_dataset();
  const auto tasks = make_task_sequence(ds.catalog, {{1, 2}, {3, 4}}, Regime::disjoint);
  TaskStreamOptions opt;
  opt.seed = 42;
  const TaskStream a = build_task_stream(ds, tasks, opt);
  const TaskStream b = build_task_stream(ds, tasks, opt);
  CHECK(a.task_data[0].train_source_ids == b.task_data[0].train_source_ids);
  CHECK(a.task_data[0].val_source_ids == b.task_data[0].val_source_ids);
}
