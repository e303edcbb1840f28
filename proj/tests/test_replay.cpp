#include <doctest.h>

#include <filesystem>

#include "ciss/replay.hpp"

using namespace ciss;
namespace fs = std::filesystem;

namespace {

ClassCatalog catalog5() {
  ClassCatalog c;
  c.num_classes = 5;
  return c;
}

SegSample sample_with(int cls, int variant) {
  SegSample s;
  s.image = Tensor({3, 4, 4});
  s.image[0] = variant / 255.0;
  s.label = IntTensor({4, 4});
  s.label.at(0, 0) = cls;
  return s;
}

} // namespace

TEST_CASE("replay buffer: capacity clamps stored samples to 20") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}}, Regime::disjoint);
  std::vector<SegSample> pool;
  for (int i = 0; i < 30; ++i) pool.push_back(sample_with(1, i));
  std::vector<const SegSample*> ptrs;
  for (const SegSample& s : pool) ptrs.push_back(&s);

  ReplayBuffer buf(20);
  Rng rng(1);
  const auto report = buf.populate(ptrs, {1}, tasks[0], cat, rng);
  CHECK(report.stored.at(1) == 20);
  CHECK(buf.samples_for(1).size() == 20);
  CHECK(report.warnings.empty());
}

TEST_CASE("replay buffer: scarce class stores what exists plus a warning") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}}, Regime::disjoint);
  std::vector<SegSample> pool;
  for (int i = 0; i < 5; ++i) pool.push_back(sample_with(2, i));
  std::vector<const SegSample*> ptrs;
  for (const SegSample& s : pool) ptrs.push_back(&s);

  ReplayBuffer buf(20);
  Rng rng(2);
  const auto report = buf.populate(ptrs, {2}, tasks[0], cat, rng);
  CHECK(report.stored.at(2) == 5);
  CHECK(report.warnings.size() == 1);
}

TEST_CASE("replay buffer: absent class stores zero and records a warning") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}}, Regime::disjoint);
  std::vector<SegSample> pool{sample_with(1, 0)};
  std::vector<const SegSample*> ptrs{&pool[0]};
  ReplayBuffer buf(20);
  Rng rng(3);
  const auto report = buf.populate(ptrs, {2}, tasks[0], cat, rng);
  CHECK(report.stored.at(2) == 0);
  CHECK(report.warnings.size() == 1);
  CHECK(buf.samples_for(2).empty());
}

TEST_CASE("replay buffer: fixed seed reproduces identical contents") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}}, Regime::disjoint);
  std::vector<SegSample> pool;
  for (int i = 0; i < 40; ++i) pool.push_back(sample_with(1 + (i % 2), i));
  std::vector<const SegSample*> ptrs;
  for (const SegSample& s : pool) ptrs.push_back(&s);

  ReplayBuffer a(8), b(8);
  Rng ra(7), rb(7);
  a.populate(ptrs, {1, 2}, tasks[0], cat, ra);
  b.populate(ptrs, {1, 2}, tasks[0], cat, rb);
  for (int cls : {1, 2}) {
    REQUIRE(a.samples_for(cls).size() == b.samples_for(cls).size());
    for (size_t i = 0; i < a.samples_for(cls).size(); ++i)
      CHECK(bit_equal(a.samples_for(cls)[i].image, b.samples_for(cls)[i].image));
  }
}

TEST_CASE("replay buffer: every stored sample contains its class") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}}, Regime::disjoint);
  std::vector<SegSample> pool;
  for (int i = 0; i < 12; ++i) pool.push_back(sample_with(1 + (i % 2), i));
  std::vector<const SegSample*> ptrs;
  for (const SegSample& s : pool) ptrs.push_back(&s);
  ReplayBuffer buf(6);
  Rng rng(9);
  buf.populate(ptrs, {1, 2}, tasks[0], cat, rng);
  for (int cls : {1, 2})
    for (const SegSample& s : buf.samples_for(cls)) {
      bool found = false;
      for (int64_t p = 0; p < s.label.size(); ++p) found |= s.label[p] == cls;
      CHECK(found);
    }
}

TEST_CASE("replay buffer: unseen classes are restricted at storage time") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}, {3, 4}}, Regime::overlapped);
  SegSample s = sample_with(1, 1);
  s.label.at(1, 1) = 3; // future class pixel
  std::vector<const SegSample*> ptrs{&s};
  ReplayBuffer buf(4);
  Rng rng(11);
  buf.populate(ptrs, {1}, tasks[0], cat, rng); // seen set is C_0 = {0,1,2}
  const SegSample& stored = buf.samples_for(1)[0];
  CHECK(stored.label.at(1, 1) == 0); // became background
  CHECK(stored.label.at(0, 0) == 1);
}

TEST_CASE("replay buffer: sampling is uniform-ish and deterministic") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}}, Regime::disjoint);
  std::vector<SegSample> pool;
  for (int i = 0; i < 10; ++i) pool.push_back(sample_with(1, i));
  std::vector<const SegSample*> ptrs;
  for (const SegSample& s : pool) ptrs.push_back(&s);
  ReplayBuffer buf(10);
  Rng rng(13);
  buf.populate(ptrs, {1}, tasks[0], cat, rng);

  Rng s1(5), s2(5);
  const auto b1 = buf.sample_batch(4, s1);
  const auto b2 = buf.sample_batch(4, s2);
  REQUIRE(b1.size() == 4);
  for (size_t i = 0; i < 4; ++i) CHECK(b1[i] == b2[i]);
}

TEST_CASE("replay buffer: directory round-trip") {
  const ClassCatalog cat = catalog5();
  const auto tasks = make_task_sequence(cat, {{1, 2}}, Regime::disjoint);
  std::vector<SegSample> pool;
  for (int i = 0; i < 6; ++i) pool.push_back(sample_with(1 + (i % 2), 40 * i));
  std::vector<const SegSample*> ptrs;
  for (const SegSample& s : pool) ptrs.push_back(&s);
  ReplayBuffer buf(4);
  Rng rng(17);
  buf.populate(ptrs, {1, 2}, tasks[0], cat, rng);

  const fs::path dir = fs::temp_directory_path() / "ciss_test_replay";
  fs::remove_all(dir);
  buf.save(dir);
  const ReplayBuffer loaded = ReplayBuffer::load(dir);
  CHECK(loaded.total_samples() == buf.total_samples());
  CHECK(loaded.capacity_per_class() == 4);
  for (int cls : {1, 2}) {
    REQUIRE(loaded.samples_for(cls).size() == buf.samples_for(cls).size());
    for (size_t i = 0; i < loaded.samples_for(cls).size(); ++i)
      CHECK(loaded.samples_for(cls)[i].label == buf.samples_for(cls)[i].label);
  }
  fs::remove_all(dir);
}
