#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ciss/dataset.hpp"
#include "ciss/taskstream.hpp"

namespace ciss {

// Exemplar store: up to capacity_per_class (image, label) pairs per class,
// labels restricted to the classes seen at storage time. Every stored sample
// contains at least one pixel of its class.
class ReplayBuffer {
public:
  explicit ReplayBuffer(int capacity_per_class = 20) : capacity_(capacity_per_class) {}

  int capacity_per_class() const { return capacity_; }
  bool empty() const;
  int64_t total_samples() const;
  const std::vector<SegSample>& samples_for(int cls) const;
  std::vector<int> stored_classes() const;

  struct PopulateReport {
    std::map<int, int> stored;          // class -> count
    std::vector<std::string> warnings;  // classes with fewer candidates than capacity
  };

  // Draws up to capacity samples per requested class uniformly at random
  // (without replacement) from the candidates that contain the class.
  // Labels are restricted to seen_classes: other entity pixels become
  // background (overlapped/disjoint) or ignore (full_disjoint).
  PopulateReport populate(const std::vector<const SegSample*>& candidates,
                          const std::vector<int>& classes, const TaskDefinition& seen_task,
                          const ClassCatalog& catalog, Rng& rng);

  // k items uniformly over the flattened buffer, without replacement while
  // the buffer allows it.
  std::vector<const SegSample*> sample_batch(int k, Rng& rng) const;

  void save(const std::filesystem::path& dir) const;
  static ReplayBuffer load(const std::filesystem::path& dir);

private:
  int capacity_;
  std::map<int, std::vector<SegSample>> store_;
};

} // namespace ciss
