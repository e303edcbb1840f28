#pragma once

#include <Eigen/Dense>

#include <vector>

#include "ciss/dataset.hpp"
#include "ciss/model.hpp"

namespace ciss {

struct CkaResult {
  double value = 0.0;
  bool defined = false; // false on zero-variance input
};

// Linear-kernel centered kernel alignment between activation matrices with
// rows as samples: |Yc' Xc|_F^2 / (|Xc' Xc|_F |Yc' Yc|_F), columns centered.
CkaResult linear_cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct CkaProfileOptions {
  int positions = 512;      // pixel positions sampled per layer
  int max_positions = 4096; // hard cap on rows
  uint64_t seed = 17;
  int batch_size = 8;
};

// Per-block CKA between two models of identical architecture. Activations
// are reshaped to (sampled pixel positions) x channels; per layer the same
// seeded position sample is applied to both models.
std::vector<CkaResult> cka_profile(LayerTapModel& f0, LayerTapModel& f1,
                                   const std::vector<SegSample>& probe_data,
                                   const CkaProfileOptions& options = {});

} // namespace ciss
