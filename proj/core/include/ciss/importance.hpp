#pragma once

#include <map>
#include <string>
#include <vector>

#include "ciss/dataset.hpp"
#include "ciss/model.hpp"
#include "ciss/snapshot.hpp"

namespace ciss {

enum class ImportanceMethod { ewc, mas };

std::string to_string(ImportanceMethod m);

// Per-parameter importance weights plus the anchor the quadratic penalty
// pulls towards. Keys match the anchor's trainable parameter names exactly;
// all values are nonnegative.
struct ImportanceEstimate {
  std::map<std::string, Tensor> omega;
  std::map<std::string, Tensor> anchor;
  ImportanceMethod method = ImportanceMethod::ewc;
};

// Per-sample gradients, averaged:
//   ewc: omega_p = E[ (d ce / d p)^2 ]   (empirical Fisher at the labels)
//   mas: omega_p = E[ |d ||f(x)||^2 / d p| ], logits' squared L2 summed over
//        pixels and channels.
// Samples are processed one at a time, up to max_samples.
ImportanceEstimate estimate_importance(LayerTapModel& model,
                                       const std::vector<const SegSample*>& samples,
                                       ImportanceMethod method, int max_samples, int ignore_id);

// lambda * sum_p omega_p * (theta_p - anchor_p)^2 over the estimate's keys.
double quadratic_penalty(const std::vector<ParamRef>& params, const ImportanceEstimate& estimate,
                         double lambda);

// Adds the penalty gradient 2 * lambda * omega_p * (theta_p - anchor_p) into
// the model's parameter gradients and returns the penalty value.
double add_penalty_gradient(LayerTapModel& model, const ImportanceEstimate& estimate,
                            double lambda);

} // namespace ciss
