#pragma once

#include <vector>

#include "ciss/tensor.hpp"

namespace ciss {

struct LossResult {
  double value = 0.0;
  Tensor grad;             // d value / d logits, empty when with_grad=false
  bool empty_support = false;
  int64_t support = 0;     // pixels that contributed
};

// Mean over non-ignored pixels of -log softmax(logits)[label]. All current
// output channels take part in the softmax. Zero (flagged) when every pixel
// is ignored.
LossResult cross_entropy(const Tensor& logits, const IntTensor& labels, int ignore_id,
                         bool with_grad = true);

// Softmax restricted to the channels of current_classes (the background is
// always included); channels outside the set receive no gradient. Labels
// must lie in the restricted set.
LossResult restricted_cross_entropy(const Tensor& logits, const IntTensor& labels,
                                    const std::vector<int>& current_classes, int ignore_id,
                                    bool with_grad = true);

// Background posterior aggregated over the previous classes: for pixels
// labelled background the target probability is sum_{k in old} q_k, other
// labels keep their own channel. old_classes is C_{t-1} including the
// background; empty reduces to plain cross-entropy.
LossResult unbiased_cross_entropy(const Tensor& logits, const IntTensor& labels,
                                  const std::vector<int>& old_classes, int ignore_id,
                                  bool with_grad = true);

// Cross-entropy between the temperature-softened teacher posterior (over the
// old-class channels of old_logits) and the student posterior restricted to
// the same leading channels, averaged over pixels labelled background and
// scaled by T^2 so gradient magnitude is temperature-invariant.
LossResult masked_distillation(const Tensor& new_logits, const Tensor& old_logits,
                               const IntTensor& labels, double temperature, int background_id,
                               bool with_grad = true);

} // namespace ciss
