#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "ciss/layers.hpp"
#include "ciss/model.hpp"
#include "ciss/rng.hpp"
#include "ciss/tensor.hpp"

namespace ciss::test {

// Logits whose softmax equals the given probabilities (z = log q).
inline Tensor logits_for_probs(const std::vector<double>& probs) {
  Tensor t({1, static_cast<int>(probs.size()), 1, 1});
  for (size_t i = 0; i < probs.size(); ++i) t[static_cast<int64_t>(i)] = std::log(probs[i]);
  return t;
}

inline IntTensor single_label(int y) {
  IntTensor t({1, 1, 1});
  t[0] = y;
  return t;
}

inline Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double lo = 0.0,
                            double hi = 1.0) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline IntTensor random_labels(const std::vector<int>& shape, int num_classes, Rng& rng,
                               double ignore_fraction = 0.0, int ignore_id = 255) {
  IntTensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) {
    if (ignore_fraction > 0 && rng.uniform01() < ignore_fraction)
      t[i] = ignore_id;
    else
      t[i] = static_cast<int>(rng.uniform_int(num_classes));
  }
  return t;
}

// Small conv net: conv3x3(3->c)+bn+relu | conv3x3(c->c)+bn+relu | head.
// ~100 trainable parameters at c=2.
inline LayerTapModel make_toy_net(int channels, int num_classes, int hw, Rng& rng,
                                  HeadKind head = HeadKind::standard) {
  std::vector<ModelBlock> blocks;
  {
    ModelBlock b;
    b.name = "enc0";
    b.layers.push_back(std::make_unique<Conv2d>(3, channels, 3, 1, 1, false, rng));
    b.layers.push_back(std::make_unique<BatchNorm2d>(channels));
    b.layers.push_back(std::make_unique<ReLU>());
    blocks.push_back(std::move(b));
  }
  {
    ModelBlock b;
    b.name = "dec0";
    b.layers.push_back(std::make_unique<Conv2d>(channels, channels, 3, 1, 1, false, rng));
    b.layers.push_back(std::make_unique<BatchNorm2d>(channels));
    b.layers.push_back(std::make_unique<ReLU>());
    blocks.push_back(std::move(b));
  }
  {
    ModelBlock b;
    b.name = "head";
    b.layers.push_back(
        std::make_unique<ClassifierHead>(channels, num_classes, head, 0.01, rng));
    blocks.push_back(std::move(b));
  }
  return LayerTapModel::from_blocks(std::move(blocks), 1, {3, hw, hw}, "toy");
}

// Central finite difference of scalar(model) w.r.t. every trainable
// parameter entry, compared against the accumulated analytic gradients.
// `scalar` must leave gradients untouched; the analytic gradient is taken
// from the model's current grad buffers.
struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t checked = 0;
};

inline GradCheckResult finite_difference_check(LayerTapModel& model,
                                               const std::function<double()>& scalar,
                                               double h = 1e-5, double denom_floor = 1e-5) {
  GradCheckResult res;
  for (ParamRef& p : model.parameters()) {
    if (!p.trainable || p.grad == nullptr) continue;
    for (int64_t i = 0; i < p.value->size(); ++i) {
      const double saved = (*p.value)[i];
      const double analytic = (*p.grad)[i];
      (*p.value)[i] = saved + h;
      const double up = scalar();
      (*p.value)[i] = saved - h;
      const double down = scalar();
      (*p.value)[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double rel =
          std::fabs(numeric - analytic) / std::max(denom_floor, std::fabs(numeric));
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.checked;
    }
  }
  return res;
}

} // namespace ciss::test
