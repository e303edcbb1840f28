#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ciss/layers.hpp"

namespace ciss {

// SGD with momentum; weight decay is added to the gradient before the
// momentum update.
class SgdOptimizer {
public:
  SgdOptimizer(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  void step(const std::vector<ParamRef>& params);

private:
  double lr_, momentum_, weight_decay_;
  std::map<std::string, Tensor> velocity_;
};

// Halves (times `factor`) the learning rate whenever the validation loss has
// not improved for `patience` consecutive epochs.
class PlateauScheduler {
public:
  PlateauScheduler(int patience, double factor) : patience_(patience), factor_(factor) {}

  // Returns the lr multiplier to apply after this epoch (1.0 or factor).
  double observe(double val_loss);

  int stall_count() const { return stall_; }

private:
  int patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  int stall_ = 0;
};

// lr(e) = lr0 * 0.5 * (1 + cos(pi * e / total)) for e in [0, total).
double cosine_lr(double lr0, int epoch, int total_epochs);

// Scales all trainable gradients so their global L2 norm is at most
// max_norm; returns the pre-clip norm.
double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm);

} // namespace ciss
