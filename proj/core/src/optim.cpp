#include "ciss/optim.hpp"

#include <cmath>

#include "ciss/error.hpp"

namespace ciss {

void SgdOptimizer::step(const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) {
    if (!p.trainable || p.grad == nullptr) continue;
    Tensor& v = velocity_[p.name];
    if (!v.same_shape(*p.value)) v = Tensor(p.value->shape());
    double* vel = v.data();
    double* value = p.value->data();
    const double* grad = p.grad->data();
    for (int64_t i = 0; i < p.value->size(); ++i) {
      const double g = grad[i] + weight_decay_ * value[i];
      vel[i] = momentum_ * vel[i] + g;
      value[i] -= lr_ * vel[i];
    }
  }
}

double PlateauScheduler::observe(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    stall_ = 0;
    return 1.0;
  }
  ++stall_;
  if (stall_ >= patience_) {
    stall_ = 0;
    return factor_;
  }
  return 1.0;
}

double cosine_lr(double lr0, int epoch, int total_epochs) {
  CISS_CHECK(total_epochs >= 1, config, "cosine schedule needs at least one epoch");
  return lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / total_epochs));
}

double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm) {
  double sq = 0.0;
  for (const ParamRef& p : params) {
    if (!p.trainable || p.grad == nullptr) continue;
    const double* g = p.grad->data();
    for (int64_t i = 0; i < p.grad->size(); ++i) sq += g[i] * g[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (const ParamRef& p : params) {
      if (!p.trainable || p.grad == nullptr) continue;
      double* g = p.grad->data();
      for (int64_t i = 0; i < p.grad->size(); ++i) g[i] *= scale;
    }
  }
  return norm;
}

} // namespace ciss
