#include "ciss/importance.hpp"

#include <cmath>

#include "ciss/error.hpp"
#include "ciss/losses.hpp"

namespace ciss {

std::string to_string(ImportanceMethod m) { return m == ImportanceMethod::ewc ? "ewc" : "mas"; }

ImportanceEstimate estimate_importance(LayerTapModel& model,
                                       const std::vector<const SegSample*>& samples,
                                       ImportanceMethod method, int max_samples, int ignore_id) {
  CISS_CHECK(!samples.empty(), empty_dataset, "importance estimation over an empty dataset");
  const int n = std::min<int>(max_samples, static_cast<int>(samples.size()));
  CISS_CHECK(n >= 1, empty_dataset, "importance estimation needs at least one sample");

  ImportanceEstimate est;
  est.method = method;
  std::vector<ParamRef> params = model.parameters();
  for (const ParamRef& p : params) {
    if (!p.trainable) continue;
    est.omega[p.name] = Tensor(p.value->shape());
    est.anchor[p.name] = *p.value;
  }

  for (int s = 0; s < n; ++s) {
    const SegSample& sample = *samples[static_cast<size_t>(s)];
    const int h = sample.height(), w = sample.width();
    Tensor x({1, 3, h, w});
    std::copy(sample.image.data(), sample.image.data() + sample.image.size(), x.data());
    IntTensor y({1, h, w});
    std::copy(sample.label.data(), sample.label.data() + sample.label.size(), y.data());

    model.zero_grad();
    Tensor logits = model.forward(x, /*train=*/true);
    Tensor dlogits;
    if (method == ImportanceMethod::ewc) {
      LossResult ce = cross_entropy(logits, y, ignore_id, /*with_grad=*/true);
      if (ce.empty_support) continue; // fully ignored image contributes nothing
      dlogits = std::move(ce.grad);
    } else {
      // d ||z||^2 / d z = 2 z
      dlogits = Tensor(logits.shape());
      for (int64_t i = 0; i < logits.size(); ++i) dlogits[i] = 2.0 * logits[i];
    }
    model.backward(dlogits);

    for (const ParamRef& p : params) {
      if (!p.trainable) continue;
      Tensor& om = est.omega[p.name];
      const Tensor& g = *p.grad;
      if (method == ImportanceMethod::ewc) {
        for (int64_t i = 0; i < g.size(); ++i) om[i] += g[i] * g[i];
      } else {
        for (int64_t i = 0; i < g.size(); ++i) om[i] += std::fabs(g[i]);
      }
    }
  }
  model.zero_grad();

  const double inv = 1.0 / static_cast<double>(n);
  for (auto& [name, om] : est.omega)
    for (int64_t i = 0; i < om.size(); ++i) om[i] *= inv;
  return est;
}

namespace {

// Head parameters grow when the classifier is extended; the anchor then
// covers the leading (old-class) slice of the current parameter. Row-major
// layout makes that slice contiguous.
int64_t anchored_extent(const Tensor& theta, const Tensor& anchor, const std::string& name) {
  if (theta.same_shape(anchor)) return anchor.size();
  CISS_CHECK(theta.ndim() == anchor.ndim() && theta.dim(0) >= anchor.dim(0), shape,
             "penalty: parameter " + name + " " + theta.shape_str() +
                 " is not an extension of anchor " + anchor.shape_str());
  for (int d = 1; d < theta.ndim(); ++d)
    CISS_CHECK(theta.dim(d) == anchor.dim(d), shape,
               "penalty: trailing dims of " + name + " changed");
  return anchor.size();
}

} // namespace

double quadratic_penalty(const std::vector<ParamRef>& params, const ImportanceEstimate& estimate,
                         double lambda) {
  std::map<std::string, const Tensor*> by_name;
  for (const ParamRef& p : params) by_name[p.name] = p.value;
  double total = 0.0;
  for (const auto& [name, om] : estimate.omega) {
    auto it = by_name.find(name);
    CISS_CHECK(it != by_name.end(), missing_key, "penalty: model lacks parameter " + name);
    const Tensor& theta = *it->second;
    const Tensor& anchor = estimate.anchor.at(name);
    const int64_t n = anchored_extent(theta, anchor, name);
    for (int64_t i = 0; i < n; ++i) {
      const double d = theta[i] - anchor[i];
      total += om[i] * d * d;
    }
  }
  return lambda * total;
}

double add_penalty_gradient(LayerTapModel& model, const ImportanceEstimate& estimate,
                            double lambda) {
  std::vector<ParamRef> params = model.parameters();
  std::map<std::string, ParamRef*> by_name;
  for (ParamRef& p : params) by_name[p.name] = &p;
  double total = 0.0;
  for (const auto& [name, om] : estimate.omega) {
    auto it = by_name.find(name);
    CISS_CHECK(it != by_name.end(), missing_key, "penalty: model lacks parameter " + name);
    ParamRef& p = *it->second;
    const Tensor& anchor = estimate.anchor.at(name);
    const int64_t n = anchored_extent(*p.value, anchor, name);
    for (int64_t i = 0; i < n; ++i) {
      const double d = (*p.value)[i] - anchor[i];
      total += om[i] * d * d;
      (*p.grad)[i] += 2.0 * lambda * om[i] * d;
    }
  }
  return lambda * total;
}

} // namespace ciss
