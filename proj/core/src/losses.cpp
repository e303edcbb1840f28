#include "ciss/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ciss/error.hpp"

namespace ciss {

namespace {

struct PixelView {
  const double* logits; // channel c at logits[c * plane]
  int64_t plane;
};

void check_batch_shapes(const Tensor& logits, const IntTensor& labels) {
  CISS_CHECK(logits.ndim() == 4, shape, "loss expects NCHW logits, got " + logits.shape_str());
  CISS_CHECK(labels.ndim() == 3, shape, "loss expects NHW labels");
  CISS_CHECK(logits.dim(0) == labels.dim(0) && logits.dim(2) == labels.dim(1) &&
                 logits.dim(3) == labels.dim(2),
             shape, "logits/labels spatial mismatch");
}

// softmax over the given channel subset, stable via max subtraction.
// subset == nullptr means all channels. Returns log(sum exp) and fills q.
void subset_softmax(const double* logits, int64_t plane, const std::vector<int>* subset,
                    int channels, std::vector<double>& q) {
  double mx = -1e300;
  if (subset) {
    for (int c : *subset) mx = std::max(mx, logits[static_cast<int64_t>(c) * plane]);
  } else {
    for (int c = 0; c < channels; ++c)
      mx = std::max(mx, logits[static_cast<int64_t>(c) * plane]);
  }
  double z = 0.0;
  if (subset) {
    q.assign(subset->size(), 0.0);
    for (size_t k = 0; k < subset->size(); ++k) {
      q[k] = std::exp(logits[static_cast<int64_t>((*subset)[k]) * plane] - mx);
      z += q[k];
    }
  } else {
    q.assign(static_cast<size_t>(channels), 0.0);
    for (int c = 0; c < channels; ++c) {
      q[static_cast<size_t>(c)] = std::exp(logits[static_cast<int64_t>(c) * plane] - mx);
      z += q[static_cast<size_t>(c)];
    }
  }
  for (double& v : q) v /= z;
}

} // namespace

LossResult cross_entropy(const Tensor& logits, const IntTensor& labels, int ignore_id,
                         bool with_grad) {
  check_batch_shapes(logits, labels);
  const int b = logits.dim(0), ch = logits.dim(1);
  const int64_t plane = static_cast<int64_t>(logits.dim(2)) * logits.dim(3);

  LossResult res;
  if (with_grad) res.grad = Tensor(logits.shape());
  double total = 0.0;
  int64_t support = 0;
  std::vector<double> q;
  for (int i = 0; i < b; ++i) {
    const double* lb = logits.data() + static_cast<int64_t>(i) * ch * plane;
    const int32_t* yb = labels.data() + static_cast<int64_t>(i) * plane;
    double* gb = with_grad ? res.grad.data() + static_cast<int64_t>(i) * ch * plane : nullptr;
    for (int64_t j = 0; j < plane; ++j) {
      const int y = yb[j];
      if (y == ignore_id) continue;
      CISS_CHECK(y >= 0 && y < ch, invalid_sample,
                 "label " + std::to_string(y) + " outside the model's " + std::to_string(ch) +
                     " channels");
      subset_softmax(lb + j, plane, nullptr, ch, q);
      total += -std::log(std::max(q[static_cast<size_t>(y)], 1e-300));
      ++support;
      if (gb)
        for (int c = 0; c < ch; ++c)
          gb[static_cast<int64_t>(c) * plane + j] =
              q[static_cast<size_t>(c)] - (c == y ? 1.0 : 0.0);
    }
  }
  res.support = support;
  if (support == 0) {
    res.empty_support = true;
    return res; // value 0, zero grad
  }
  res.value = total / static_cast<double>(support);
  if (with_grad) {
    const double s = 1.0 / static_cast<double>(support);
    for (int64_t i = 0; i < res.grad.size(); ++i) res.grad[i] *= s;
  }
  return res;
}

LossResult restricted_cross_entropy(const Tensor& logits, const IntTensor& labels,
                                    const std::vector<int>& current_classes, int ignore_id,
                                    bool with_grad) {
  check_batch_shapes(logits, labels);
  const int b = logits.dim(0), ch = logits.dim(1);
  const int64_t plane = static_cast<int64_t>(logits.dim(2)) * logits.dim(3);

  std::vector<int> subset = current_classes;
  if (std::find(subset.begin(), subset.end(), 0) == subset.end()) subset.push_back(0);
  std::sort(subset.begin(), subset.end());
  subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
  for (int c : subset)
    CISS_CHECK(c >= 0 && c < ch, config,
               "restricted class " + std::to_string(c) + " not a model channel");
  std::vector<int> pos(static_cast<size_t>(ch), -1);
  for (size_t k = 0; k < subset.size(); ++k) pos[static_cast<size_t>(subset[k])] =
      static_cast<int>(k);

  LossResult res;
  if (with_grad) res.grad = Tensor(logits.shape());
  double total = 0.0;
  int64_t support = 0;
  std::vector<double> q;
  for (int i = 0; i < b; ++i) {
    const double* lb = logits.data() + static_cast<int64_t>(i) * ch * plane;
    const int32_t* yb = labels.data() + static_cast<int64_t>(i) * plane;
    double* gb = with_grad ? res.grad.data() + static_cast<int64_t>(i) * ch * plane : nullptr;
    for (int64_t j = 0; j < plane; ++j) {
      const int y = yb[j];
      if (y == ignore_id) continue;
      CISS_CHECK(y >= 0 && y < ch && pos[static_cast<size_t>(y)] >= 0, invalid_sample,
                 "label " + std::to_string(y) + " outside the restricted class set");
      subset_softmax(lb + j, plane, &subset, ch, q);
      total += -std::log(std::max(q[static_cast<size_t>(pos[static_cast<size_t>(y)])], 1e-300));
      ++support;
      if (gb)
        for (size_t k = 0; k < subset.size(); ++k)
          gb[static_cast<int64_t>(subset[k]) * plane + j] =
              q[k] - (subset[k] == y ? 1.0 : 0.0);
    }
  }
  res.support = support;
  if (support == 0) {
    res.empty_support = true;
    return res;
  }
  res.value = total / static_cast<double>(support);
  if (with_grad) {
    const double s = 1.0 / static_cast<double>(support);
    for (int64_t i = 0; i < res.grad.size(); ++i) res.grad[i] *= s;
  }
  return res;
}

LossResult unbiased_cross_entropy(const Tensor& logits, const IntTensor& labels,
                                  const std::vector<int>& old_classes, int ignore_id,
                                  bool with_grad) {
  check_batch_shapes(logits, labels);
  const int b = logits.dim(0), ch = logits.dim(1);
  const int64_t plane = static_cast<int64_t>(logits.dim(2)) * logits.dim(3);
  constexpr int kBackground = 0;

  std::vector<uint8_t> is_old(static_cast<size_t>(ch), 0);
  bool any_old = false;
  for (int c : old_classes) {
    CISS_CHECK(c >= 0 && c < ch, config, "old class " + std::to_string(c) + " not a channel");
    is_old[static_cast<size_t>(c)] = 1;
    any_old = true;
  }
  if (!any_old) is_old[kBackground] = 1; // no previous task: plain CE
  is_old[kBackground] = 1;               // background always aggregates with old classes

  LossResult res;
  if (with_grad) res.grad = Tensor(logits.shape());
  double total = 0.0;
  int64_t support = 0;
  std::vector<double> q;
  for (int i = 0; i < b; ++i) {
    const double* lb = logits.data() + static_cast<int64_t>(i) * ch * plane;
    const int32_t* yb = labels.data() + static_cast<int64_t>(i) * plane;
    double* gb = with_grad ? res.grad.data() + static_cast<int64_t>(i) * ch * plane : nullptr;
    for (int64_t j = 0; j < plane; ++j) {
      const int y = yb[j];
      if (y == ignore_id) continue;
      CISS_CHECK(y >= 0 && y < ch, invalid_sample,
                 "label " + std::to_string(y) + " outside the model's channels");
      subset_softmax(lb + j, plane, nullptr, ch, q);
      ++support;
      if (y == kBackground) {
        double qhat = 0.0;
        for (int c = 0; c < ch; ++c)
          if (is_old[static_cast<size_t>(c)]) qhat += q[static_cast<size_t>(c)];
        total += -std::log(std::max(qhat, 1e-300));
        if (gb) {
          const double inv = 1.0 / std::max(qhat, 1e-300);
          for (int c = 0; c < ch; ++c) {
            const double qc = q[static_cast<size_t>(c)];
            gb[static_cast<int64_t>(c) * plane + j] =
                qc - (is_old[static_cast<size_t>(c)] ? qc * inv : 0.0);
          }
        }
      } else {
        total += -std::log(std::max(q[static_cast<size_t>(y)], 1e-300));
        if (gb)
          for (int c = 0; c < ch; ++c)
            gb[static_cast<int64_t>(c) * plane + j] =
                q[static_cast<size_t>(c)] - (c == y ? 1.0 : 0.0);
      }
    }
  }
  res.support = support;
  if (support == 0) {
    res.empty_support = true;
    return res;
  }
  res.value = total / static_cast<double>(support);
  if (with_grad) {
    const double s = 1.0 / static_cast<double>(support);
    for (int64_t i = 0; i < res.grad.size(); ++i) res.grad[i] *= s;
  }
  return res;
}

LossResult masked_distillation(const Tensor& new_logits, const Tensor& old_logits,
                               const IntTensor& labels, double temperature, int background_id,
                               bool with_grad) {
  check_batch_shapes(new_logits, labels);
  CISS_CHECK(old_logits.ndim() == 4, shape, "old logits must be NCHW");
  const int b = new_logits.dim(0), cn = new_logits.dim(1), co = old_logits.dim(1);
  CISS_CHECK(co <= cn, shape,
             "teacher has " + std::to_string(co) + " channels, student only " +
                 std::to_string(cn));
  CISS_CHECK(old_logits.dim(0) == b && old_logits.dim(2) == new_logits.dim(2) &&
                 old_logits.dim(3) == new_logits.dim(3),
             shape, "teacher/student spatial mismatch");
  CISS_CHECK(temperature > 0.0, config, "temperature must be positive");

  const int64_t plane = static_cast<int64_t>(new_logits.dim(2)) * new_logits.dim(3);
  std::vector<int> old_subset(static_cast<size_t>(co));
  for (int c = 0; c < co; ++c) old_subset[static_cast<size_t>(c)] = c;

  LossResult res;
  if (with_grad) res.grad = Tensor(new_logits.shape());
  double total = 0.0;
  int64_t support = 0;
  const double t2 = temperature * temperature;

  // scale logits by 1/T via a scratch copy per pixel
  std::vector<double> p, q, zt(static_cast<size_t>(co)), zs(static_cast<size_t>(co));
  for (int i = 0; i < b; ++i) {
    const double* nl = new_logits.data() + static_cast<int64_t>(i) * cn * plane;
    const double* ol = old_logits.data() + static_cast<int64_t>(i) * co * plane;
    const int32_t* yb = labels.data() + static_cast<int64_t>(i) * plane;
    double* gb = with_grad ? res.grad.data() + static_cast<int64_t>(i) * cn * plane : nullptr;
    for (int64_t j = 0; j < plane; ++j) {
      if (yb[j] != background_id) continue;
      for (int c = 0; c < co; ++c) {
        zt[static_cast<size_t>(c)] = ol[static_cast<int64_t>(c) * plane + j] / temperature;
        zs[static_cast<size_t>(c)] = nl[static_cast<int64_t>(c) * plane + j] / temperature;
      }
      subset_softmax(zt.data(), 1, nullptr, co, p);
      subset_softmax(zs.data(), 1, nullptr, co, q);
      double px = 0.0;
      for (int c = 0; c < co; ++c)
        px += p[static_cast<size_t>(c)] *
              -std::log(std::max(q[static_cast<size_t>(c)], 1e-300));
      total += px;
      ++support;
      if (gb)
        for (int c = 0; c < co; ++c)
          gb[static_cast<int64_t>(c) * plane + j] =
              (q[static_cast<size_t>(c)] - p[static_cast<size_t>(c)]) / temperature;
    }
  }
  res.support = support;
  if (support == 0) {
    res.empty_support = true;
    return res;
  }
  res.value = t2 * total / static_cast<double>(support);
  if (with_grad) {
    const double s = t2 / static_cast<double>(support);
    for (int64_t i = 0; i < res.grad.size(); ++i) res.grad[i] *= s;
  }
  return res;
}

} // namespace ciss
