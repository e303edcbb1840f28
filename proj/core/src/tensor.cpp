#include "ciss/tensor.hpp"

#include <cmath>

namespace ciss {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  CISS_CHECK(a.same_shape(b), shape,
             "max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  double m = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(pa[i] - pb[i]));
  return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  const double* pa = a.data();
  const double* pb = b.data();
  for (int64_t i = 0; i < a.size(); ++i)
    if (pa[i] != pb[i]) return false;
  return true;
}

} // namespace ciss
