#include "ciss/cka.hpp"

#include <algorithm>

#include "ciss/error.hpp"
#include "ciss/rng.hpp"

namespace ciss {

CkaResult linear_cka(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  CISS_CHECK(x.rows() == y.rows(), shape, "cka: row (sample) counts differ");
  CISS_CHECK(x.rows() >= 2, shape, "cka: need at least two samples");
  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd yc = y.rowwise() - y.colwise().mean();

  const double cross = (yc.transpose() * xc).squaredNorm();
  const double nx = (xc.transpose() * xc).norm();
  const double ny = (yc.transpose() * yc).norm();

  CkaResult res;
  if (nx == 0.0 || ny == 0.0) return res; // zero variance: undefined
  res.value = cross / (nx * ny);
  res.defined = true;
  return res;
}

namespace {

// k distinct values from [0, n), sorted; Floyd's algorithm keeps the draw
// count independent of n.
std::vector<int64_t> sample_distinct(int64_t n, int64_t k, Rng& rng) {
  std::vector<int64_t> out;
  if (k >= n) {
    out.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = i;
    return out;
  }
  std::vector<int64_t> chosen;
  chosen.reserve(static_cast<size_t>(k));
  for (int64_t j = n - k; j < n; ++j) {
    const int64_t t = rng.uniform_int(j + 1);
    if (std::find(chosen.begin(), chosen.end(), t) == chosen.end())
      chosen.push_back(t);
    else
      chosen.push_back(j);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

} // namespace

std::vector<CkaResult> cka_profile(LayerTapModel& f0, LayerTapModel& f1,
                                   const std::vector<SegSample>& probe_data,
                                   const CkaProfileOptions& options) {
  CISS_CHECK(f0.num_blocks() == f1.num_blocks(), stitch_incompatible,
             "cka: architectures differ in block count");
  CISS_CHECK(!probe_data.empty(), empty_dataset, "cka: no probe data");
  const int blocks = f0.num_blocks();
  const int n_images = static_cast<int>(probe_data.size());
  const int h = probe_data[0].height(), w = probe_data[0].width();

  // per-layer sampled (image, pixel) positions, identical for both models
  const int64_t want =
      std::min<int64_t>(options.positions, options.max_positions);
  std::vector<std::vector<int64_t>> rows(static_cast<size_t>(blocks));
  std::vector<Eigen::MatrixXd> acts0(static_cast<size_t>(blocks)),
      acts1(static_cast<size_t>(blocks));
  for (int l = 0; l < blocks; ++l) {
    const std::vector<int>& chw = f0.block(l).output_chw;
    CISS_CHECK(chw[1] == f1.block(l).output_chw[1] && chw[2] == f1.block(l).output_chw[2],
               stitch_incompatible, "cka: spatial dims differ at block " + std::to_string(l));
    const int64_t plane = static_cast<int64_t>(chw[1]) * chw[2];
    Rng rng(options.seed ^ (0x517cc1b727220a95ULL * static_cast<uint64_t>(l + 1)));
    rows[static_cast<size_t>(l)] = sample_distinct(n_images * plane, want, rng);
    const auto n_rows = static_cast<int64_t>(rows[static_cast<size_t>(l)].size());
    // channel counts may differ at the head; CKA handles unequal widths
    acts0[static_cast<size_t>(l)] = Eigen::MatrixXd(n_rows, chw[0]);
    acts1[static_cast<size_t>(l)] = Eigen::MatrixXd(n_rows, f1.block(l).output_chw[0]);
  }

  auto collect = [&](LayerTapModel& model, std::vector<Eigen::MatrixXd>& acts) {
    for (size_t start = 0; start < probe_data.size();
         start += static_cast<size_t>(options.batch_size)) {
      const size_t end =
          std::min(probe_data.size(), start + static_cast<size_t>(options.batch_size));
      const int b = static_cast<int>(end - start);
      Tensor x({b, 3, h, w});
      for (int i = 0; i < b; ++i) {
        const SegSample& s = probe_data[start + static_cast<size_t>(i)];
        std::copy(s.image.data(), s.image.data() + s.image.size(),
                  x.data() + static_cast<int64_t>(i) * 3 * h * w);
      }
      Tensor a = x;
      for (int l = 0; l < blocks; ++l) {
        a = model.block(l).forward(a, /*train=*/false);
        const int ch = a.dim(1);
        const int64_t plane = static_cast<int64_t>(a.dim(2)) * a.dim(3);
        const int64_t lo = static_cast<int64_t>(start) * plane;
        const int64_t hi = static_cast<int64_t>(end) * plane;
        const std::vector<int64_t>& sel = rows[static_cast<size_t>(l)];
        // sel is sorted; find the slice belonging to this batch
        auto it = std::lower_bound(sel.begin(), sel.end(), lo);
        for (; it != sel.end() && *it < hi; ++it) {
          const int64_t local = *it - lo;
          const int64_t img = local / plane;
          const int64_t pix = local % plane;
          const int64_t row = it - sel.begin();
          for (int c = 0; c < ch; ++c)
            acts[static_cast<size_t>(l)](row, c) =
                a[(img * ch + c) * plane + pix];
        }
      }
    }
  };
  collect(f0, acts0);
  collect(f1, acts1);

  std::vector<CkaResult> profile;
  profile.reserve(static_cast<size_t>(blocks));
  for (int l = 0; l < blocks; ++l)
    profile.push_back(
        linear_cka(acts0[static_cast<size_t>(l)], acts1[static_cast<size_t>(l)]));
  return profile;
}

} // namespace ciss
