#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "ciss/metrics.hpp"
#include "ciss/model.hpp"

namespace ciss {

// Per-cut-index relative mIoU of the hybrid network that runs f1's blocks
// through index n and f0's blocks from n+1 on, evaluated on first-task data.
// 100 means the cut is indistinguishable from f0.
struct StitchReport {
  std::vector<double> relative_miou; // one entry per cut index 0..L-1
  std::vector<double> cka;           // optional per-cut CKA, empty if not computed
  double baseline_miou = 0.0;        // f0's own first-task mIoU, re-measured
  int encoder_end = 0;

  nlohmann::json to_json() const;
};

// mIoU over eval_classes of f1-prefix |> f0-suffix at cut n, as a percentage
// of baseline_miou. The cut at the last index evaluates f1's own predictions
// against first-task truth.
double stitch_evaluate(LayerTapModel& f1, LayerTapModel& f0, int n,
                       const std::vector<SegSample>& task0_test,
                       const std::vector<int>& eval_classes, const ClassCatalog& catalog,
                       double baseline_miou, int batch_size = 8);

StitchReport stitch_profile(LayerTapModel& f1, LayerTapModel& f0,
                            const std::vector<SegSample>& task0_test,
                            const std::vector<int>& eval_classes, const ClassCatalog& catalog,
                            int batch_size = 8);

} // namespace ciss
