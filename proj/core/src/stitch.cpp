#include "ciss/stitch.hpp"

#include "ciss/error.hpp"

namespace ciss {

using nlohmann::json;

json StitchReport::to_json() const {
  json j;
  j["relative_miou"] = relative_miou;
  if (!cka.empty()) j["cka"] = cka;
  j["baseline_miou"] = baseline_miou;
  j["encoder_end"] = encoder_end;
  return j;
}

namespace {

void check_same_architecture(const LayerTapModel& f1, const LayerTapModel& f0) {
  if (f1.num_blocks() != f0.num_blocks()) {
    raise(ErrorKind::stitch_incompatible,
          "stitch: block counts differ (" + std::to_string(f1.num_blocks()) + " vs " +
              std::to_string(f0.num_blocks()) + ")");
  }
  // heads may differ in class count; every other tap must agree
  for (int i = 0; i + 1 < f1.num_blocks(); ++i) {
    if (f1.block(i).output_chw != f0.block(i).output_chw) {
      raise(ErrorKind::stitch_incompatible,
            "stitch: activation shapes differ at block " + std::to_string(i));
    }
  }
}

} // namespace

double stitch_evaluate(LayerTapModel& f1, LayerTapModel& f0, int n,
                       const std::vector<SegSample>& task0_test,
                       const std::vector<int>& eval_classes, const ClassCatalog& catalog,
                       double baseline_miou, int batch_size) {
  check_same_architecture(f1, f0);
  CISS_CHECK(n >= 0 && n < f1.num_blocks(), config, "stitch cut index out of range");
  CISS_CHECK(baseline_miou > 0.0, config, "stitch baseline mIoU must be positive");

  ConfusionMatrix cm(catalog.num_classes);
  const int h = task0_test.at(0).height(), w = task0_test.at(0).width();
  for (size_t start = 0; start < task0_test.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(task0_test.size(), start + static_cast<size_t>(batch_size));
    const int b = static_cast<int>(end - start);
    Tensor x({b, 3, h, w});
    IntTensor y({b, h, w});
    for (int i = 0; i < b; ++i) {
      const SegSample& s = task0_test[start + static_cast<size_t>(i)];
      std::copy(s.image.data(), s.image.data() + s.image.size(),
                x.data() + static_cast<int64_t>(i) * 3 * h * w);
      std::copy(s.label.data(), s.label.data() + s.label.size(),
                y.data() + static_cast<int64_t>(i) * h * w);
    }
    const Tensor act = f1.forward_prefix(x, n, /*train=*/false);
    const Tensor logits = f0.forward_suffix(act, n, /*train=*/false);
    cm.add(y, argmax_channels(logits), catalog.ignore_id);
  }
  const MiouResult r = miou(cm, eval_classes);
  return 100.0 * r.value / baseline_miou;
}

StitchReport stitch_profile(LayerTapModel& f1, LayerTapModel& f0,
                            const std::vector<SegSample>& task0_test,
                            const std::vector<int>& eval_classes, const ClassCatalog& catalog,
                            int batch_size) {
  check_same_architecture(f1, f0);
  StitchReport report;
  report.encoder_end = f0.encoder_end();

  const ConfusionMatrix base_cm = confusion_matrix(f0, task0_test, catalog, batch_size);
  const MiouResult base = miou(base_cm, eval_classes);
  CISS_CHECK(base.defined && base.value > 0.0, config,
             "stitch baseline mIoU is zero; f0 predicts none of the evaluated classes");
  report.baseline_miou = base.value;

  for (int n = 0; n < f1.num_blocks(); ++n)
    report.relative_miou.push_back(
        stitch_evaluate(f1, f0, n, task0_test, eval_classes, catalog, base.value, batch_size));
  return report;
}

} // namespace ciss
