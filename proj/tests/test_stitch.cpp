#include <doctest.h>

#include "ciss/stitch.hpp"

#include "helpers.hpp"

using namespace ciss;
using namespace ciss::test;

namespace {

LayerTapModel small_miniseg(uint64_t seed) {
  Rng rng(seed);
  MinisegConfig cfg;
  cfg.input_height = 16;
  cfg.input_width = 16;
  cfg.num_classes = 3;
  cfg.width0 = 4;
  cfg.width1 = 6;
  cfg.width2 = 8;
  LayerTapModel m = make_miniseg(cfg, rng);
  // bias towards background so an untrained net still has nonzero mIoU
  m.head().bias[0] = 1.0;
  return m;
}

std::vector<SegSample> toy_test_set(int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<SegSample> out;
  for (int i = 0; i < n; ++i) {
    SegSample s;
    s.image = random_tensor({3, 16, 16}, rng);
    s.label = IntTensor({16, 16});
    // a small class-1 square on background, plus a class-2 stripe
    for (int y = 4; y < 8; ++y)
      for (int x = 4; x < 8; ++x) s.label.at(y, x) = 1;
    for (int x = 10; x < 14; ++x) s.label.at(12, x) = 2;
    out.push_back(std::move(s));
  }
  return out;
}

ClassCatalog catalog3() {
  ClassCatalog c;
  c.num_classes = 3;
  return c;
}

} // namespace

TEST_CASE("stitch: (f0, f0) profile is flat at exactly 100 percent") {
  LayerTapModel f0 = small_miniseg(1);
  const auto test_set = toy_test_set(4, 2);
  const StitchReport report =
      stitch_profile(f0, f0, test_set, {0, 1, 2}, catalog3());
  CHECK(report.relative_miou.size() == static_cast<size_t>(f0.num_blocks()));
  for (double v : report.relative_miou) CHECK(v == 100.0);
}

TEST_CASE("stitch: decoder-only modifications keep all encoder cuts at 100 percent") {
  LayerTapModel f0 = small_miniseg(3);
  LayerTapModel f1 = f0.clone();
  Rng noise(4);
  for (ParamRef& p : f1.parameters()) {
    if (p.name >= std::string("block08") && p.trainable)
      for (int64_t i = 0; i < p.value->size(); ++i) (*p.value)[i] += noise.normal(0.0, 0.3);
  }
  const auto test_set = toy_test_set(4, 5);
  const StitchReport report = stitch_profile(f1, f0, test_set, {0, 1, 2}, catalog3());
  for (int n = 0; n < f0.encoder_end(); ++n) CHECK(report.relative_miou[static_cast<size_t>(n)] == 100.0);
}

TEST_CASE("stitch: cut at the last index evaluates f1's own predictions") {
  LayerTapModel f0 = small_miniseg(6);
  LayerTapModel f1 = f0.clone();
  f1.head().bias[2] += 2.5; // push f1 towards class 2
  const auto test_set = toy_test_set(4, 7);
  const ClassCatalog cat = catalog3();

  const ConfusionMatrix cm0 = confusion_matrix(f0, test_set, cat);
  const double baseline = miou(cm0, {0, 1, 2}).value;
  const double rel =
      stitch_evaluate(f1, f0, f0.num_blocks() - 1, test_set, {0, 1, 2}, cat, baseline);

  const ConfusionMatrix cm1 = confusion_matrix(f1, test_set, cat);
  const double expected = 100.0 * miou(cm1, {0, 1, 2}).value / baseline;
  CHECK(rel == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("stitch: architecture mismatch raises a stitch-incompatibility error") {
  LayerTapModel f0 = small_miniseg(8);
  Rng rng(9);
  MinisegConfig other;
  other.input_height = 16;
  other.input_width = 16;
  other.num_classes = 3;
  other.width0 = 6; // different widths
  other.width1 = 6;
  other.width2 = 8;
  LayerTapModel f1 = make_miniseg(other, rng);
  const auto test_set = toy_test_set(2, 10);
  try {
    (void)stitch_profile(f1, f0, test_set, {0, 1, 2}, catalog3());
    FAIL("expected stitch-incompatibility");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::stitch_incompatible);
  }
}
