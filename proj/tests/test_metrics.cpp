#include <doctest.h>

#include <filesystem>

#include "ciss/metrics.hpp"
#include "ciss/rng.hpp"

using namespace ciss;
namespace fs = std::filesystem;

namespace {

// independent brute-force mIoU: per-pixel set intersection / union counts
double brute_force_miou(const IntTensor& truth, const IntTensor& pred,
                        const std::vector<int>& classes, int ignore_id) {
  double sum = 0.0;
  int defined = 0;
  for (int c : classes) {
    int64_t inter = 0, uni = 0;
    for (int64_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == ignore_id) continue;
      const bool t = truth[i] == c;
      const bool p = pred[i] == c;
      inter += t && p;
      uni += t || p;
    }
    if (uni == 0) continue;
    sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++defined;
  }
  return defined > 0 ? sum / defined : 0.0;
}

} // namespace

TEST_CASE("confusion: hand tally of a 3-pixel toy") {
  ConfusionMatrix cm(2);
  IntTensor truth({1, 3});
  truth[0] = 0;
  truth[1] = 1;
  truth[2] = 1;
  IntTensor pred({1, 3});
  pred[0] = 0;
  pred[1] = 1;
  pred[2] = 0;
  cm.add(truth, pred, 255);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(1, 1) == 1);
  CHECK(cm.at(1, 0) == 1);
  CHECK(cm.at(0, 1) == 0);
  CHECK(cm.total() == 3);
}

TEST_CASE("confusion: ignored pixels contribute to no cell") {
  ConfusionMatrix cm(3);
  IntTensor truth({1, 4});
  truth[0] = 255;
  truth[1] = 2;
  truth[2] = 255;
  truth[3] = 1;
  IntTensor pred({1, 4});
  pred[0] = 0;
  pred[1] = 2;
  pred[2] = 1;
  pred[3] = 1;
  cm.add(truth, pred, 255);
  CHECK(cm.total() == 2);
}

TEST_CASE("miou: hand case 7/12") {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 2;
  cm.at(1, 0) = 1;
  cm.at(1, 1) = 1;
  const MiouResult r = miou(cm, {0, 1});
  CHECK(r.per_class[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(r.per_class[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(7.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("miou: diagonal matrix scores 1") {
  ConfusionMatrix cm(3);
  for (int c = 0; c < 3; ++c) cm.at(c, c) = 5;
  CHECK(miou(cm, {0, 1, 2}).value == 1.0);
}

TEST_CASE("miou: absent classes are excluded from the mean") {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 4;
  cm.at(1, 1) = 4;
  const MiouResult r = miou(cm, {0, 1, 2});
  CHECK(r.value == 1.0);
  CHECK(r.class_defined[2] == 0);
}

TEST_CASE("miou: fully absent subset is flagged undefined, not NaN") {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 4;
  const MiouResult r = miou(cm, {1, 2});
  CHECK_FALSE(r.defined);
  CHECK(r.value == 0.0);
}

TEST_CASE("miou equals brute-force per-pixel computation on random label maps") {
  Rng rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 2 + static_cast<int>(rng.uniform_int(15));
    const int w = 2 + static_cast<int>(rng.uniform_int(15));
    const int num_classes = 2 + static_cast<int>(rng.uniform_int(4));
    IntTensor truth({1, h, w}), pred({1, h, w});
    for (int64_t i = 0; i < truth.size(); ++i) {
      truth[i] = rng.uniform01() < 0.08 ? 255
                                        : static_cast<int>(rng.uniform_int(num_classes));
      pred[i] = static_cast<int>(rng.uniform_int(num_classes));
    }
    ConfusionMatrix cm(num_classes);
    cm.add(truth, pred, 255);
    std::vector<int> classes;
    for (int c = 0; c < num_classes; ++c) classes.push_back(c);

    // the confusion path and the brute-force path must agree exactly
    IntTensor t2({h, w}), p2({h, w});
    std::copy(truth.data(), truth.data() + truth.size(), t2.data());
    std::copy(pred.data(), pred.data() + pred.size(), p2.data());
    CHECK(miou(cm, classes).value == brute_force_miou(t2, p2, classes, 255));
  }
}

TEST_CASE("confusion matrix total equals non-ignored pixel count") {
  Rng rng(72);
  IntTensor truth({2, 9, 9}), pred({2, 9, 9});
  int64_t expected = 0;
  for (int64_t i = 0; i < truth.size(); ++i) {
    truth[i] = rng.uniform01() < 0.2 ? 255 : static_cast<int>(rng.uniform_int(4));
    pred[i] = static_cast<int>(rng.uniform_int(4));
    if (truth[i] != 255) ++expected;
  }
  ConfusionMatrix cm(4);
  cm.add(truth, pred, 255);
  CHECK(cm.total() == expected);
}

TEST_CASE("confusion csv round-trip") {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 10;
  cm.at(0, 2) = 3;
  cm.at(2, 1) = 7;
  const fs::path path = fs::temp_directory_path() / "ciss_test_confusion.csv";
  cm.to_csv(path, {"background", "a", "b"});
  const ConfusionMatrix back = ConfusionMatrix::from_csv(path);
  CHECK(back.num_classes() == 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(back.at(i, j) == cm.at(i, j));
  fs::remove(path);
}

TEST_CASE("prediction_fraction: background absorption probe") {
  ConfusionMatrix cm(3);
  cm.at(1, 0) = 30; // class 1 predicted background
  cm.at(1, 1) = 10;
  cm.at(2, 0) = 0;
  cm.at(2, 2) = 20;
  CHECK(prediction_fraction(cm, {1, 2}, 0) == doctest::Approx(0.5)); // 30 of 60
}
