#include <doctest.h>

#include <cmath>

#include "ciss/layers.hpp"
#include "ciss/losses.hpp"
#include "ciss/model.hpp"
#include "ciss/parallel.hpp"

#include "helpers.hpp"

using namespace ciss;
using namespace ciss::test;

TEST_CASE("conv2d: matches direct convolution on a hand case") {
  Rng rng(1);
  Conv2d conv(1, 1, 3, 1, 1, true, rng);
  // identity-ish kernel: centre 2.0, bias 0.5
  conv.weight.zero();
  conv.weight[4] = 2.0;
  conv.bias[0] = 0.5;
  Tensor x({1, 1, 2, 2});
  x[0] = 1.0;
  x[1] = -2.0;
  x[2] = 3.0;
  x[3] = 0.25;
  const Tensor y = conv.forward(x, false);
  CHECK(y[0] == doctest::Approx(2.5));
  CHECK(y[1] == doctest::Approx(-3.5));
  CHECK(y[2] == doctest::Approx(6.5));
  CHECK(y[3] == doctest::Approx(1.0));
}

TEST_CASE("conv2d: stride-2 output geometry") {
  Rng rng(2);
  Conv2d conv(3, 5, 3, 2, 1, false, rng);
  Tensor x({2, 3, 16, 16});
  const Tensor y = conv.forward(x, false);
  CHECK(y.shape() == std::vector<int>{2, 5, 8, 8});
}

TEST_CASE("conv2d: channel mismatch raises a shape error") {
  Rng rng(3);
  Conv2d conv(3, 4, 3, 1, 1, false, rng);
  Tensor x({1, 2, 8, 8});
  CHECK_THROWS_AS((void)conv.forward(x, false), Error);
}

TEST_CASE("batchnorm: train-mode output is normalized per channel") {
  BatchNorm2d bn(2);
  Rng rng(4);
  Tensor x = random_tensor({4, 2, 6, 6}, rng, -3, 5);
  const Tensor y = bn.forward(x, true);
  for (int c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    int64_t n = 0;
    for (int b = 0; b < 4; ++b)
      for (int p = 0; p < 36; ++p) {
        const double v = y[(static_cast<int64_t>(b) * 2 + c) * 36 + p];
        sum += v;
        sq += v * v;
        ++n;
      }
    const double mean = sum / n;
    CHECK(std::fabs(mean) < 1e-10);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(1e-3)); // biased variance + eps
  }
}

TEST_CASE("batchnorm: eval mode uses running statistics and is state-free") {
  BatchNorm2d bn(2);
  Rng rng(5);
  Tensor x = random_tensor({4, 2, 6, 6}, rng, -1, 1);
  (void)bn.forward(x, true);
  const Tensor rm = bn.running_mean;
  const Tensor rv = bn.running_var;
  const Tensor y1 = bn.forward(x, false);
  const Tensor y2 = bn.forward(x, false);
  CHECK(bit_equal(y1, y2));
  CHECK(bit_equal(rm, bn.running_mean)); // eval did not move the stats
  CHECK(bit_equal(rv, bn.running_var));
}

TEST_CASE("upsample2x: forward replicates, backward sums the 2x2 cells") {
  Upsample2x up;
  Tensor x({1, 1, 2, 2});
  for (int i = 0; i < 4; ++i) x[i] = i + 1;
  const Tensor y = up.forward(x, true);
  CHECK(y.shape() == std::vector<int>{1, 1, 4, 4});
  CHECK(y.at(0, 0, 0, 0) == 1.0);
  CHECK(y.at(0, 0, 0, 1) == 1.0);
  CHECK(y.at(0, 0, 1, 1) == 1.0);
  CHECK(y.at(0, 0, 2, 3) == 4.0);
  Tensor dy(y.shape());
  dy.fill(1.0);
  const Tensor dx = up.backward(dy);
  for (int i = 0; i < 4; ++i) CHECK(dx[i] == 4.0);
}

TEST_CASE("layer backward passes match finite differences") {
  // end-to-end through conv+bn+relu chains and both head kinds
  for (HeadKind head : {HeadKind::standard, HeadKind::weight_normalized}) {
    CAPTURE(to_string(head));
    Rng rng(31);
    LayerTapModel model = make_toy_net(2, 3, 6, rng, head);
    Rng drng(32);
    const Tensor x = random_tensor({2, 3, 6, 6}, drng);
    const IntTensor y = random_labels({2, 6, 6}, 3, drng);

    model.zero_grad();
    Tensor logits = model.forward(x, true);
    LossResult r = cross_entropy(logits, y, 255);
    model.backward(r.grad);
    auto scalar = [&] { return cross_entropy(model.forward(x, true), y, 255, false).value; };
    const auto check = finite_difference_check(model, scalar);
    INFO("checked " << check.checked << " parameters");
    CHECK(check.max_rel_err < 1e-4);
  }
}

TEST_CASE("forward and backward are bit-identical across thread counts") {
  Rng rng(41);
  MinisegConfig cfg;
  cfg.input_height = 16;
  cfg.input_width = 16;
  cfg.num_classes = 4;
  cfg.width0 = 4;
  cfg.width1 = 6;
  cfg.width2 = 8;
  LayerTapModel m1 = make_miniseg(cfg, rng);
  LayerTapModel m2 = m1.clone();
  Rng drng(42);
  const Tensor x = random_tensor({5, 3, 16, 16}, drng);
  const IntTensor y = random_labels({5, 16, 16}, 4, drng);

  auto run = [&](LayerTapModel& m, int threads) {
    set_num_threads(threads);
    m.zero_grad();
    Tensor logits = m.forward(x, true);
    LossResult r = cross_entropy(logits, y, 255);
    m.backward(r.grad);
    set_num_threads(1);
    return logits;
  };
  const Tensor l1 = run(m1, 1);
  const Tensor l2 = run(m2, 4);
  CHECK(bit_equal(l1, l2));
  auto p1 = m1.parameters();
  auto p2 = m2.parameters();
  for (size_t i = 0; i < p1.size(); ++i) {
    if (!p1[i].grad) continue;
    CHECK(bit_equal(*p1[i].grad, *p2[i].grad));
  }
}
