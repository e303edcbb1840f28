#include <doctest.h>

#include <cmath>

#include "ciss/optim.hpp"

#include "helpers.hpp"

using namespace ciss;
using namespace ciss::test;

TEST_CASE("plateau: constant validation loss for 9 epochs halves the lr exactly once") {
  PlateauScheduler plateau(8, 0.5);
  double lr = 0.07;
  int halvings = 0;
  for (int epoch = 0; epoch < 9; ++epoch) {
    const double mult = plateau.observe(1.0);
    if (mult != 1.0) ++halvings;
    lr *= mult;
  }
  CHECK(halvings == 1);
  CHECK(lr == doctest::Approx(0.035));
}

TEST_CASE("plateau: improvements reset the stall counter") {
  PlateauScheduler plateau(3, 0.5);
  CHECK(plateau.observe(1.0) == 1.0);
  CHECK(plateau.observe(1.0) == 1.0);
  CHECK(plateau.observe(0.9) == 1.0); // improvement resets
  CHECK(plateau.observe(0.95) == 1.0);
  CHECK(plateau.observe(0.95) == 1.0);
  CHECK(plateau.observe(0.95) == 0.5); // third consecutive stall
}

TEST_CASE("cosine schedule: starts at lr0 and decays towards zero") {
  CHECK(cosine_lr(0.07, 0, 30) == doctest::Approx(0.07));
  CHECK(cosine_lr(0.07, 15, 30) == doctest::Approx(0.035));
  CHECK(cosine_lr(0.07, 29, 30) < 0.001);
}

TEST_CASE("sgd: single step matches the hand update") {
  Tensor w({1});
  w[0] = 1.0;
  Tensor g({1});
  g[0] = 0.5;
  std::vector<ParamRef> params{{"w", &w, &g, true}};
  SgdOptimizer opt(0.1, 0.9, 0.0);
  opt.step(params);
  // v = 0.5, w = 1 - 0.1*0.5
  CHECK(w[0] == doctest::Approx(0.95));
  opt.step(params);
  // v = 0.9*0.5 + 0.5 = 0.95, w = 0.95 - 0.095
  CHECK(w[0] == doctest::Approx(0.855));
}

TEST_CASE("sgd: weight decay adds wd*theta to the gradient") {
  Tensor w({1});
  w[0] = 2.0;
  Tensor g({1});
  g[0] = 0.0;
  std::vector<ParamRef> params{{"w", &w, &g, true}};
  SgdOptimizer opt(0.1, 0.0, 0.01);
  opt.step(params);
  CHECK(w[0] == doctest::Approx(2.0 - 0.1 * 0.01 * 2.0));
}

TEST_CASE("sgd: non-trainable parameters are never updated") {
  Tensor w({1});
  w[0] = 3.0;
  Tensor g({1});
  g[0] = 10.0;
  std::vector<ParamRef> params{{"w", &w, &g, false}};
  SgdOptimizer opt(0.1, 0.9, 0.0);
  opt.step(params);
  CHECK(w[0] == 3.0);
}

TEST_CASE("grad clip: rescales only when above the threshold") {
  Tensor g({2});
  g[0] = 3.0;
  g[1] = 4.0; // norm 5
  Tensor w({2});
  std::vector<ParamRef> params{{"w", &w, &g, true}};
  const double norm = clip_grad_norm(params, 10.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(g[0] == 3.0);

  const double norm2 = clip_grad_norm(params, 1.0);
  CHECK(norm2 == doctest::Approx(5.0));
  CHECK(std::sqrt(g[0] * g[0] + g[1] * g[1]) == doctest::Approx(1.0));
}
