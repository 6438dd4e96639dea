/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cleartts/core/rng.hpp"
#include "cleartts/nn/ssim.hpp"

using namespace cleartts;
using namespace cleartts::nn;
using core::Rng;
using core::Tensor;

namespace {

const double kFloor = std::log(1e-5);
const double kCeil = std::log(1e3);

// Mel-domain tensor whose normalized value is `unit` in [0, 1].
Tensor const_mel(int T, int M, double unit) {
  return Tensor::full({T, M}, kFloor + unit * (kCeil - kFloor));
}

Tensor random_mel(int T, int M, Rng& rng) {
  Tensor t({T, M});
  for (auto& x : t.v) x = rng.uniform(kFloor, kCeil * 0.2);
  return t;
}

}  // namespace

TEST_CASE("mssim of identical inputs is zero", "[ssim]") {
  Rng rng(41);
  auto a = random_mel(9, 12, rng);
  CHECK(mssim_loss_value(a, a, kFloor, kCeil) <= 1e-6);
  auto c = const_mel(6, 8, 0.0);
  CHECK(mssim_loss_value(c, c, kFloor, kCeil) <= 1e-6);
}

TEST_CASE("mssim constant-image closed form", "[ssim]") {
  const SsimConfig cfg;
  for (double c2v : {0.25, 0.6, 1.0}) {
    const double c1v = 0.0;
    auto a = const_mel(7, 9, c1v);
    auto b = const_mel(7, 9, c2v);
    const double ssim =
        (2.0 * c1v * c2v + cfg.c1) / (c1v * c1v + c2v * c2v + cfg.c1);
    CHECK_THAT(mssim_loss_value(a, b, kFloor, kCeil),
               Catch::Matchers::WithinAbs(1.0 - ssim, 1e-6));
  }
  // c1 = 0, c2 = 1 specializes to C1 / (1 + C1).
  auto lo = const_mel(5, 5, 0.0);
  auto hi = const_mel(5, 5, 1.0);
  CHECK_THAT(mssim_loss_value(lo, hi, kFloor, kCeil),
             Catch::Matchers::WithinAbs(1.0 - cfg.c1 / (1.0 + cfg.c1), 1e-6));
}

TEST_CASE("mssim symmetry and range", "[ssim]") {
  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_mel(8, 10, rng);
    auto b = random_mel(8, 10, rng);
    const double ab = mssim_loss_value(a, b, kFloor, kCeil);
    const double ba = mssim_loss_value(b, a, kFloor, kCeil);
    CHECK_THAT(ab, Catch::Matchers::WithinAbs(ba, 1e-6));
    CHECK(ab >= 0.0);
    CHECK(ab <= 2.0);
  }
}

TEST_CASE("mssim handles single-frame inputs", "[ssim]") {
  auto a = const_mel(1, 80, 0.3);
  CHECK(mssim_loss_value(a, a, kFloor, kCeil) <= 1e-6);
}

TEST_CASE("mssim shape mismatch is rejected", "[ssim]") {
  auto a = const_mel(4, 8, 0.2);
  auto b = const_mel(5, 8, 0.2);
  CHECK_THROWS_AS(mssim_loss_value(a, b, kFloor, kCeil), InvalidInputError);
}

TEST_CASE("mssim gradient matches finite differences", "[ssim]") {
  Rng rng(43);
  auto pred = random_mel(5, 6, rng);
  auto target = random_mel(5, 6, rng);

  Tape tape;
  V leaf = tape.leaf(pred, true);
  V tleaf = tape.leaf(target, false);
  tape.backward(mssim_loss(tape, leaf, tleaf, kFloor, kCeil));
  const Tensor& analytic = tape.grad(leaf);

  for (std::size_t j = 0; j < pred.v.size(); j += 7) {
    auto probe = pred;
    probe.v[j] += 1e-3;
    const double up = mssim_loss_value(probe, target, kFloor, kCeil);
    probe.v[j] -= 2e-3;
    const double down = mssim_loss_value(probe, target, kFloor, kCeil);
    const double fd = (up - down) / 2e-3;
    CHECK(std::fabs(fd - analytic.v[j]) <=
          1e-4 * std::max({std::fabs(fd), std::fabs(analytic.v[j]), 1.0}));
  }
}
