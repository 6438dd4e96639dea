/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cleartts/core/rng.hpp"
#include "cleartts/nn/ctc.hpp"
#include "cleartts/nn/ops.hpp"

using namespace cleartts;
using namespace cleartts::nn;
using core::Rng;
using core::Tensor;

namespace {

// Brute force: enumerate every length-T symbol path, collapse it, and sum
// the probability of paths matching the target. Independent of the
// recursion it checks.
double ctc_brute_force(const Tensor& logp, const std::vector<int>& target,
                       int blank) {
  const int T = logp.dim(0), C = logp.dim(1);
  double total = 0.0;
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  const auto n_paths = static_cast<long long>(std::pow(C, T));
  for (long long code = 0; code < n_paths; ++code) {
    long long rest = code;
    double p = 1.0;
    for (int t = 0; t < T; ++t) {
      path[static_cast<std::size_t>(t)] = static_cast<int>(rest % C);
      rest /= C;
      p *= std::exp(logp.at(t, path[static_cast<std::size_t>(t)]));
    }
    if (ctc_collapse(path, blank) == target) total += p;
  }
  return total > 0.0 ? -std::log(total) : std::numeric_limits<double>::infinity();
}

Tensor uniform_logp(int T, int C) {
  return Tensor::full({T, C}, -std::log(static_cast<double>(C)));
}

Tensor random_logp(int T, int C, Rng& rng) {
  Tensor raw({T, C});
  for (auto& x : raw.v) x = rng.uniform(-2.0, 2.0);
  // Normalize rows into log distributions.
  for (int t = 0; t < T; ++t) {
    double mx = -1e300;
    for (int c = 0; c < C; ++c) mx = std::max(mx, raw.at(t, c));
    double denom = 0.0;
    for (int c = 0; c < C; ++c) denom += std::exp(raw.at(t, c) - mx);
    const double lse = mx + std::log(denom);
    for (int c = 0; c < C; ++c) raw.at(t, c) -= lse;
  }
  return raw;
}

}  // namespace

TEST_CASE("ctc single-frame and two-frame closed forms", "[ctc]") {
  const int blank = 0;
  // T=1, uniform over {blank, a}, target "a": only path (a), p = 1/2.
  CHECK_THAT(ctc_loss_value(uniform_logp(1, 2), {1}, blank),
             Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
  // T=2: paths (a,-), (-,a), (a,a) give p = 3/4.
  CHECK_THAT(ctc_loss_value(uniform_logp(2, 2), {1}, blank),
             Catch::Matchers::WithinAbs(-std::log(0.75), 1e-12));
  // Empty target: the all-blank path, p = 1/4.
  CHECK_THAT(ctc_loss_value(uniform_logp(2, 2), {}, blank),
             Catch::Matchers::WithinAbs(std::log(4.0), 1e-12));
}

TEST_CASE("ctc unreachable targets yield +infinity", "[ctc]") {
  const int blank = 0;
  CHECK(std::isinf(ctc_loss_value(uniform_logp(1, 3), {1, 2}, blank)));
  // Repeated label needs a separating blank: "aa" needs 3 frames.
  CHECK(std::isinf(ctc_loss_value(uniform_logp(2, 2), {1, 1}, blank)));
  CHECK(ctc_min_frames({1, 1}) == 3);
  CHECK(ctc_min_frames({1, 2}) == 2);
  CHECK(ctc_min_frames({}) == 0);
}

TEST_CASE("ctc input validation", "[ctc]") {
  const auto lp = uniform_logp(3, 3);
  CHECK_THROWS_AS(ctc_loss_value(lp, {3}, 0), InvalidInputError);
  CHECK_THROWS_AS(ctc_loss_value(lp, {0}, 0), InvalidInputError);  // label==blank
  Tape t;
  V leaf = t.leaf(uniform_logp(2, 3), true);
  CHECK_THROWS_AS(ctc_loss(t, leaf, {1, 1}, 0), InvalidInputError);  // unreachable
}

TEST_CASE("ctc recursion equals brute-force path enumeration", "[ctc]") {
  Rng rng(31);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int T = static_cast<int>(rng.uniform_int(1, 6));
    const int V_sz = static_cast<int>(rng.uniform_int(1, 4));
    const int C = V_sz + 1;
    const int L = static_cast<int>(rng.uniform_int(0, 3));
    std::vector<int> target(static_cast<std::size_t>(L));
    for (auto& s : target) s = static_cast<int>(rng.uniform_int(1, V_sz));
    const auto lp = random_logp(T, C, rng);
    const double fast = ctc_loss_value(lp, target, 0);
    const double ref = ctc_brute_force(lp, target, 0);
    if (std::isinf(ref)) {
      CHECK(std::isinf(fast));
    } else {
      CHECK_THAT(fast, Catch::Matchers::WithinAbs(ref, 1e-5));
      ++checked;
    }
  }
  CHECK(checked > 20);  // most random cases should be reachable
}

TEST_CASE("ctc gradient matches finite differences", "[ctc]") {
  Rng rng(32);
  for (int trial = 0; trial < 4; ++trial) {
    const int T = 5, C = 4;
    std::vector<int> target = {1, 2, 1};
    auto lp = random_logp(T, C, rng);

    Tape tape;
    V leaf = tape.leaf(lp, true);
    tape.backward(ctc_loss(tape, leaf, target, 0));
    const Tensor& analytic = tape.grad(leaf);

    for (int i = 0; i < T; ++i)
      for (int c = 0; c < C; ++c) {
        auto probe = lp;
        probe.at(i, c) += 1e-4;
        const double up = ctc_loss_value(probe, target, 0);
        probe.at(i, c) -= 2e-4;
        const double down = ctc_loss_value(probe, target, 0);
        const double fd = (up - down) / 2e-4;
        const double got = analytic.at(i, c);
        CHECK(std::fabs(fd - got) <=
              1e-4 * std::max({std::fabs(fd), std::fabs(got), 1.0}));
      }
  }
}

TEST_CASE("ctc composes with log_softmax for training", "[ctc]") {
  Rng rng(33);
  Tensor raw({4, 3});
  for (auto& x : raw.v) x = rng.uniform(-1.0, 1.0);
  std::vector<int> target = {1, 2};

  Tape tape;
  V leaf = tape.leaf(raw, true);
  V loss = ctc_loss(tape, log_softmax_rows(tape, leaf), target, 0);
  tape.backward(loss);
  const Tensor analytic = tape.grad(leaf);

  for (std::size_t j = 0; j < raw.v.size(); ++j) {
    auto probe = raw;
    probe.v[j] += 1e-4;
    Tape t1;
    const double up =
        t1.val(ctc_loss(t1, log_softmax_rows(t1, t1.leaf(probe)), target, 0)).v[0];
    probe.v[j] -= 2e-4;
    Tape t2;
    const double down =
        t2.val(ctc_loss(t2, log_softmax_rows(t2, t2.leaf(probe)), target, 0)).v[0];
    const double fd = (up - down) / 2e-4;
    CHECK(std::fabs(fd - analytic.v[j]) <=
          1e-4 * std::max({std::fabs(fd), std::fabs(analytic.v[j]), 1.0}));
  }
}

TEST_CASE("ctc collapse rules", "[ctc]") {
  CHECK(ctc_collapse({1, 1, 0, 1}, 0) == std::vector<int>({1, 1}));
  CHECK(ctc_collapse({0, 0, 0}, 0) == std::vector<int>{});
  CHECK(ctc_collapse({1, 2, 2, 0, 3}, 0) == std::vector<int>({1, 2, 3}));
}
