/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include <catch2/catch_amalgamated.hpp>

#include "cleartts/nn/adam.hpp"
#include "cleartts/nn/transformer.hpp"

using namespace cleartts;
using namespace cleartts::nn;
using core::Rng;
using core::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.v) x = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("transformer block preserves shape for any length", "[transformer]") {
  TransformerConfig cfg;  // d = 256
  TransformerBlock block("blk/", cfg);
  ParamStore store;
  block.register_params(store, 123);

  Rng rng(1);
  for (int T : {1, 4, 9}) {
    Tape tape;
    Binder bind(tape, store, false);
    V x = tape.leaf(random_tensor({T, 256}, rng), false);
    V y = block.forward(tape, bind, x, {}, false, nullptr);
    CHECK(tape.val(y).shape == std::vector<int>({T, 256}));
  }
}

TEST_CASE("transformer block is deterministic in eval mode", "[transformer]") {
  TransformerConfig cfg;
  TransformerBlock block("blk/", cfg);
  ParamStore store;
  block.register_params(store, 7);
  Rng rng(2);
  Tensor x = random_tensor({5, 256}, rng);

  auto run = [&]() {
    Tape tape;
    Binder bind(tape, store, false);
    return tape.val(block.forward(tape, bind, tape.leaf(x), {}, false, nullptr)).v;
  };
  CHECK(run() == run());
}

TEST_CASE("masked positions do not influence unmasked outputs", "[transformer]") {
  TransformerConfig cfg;
  TransformerBlock block("blk/", cfg);
  ParamStore store;
  block.register_params(store, 99);
  Rng rng(3);

  const int T = 6;
  Tensor x = random_tensor({T, 256}, rng);
  std::vector<std::uint8_t> mask(T, 1);
  mask[4] = 0;  // one padded position

  auto run = [&](const Tensor& input) {
    Tape tape;
    Binder bind(tape, store, false);
    return tape.val(block.forward(tape, bind, tape.leaf(input), mask, false, nullptr));
  };
  const Tensor base = run(x);

  Tensor perturbed = x;
  for (int d = 0; d < 256; ++d) perturbed.at(4, d) += rng.uniform(-2.0, 2.0);
  const Tensor after = run(perturbed);

  for (int i = 0; i < T; ++i) {
    if (i == 4) continue;
    for (int d = 0; d < 256; ++d) CHECK(after.at(i, d) == base.at(i, d));
  }
}

TEST_CASE("attention rows sum to one over unmasked keys", "[transformer]") {
  TransformerConfig cfg;
  TransformerBlock block("blk/", cfg);
  ParamStore store;
  block.register_params(store, 5);
  Rng rng(4);

  const int T = 5;
  std::vector<std::uint8_t> mask(T, 1);
  mask[0] = 0;
  Tape tape;
  Binder bind(tape, store, false);
  AttnProbe probe;
  block.forward(tape, bind, tape.leaf(random_tensor({T, 256}, rng)), mask, false,
                nullptr, &probe);
  REQUIRE(probe.head_probs.size() == 2);
  for (V probs : probe.head_probs) {
    const Tensor& pv = tape.val(probs);
    for (int i = 0; i < T; ++i) {
      double sum = 0.0;
      for (int j = 0; j < T; ++j) sum += pv.at(i, j);
      CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
      CHECK(pv.at(i, 0) == 0.0);  // masked key
    }
  }
}

TEST_CASE("transformer gradients agree with finite differences", "[transformer]") {
  // Tiny dimensions keep the probe cheap; the block wiring is what matters.
  TransformerConfig cfg;
  cfg.d_model = 6;
  cfg.ffn = 8;
  cfg.n_heads = 2;
  TransformerBlock block("blk/", cfg);
  ParamStore store;
  block.register_params(store, 11);
  Rng rng(5);
  Tensor x = random_tensor({3, 6}, rng);

  Tape tape;
  Binder bind(tape, store, true);
  V leaf = tape.leaf(x, true);
  tape.backward(mean_all(tape, block.forward(tape, bind, leaf, {}, false, nullptr)));
  const Tensor analytic = tape.grad(leaf);

  auto value_at = [&](const Tensor& input) {
    Tape t2;
    Binder b2(t2, store, false);
    return t2.val(mean_all(t2, block.forward(t2, b2, t2.leaf(input), {}, false,
                                             nullptr))).v[0];
  };
  for (std::size_t j = 0; j < x.v.size(); ++j) {
    auto probe = x;
    probe.v[j] += 1e-3;
    const double up = value_at(probe);
    probe.v[j] -= 2e-3;
    const double down = value_at(probe);
    const double fd = (up - down) / 2e-3;
    CHECK(std::fabs(fd - analytic.v[j]) <=
          2e-4 * std::max({std::fabs(fd), std::fabs(analytic.v[j]), 1.0}));
  }
}

TEST_CASE("adam schedule warms up then decays", "[transformer]") {
  AdamConfig cfg;
  AdamOptimizer opt(cfg);
  CHECK(opt.lr_at(0) < opt.lr_at(100));
  CHECK_THAT(opt.lr_at(399), Catch::Matchers::WithinAbs(cfg.peak_lr, 1e-9));
  CHECK(opt.lr_at(1599) < cfg.peak_lr);
  CHECK_THAT(opt.lr_at(1599), Catch::Matchers::WithinAbs(cfg.peak_lr / 2.0, 1e-9));
}

TEST_CASE("adam converges on a quadratic and respects the gradient map", "[transformer]") {
  ParamStore store;
  store.add("w", Tensor::full({4}, 5.0));
  store.add("frozen", Tensor::full({2}, 3.0));
  AdamConfig cfg;
  cfg.peak_lr = 0.1;
  cfg.warmup_steps = 10;
  cfg.clip_norm = 0.0;
  AdamOptimizer opt(cfg);

  for (int step = 0; step < 400; ++step) {
    std::map<std::string, Tensor> grads;
    Tensor g({4});
    for (int i = 0; i < 4; ++i) g.at(i) = 2.0 * store.at("w").at(i);
    grads.emplace("w", g);
    opt.apply(store, grads);
  }
  for (int i = 0; i < 4; ++i) CHECK(std::fabs(store.at("w").at(i)) < 1e-2);
  for (int i = 0; i < 2; ++i) CHECK(store.at("frozen").at(i) == 3.0);
}

TEST_CASE("gradient clipping bounds the applied norm", "[transformer]") {
  ParamStore store;
  store.add("w", Tensor::zeros({3}));
  AdamConfig cfg;
  cfg.clip_norm = 1.0;
  cfg.peak_lr = 1.0;
  cfg.warmup_steps = 1;
  AdamOptimizer opt(cfg);
  std::map<std::string, Tensor> grads;
  grads.emplace("w", Tensor::full({3}, 100.0));
  opt.apply(store, grads);
  // First-step Adam moves by lr * g_clipped / (|g_clipped| + eps) per element;
  // all elements equal, so the update is symmetric and finite.
  for (int i = 0; i < 3; ++i) {
    CHECK(std::isfinite(store.at("w").at(i)));
    CHECK(std::fabs(store.at("w").at(i)) <= 1.0 + 1e-6);
  }
}

TEST_CASE("positional encoding distinguishes positions", "[transformer]") {
  Tensor pe = positional_encoding(10, 8);
  REQUIRE(pe.shape == std::vector<int>({10, 8}));
  bool distinct = false;
  for (int d = 0; d < 8 && !distinct; ++d)
    if (pe.at(3, d) != pe.at(7, d)) distinct = true;
  CHECK(distinct);
  CHECK(pe.at(0, 0) == 0.0);  // sin(0)
  CHECK(pe.at(0, 1) == 1.0);  // cos(0)
}
