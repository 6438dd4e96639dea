/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "cleartts/model/backbone.hpp"

using namespace cleartts;
using namespace cleartts::model;
using core::Rng;
using core::Tensor;
using nn::Binder;
using nn::ParamStore;
using nn::Tape;
using nn::V;

namespace {

ModelConfig test_config() {
  ModelConfig cfg;
  cfg.phoneme_vocab = 8;
  cfg.n_speakers = 2;
  return cfg;
}

struct Fixture {
  ModelConfig cfg = test_config();
  TtsBackbone backbone{cfg};
  ParamStore store;
  Fixture() { backbone.register_params(store, 2024); }
};

}  // namespace

TEST_CASE("encode_phonemes shape and determinism", "[backbone]") {
  Fixture f;
  std::vector<int> ids = {0, 3, 5, 2, 7};

  auto run = [&]() {
    Tape t;
    Binder p(t, f.store, false);
    return t.val(f.backbone.encode_phonemes(t, p, ids, false, nullptr));
  };
  const Tensor a = run();
  CHECK(a.shape == std::vector<int>({5, 256}));
  CHECK(run().v == a.v);
}

TEST_CASE("encode_phonemes is position sensitive", "[backbone]") {
  Fixture f;
  Tape t;
  Binder p(t, f.store, false);
  const Tensor a =
      t.val(f.backbone.encode_phonemes(t, p, {1, 2, 3}, false, nullptr));
  const Tensor b =
      t.val(f.backbone.encode_phonemes(t, p, {3, 2, 1}, false, nullptr));
  CHECK(a.v != b.v);
}

TEST_CASE("encode_phonemes rejects out-of-vocabulary ids", "[backbone]") {
  Fixture f;
  Tape t;
  Binder p(t, f.store, false);
  CHECK_THROWS_AS(f.backbone.encode_phonemes(t, p, {0, 8}, false, nullptr),
                  InvalidInputError);
  CHECK_THROWS_AS(f.backbone.encode_phonemes(t, p, {}, false, nullptr),
                  InvalidInputError);
  CHECK_THROWS_AS(f.backbone.add_speaker(
                      t, p, f.backbone.encode_phonemes(t, p, {1}, false, nullptr), 5),
                  InvalidInputError);
}

TEST_CASE("duration predictor emits one value per phoneme", "[backbone]") {
  Fixture f;
  Tape t;
  Binder p(t, f.store, false);
  V h = f.backbone.encode_phonemes(t, p, {0, 1, 2, 3}, false, nullptr);
  V d = f.backbone.predict_log_durations(t, p, h, false, nullptr);
  CHECK(t.val(d).shape == std::vector<int>({4, 1}));
}

TEST_CASE("inference duration rounding never drops a phoneme", "[backbone]") {
  // Strongly negative predictions still produce one frame.
  CHECK(durations_from_log(std::vector<double>{-5.0, 0.0, std::log(4.0 + 1.0)}) ==
        std::vector<int>({1, 1, 4}));
  CHECK(durations_from_log(std::vector<double>{std::log(1.0), std::log(2.5)}) ==
        std::vector<int>({1, 2}));  // round(exp(p)-1)
}

TEST_CASE("length regulator repeats rows exactly", "[backbone]") {
  Tape t;
  Tensor h({3, 4});
  for (int i = 0; i < 12; ++i) h.v[static_cast<std::size_t>(i)] = i;
  V leaf = t.leaf(h, false);

  V y = length_regulate(t, leaf, {2, 0, 1});
  const Tensor& yv = t.val(y);
  REQUIRE(yv.shape == std::vector<int>({3, 4}));
  for (int d = 0; d < 4; ++d) {
    CHECK(yv.at(0, d) == h.at(0, d));
    CHECK(yv.at(1, d) == h.at(0, d));
    CHECK(yv.at(2, d) == h.at(2, d));
  }

  // All-ones durations are the identity.
  V id = length_regulate(t, leaf, {1, 1, 1});
  CHECK(t.val(id).v == h.v);

  CHECK_THROWS_AS(length_regulate(t, leaf, {0, 0, 0}), InvalidInputError);
  CHECK_THROWS_AS(length_regulate(t, leaf, {1, 1}), InvalidInputError);
}

TEST_CASE("length regulator random cases are exact", "[backbone]") {
  Rng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    const int L = static_cast<int>(rng.uniform_int(1, 12));
    Tensor h({L, 3});
    for (auto& x : h.v) x = rng.uniform(-5.0, 5.0);
    std::vector<int> durations(static_cast<std::size_t>(L));
    long long total = 0;
    for (auto& d : durations) {
      d = static_cast<int>(rng.uniform_int(0, 4));
      total += d;
    }
    if (total == 0) durations[0] = 1, total = 1;

    Tape t;
    V y = length_regulate(t, t.leaf(h, false), durations);
    REQUIRE(t.val(y).dim(0) == static_cast<int>(total));
    int row = 0;
    for (int i = 0; i < L; ++i)
      for (int r = 0; r < durations[static_cast<std::size_t>(i)]; ++r, ++row)
        for (int d = 0; d < 3; ++d)
          REQUIRE(t.val(y).at(row, d) == h.at(i, d));
  }
}

TEST_CASE("pitch quantizer round trip and reserved bin", "[backbone]") {
  PitchQuantizer q(256, 50.0, 800.0);
  CHECK(q.bin_of(0.0) == 0);
  CHECK(q.bin_of(10.0) == 0);  // below fmin counts as unvoiced
  CHECK(q.center_of(0) == 0.0);
  for (int k = 1; k <= 255; ++k) CHECK(q.bin_of(q.center_of(k)) == k);
  CHECK(q.bin_of(50.0) == 1);
  CHECK(q.bin_of(800.0) == 255);
  CHECK(q.bin_of(5000.0) == 255);  // clamped
}

TEST_CASE("pitch predictor and embedding shapes", "[backbone]") {
  Fixture f;
  Tape t;
  Binder p(t, f.store, false);
  Tensor h_cond = Tensor::zeros({6, 256});
  V h = t.leaf(h_cond, false);
  V pred = f.backbone.predict_pitch(t, p, h, false, nullptr);
  CHECK(t.val(pred).shape == std::vector<int>({6, 1}));

  std::vector<double> f0 = {0.0, 120.0, 220.0, 440.0, 0.0, 99.0};
  V withp = f.backbone.add_pitch(t, p, h, f0);
  CHECK(t.val(withp).shape == std::vector<int>({6, 256}));
  CHECK_THROWS_AS(f.backbone.add_pitch(t, p, h, {1.0}), InvalidInputError);
}

TEST_CASE("decode_mel maps hidden frames to mel frames", "[backbone]") {
  Fixture f;
  Tape t;
  Binder p(t, f.store, false);
  V h = t.leaf(Tensor::zeros({7, 256}), false);
  V mel = f.backbone.decode_mel(t, p, h, false, nullptr);
  CHECK(t.val(mel).shape == std::vector<int>({7, 80}));
}

TEST_CASE("end-to-end frame count equals sum of durations", "[backbone]") {
  Fixture f;
  Rng rng(66);
  Tape t;
  Binder p(t, f.store, false);
  std::vector<int> ids = {0, 4, 2, 6};
  std::vector<int> durations = {3, 1, 4, 2};
  const int total = std::accumulate(durations.begin(), durations.end(), 0);

  V h = f.backbone.encode_phonemes(t, p, ids, false, nullptr);
  h = f.backbone.add_speaker(t, p, h, 1);
  V hf = length_regulate(t, h, durations);
  std::vector<double> f0(static_cast<std::size_t>(total), 150.0);
  V mel = f.backbone.decode_mel(t, p, f.backbone.add_pitch(t, p, hf, f0), false,
                                nullptr);
  CHECK(t.val(mel).shape == std::vector<int>({total, 80}));
}
