/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cleartts/model/tts_model.hpp"

using namespace cleartts;
using namespace cleartts::model;
using core::Rng;
using core::Tensor;
using nn::Binder;
using nn::ParamStore;
using nn::Tape;
using nn::V;

namespace {

const double kLogFloor = std::log(1e-5);

// Small channel count keeps the unit tests quick; the shape contract is
// independent of width. The acceptance suite exercises the full size.
ModelConfig small_config() {
  ModelConfig cfg;
  cfg.phoneme_vocab = 8;
  cfg.n_speakers = 2;
  cfg.unet_base_channels = 4;
  return cfg;
}

Tensor random_mel(int T, int M, Rng& rng) {
  Tensor t({T, M});
  for (auto& x : t.v) x = rng.uniform(kLogFloor, 0.0);
  return t;
}

corpus::Utterance make_utterance(corpus::ConditionClass cls, int frames, Rng& rng) {
  corpus::Utterance utt;
  utt.id = "fixture";
  utt.speaker = "spk0";
  utt.speaker_id = 0;
  utt.condition_class = cls;
  utt.phoneme_ids = {1, 3, 5};
  utt.durations = {frames / 3, frames / 3, frames - 2 * (frames / 3)};
  utt.transcript_chars = {2, 4, 2};
  utt.mel.values = random_mel(frames, 80, rng);
  utt.mel.hop_samples = 275;
  utt.mel.win_samples = 1100;
  if (cls == corpus::ConditionClass::kPairedNoisy) {
    audio::MelSpectrogram nm;
    nm.values = random_mel(frames, 80, rng);
    nm.hop_samples = 275;
    nm.win_samples = 1100;
    utt.noise_mel = nm;
  }
  utt.pitch.f0.assign(static_cast<std::size_t>(frames), 180.0);
  return utt;
}

}  // namespace

TEST_CASE("noise extractor preserves the time length for every T", "[noise]") {
  ModelConfig cfg = small_config();
  NoiseExtractor extractor(cfg);
  ParamStore store;
  extractor.register_params(store, 77);
  Rng rng(1);

  for (int T : {1, 7, 15, 16, 17, 100}) {
    Tape t;
    Binder p(t, store, false);
    V in = t.leaf(random_mel(T, 80, rng), false);
    V out = extractor.forward(t, p, in, kLogFloor, false, false);
    CHECK(t.val(out).shape == std::vector<int>({T, 80}));
  }
}

TEST_CASE("untrained extractor is finite on all-floor input", "[noise]") {
  ModelConfig cfg = small_config();
  NoiseExtractor extractor(cfg);
  ParamStore store;
  extractor.register_params(store, 78);
  Tape t;
  Binder p(t, store, false);
  V in = t.leaf(Tensor::full({9, 80}, kLogFloor), false);
  V out = extractor.forward(t, p, in, kLogFloor, false, false);
  CHECK(t.val(out).all_finite());
}

TEST_CASE("extractor training mode updates BN running statistics", "[noise]") {
  ModelConfig cfg = small_config();
  NoiseExtractor extractor(cfg);
  ParamStore store;
  extractor.register_params(store, 79);
  Rng rng(2);
  const auto before = store.at("extractor/stem/bn1_rm");
  {
    Tape t;
    Binder p(t, store, true);
    extractor.forward(t, p, t.leaf(random_mel(16, 80, rng), false), kLogFloor,
                      true, true);
  }
  CHECK(store.at("extractor/stem/bn1_rm").v != before.v);

  // Eval mode (and the frozen-extractor path) must leave buffers alone.
  const auto frozen = store.at("extractor/stem/bn1_rm");
  {
    Tape t;
    Binder p(t, store, false);
    extractor.forward(t, p, t.leaf(random_mel(16, 80, rng), false), kLogFloor,
                      false, false);
  }
  CHECK(store.at("extractor/stem/bn1_rm").v == frozen.v);
}

TEST_CASE("noise encoder produces frame-level condition", "[noise]") {
  ModelConfig cfg = small_config();
  NoiseEncoder enc(cfg);
  ParamStore store;
  enc.register_params(store, 80);
  Rng rng(3);
  const int T = 9;
  Tensor mel = random_mel(T, 80, rng);

  Tape t;
  Binder p(t, store, false);
  V in = t.leaf(mel, false);
  V frame = enc.forward(t, p, in, Granularity::kFrame, T);
  CHECK(t.val(frame).shape == std::vector<int>({T, 256}));

  // Utterance granularity: every row equals the time mean of frame rows.
  V utt = enc.forward(t, p, in, Granularity::kUtterance, T);
  const Tensor& fv = t.val(frame);
  const Tensor& uv = t.val(utt);
  for (int d = 0; d < 256; ++d) {
    double mean = 0.0;
    for (int i = 0; i < T; ++i) mean += fv.at(i, d);
    mean /= T;
    for (int i = 0; i < T; ++i)
      CHECK_THAT(uv.at(i, d), Catch::Matchers::WithinAbs(mean, 1e-12));
  }

  // Granularity none: zeros, independent of the input.
  V none = enc.forward(t, p, in, Granularity::kNone, T);
  for (double x : t.val(none).v) CHECK(x == 0.0);

  CHECK_THROWS_AS(enc.forward(t, p, in, Granularity::kFrame, T + 1),
                  InvalidInputError);
}

TEST_CASE("silence input gives one deterministic clean condition", "[noise]") {
  ModelConfig cfg = small_config();
  NoiseEncoder enc(cfg);
  ParamStore store;
  enc.register_params(store, 81);
  const Tensor silence = Tensor::full({6, 80}, kLogFloor);

  auto run = [&]() {
    Tape t;
    Binder p(t, store, false);
    return t.val(enc.forward(t, p, t.leaf(silence, false), Granularity::kFrame, 6)).v;
  };
  CHECK(run() == run());
}

TEST_CASE("adversarial head forward value ignores the GRL", "[noise]") {
  ModelConfig cfg = small_config();
  AdversarialCtcHead head(cfg);
  ParamStore store;
  head.register_params(store, 82);
  Rng rng(4);
  Tensor noise = random_mel(8, 80, rng);
  std::vector<int> transcript = {3, 1, 4};

  auto value_with = [&](double lambda, bool reverse) {
    Tape t;
    Binder p(t, store, false);
    return t.val(head.loss(t, p, t.leaf(noise, false), transcript, lambda, false,
                           nullptr, reverse)).v[0];
  };
  const double base = value_with(1.0, true);
  CHECK(value_with(0.0, true) == base);
  CHECK(value_with(2.5, true) == base);
  CHECK(value_with(1.0, false) == base);  // GRL removed: same forward
}

TEST_CASE("adversarial gradient is the exact negation of the identity route",
          "[noise]") {
  ModelConfig cfg = small_config();
  NoiseExtractor extractor(cfg);
  AdversarialCtcHead head(cfg);
  ParamStore store;
  extractor.register_params(store, 83);
  head.register_params(store, 83);
  Rng rng(5);
  Tensor noisy = random_mel(8, 80, rng);
  std::vector<int> transcript = {2, 5};

  auto extractor_grads = [&](double lambda, bool reverse) {
    Tape t;
    Binder p(t, store, true);
    V extracted =
        extractor.forward(t, p, t.leaf(noisy, false), kLogFloor, true, false);
    V loss = head.loss(t, p, extracted, transcript, lambda, false, nullptr, reverse);
    t.backward(loss);
    return p.gradients();
  };

  const auto reversed = extractor_grads(1.0, true);
  const auto identity = extractor_grads(1.0, false);
  int checked = 0;
  for (const auto& [name, g] : reversed) {
    if (name.rfind("extractor/", 0) != 0) continue;
    const auto it = identity.find(name);
    REQUIRE(it != identity.end());
    for (std::size_t i = 0; i < g.v.size(); ++i)
      REQUIRE(g.v[i] == -it->second.v[i]);
    ++checked;
  }
  CHECK(checked > 10);

  // lambda = 0: extractor gradient vanishes, CTC head still learns.
  const auto zeroed = extractor_grads(0.0, true);
  bool head_has_grad = false;
  for (const auto& [name, g] : zeroed) {
    if (name.rfind("extractor/", 0) == 0)
      for (double x : g.v) REQUIRE(x == 0.0);
    if (name.rfind("ctc_head/", 0) == 0)
      for (double x : g.v) head_has_grad |= (x != 0.0);
  }
  CHECK(head_has_grad);
}

TEST_CASE("granularity none makes the model ignore noise input", "[noise]") {
  ModelConfig cfg = small_config();
  cfg.granularity = Granularity::kNone;
  TtsModel model(cfg, kLogFloor);
  ParamStore store;
  model.register_params(store, 84);
  Rng rng(6);

  auto utt = make_utterance(corpus::ConditionClass::kPairedNoisy, 9, rng);
  TrainFlags flags;
  flags.use_adversarial_ctc = false;

  auto run = [&](const corpus::Utterance& u) {
    Tape t;
    Binder p(t, store, false);
    auto out = model.train_forward(t, p, u, flags, false, nullptr, false);
    return t.val(out.mel_pred).v;
  };
  const auto base = run(utt);
  // Perturb the noise input; the synthesized mel must be bit-identical.
  for (auto& x : utt.noise_mel->values.v) x += rng.uniform(-3.0, 3.0);
  CHECK(run(utt) == base);
}

TEST_CASE("train_forward routing per condition class", "[noise]") {
  ModelConfig cfg = small_config();
  TtsModel model(cfg, kLogFloor);
  ParamStore store;
  model.register_params(store, 85);
  Rng rng(7);
  TrainFlags flags;

  {
    Tape t;
    Binder p(t, store, false);
    auto utt = make_utterance(corpus::ConditionClass::kClean, 9, rng);
    auto out = model.train_forward(t, p, utt, flags, false, nullptr, false);
    CHECK_FALSE(out.extracted.valid());  // clean never runs the extractor
    CHECK_FALSE(out.adv_ctc.valid());
    CHECK(t.val(out.mel_pred).shape == std::vector<int>({9, 80}));
    CHECK(t.val(out.log_dur_pred).shape == std::vector<int>({3, 1}));
    CHECK(t.val(out.pitch_pred).shape == std::vector<int>({9, 1}));
  }
  {
    Tape t;
    Binder p(t, store, false);
    auto utt = make_utterance(corpus::ConditionClass::kPairedNoisy, 9, rng);
    auto out = model.train_forward(t, p, utt, flags, false, nullptr, false);
    CHECK(out.extracted.valid());   // supervised extraction target exists
    CHECK_FALSE(out.adv_ctc.valid());  // adversarial term is unpaired-only
  }
  {
    Tape t;
    Binder p(t, store, false);
    auto utt = make_utterance(corpus::ConditionClass::kUnpairedNoisy, 9, rng);
    auto out = model.train_forward(t, p, utt, flags, false, nullptr, false);
    CHECK(out.extracted.valid());
    CHECK(out.adv_ctc.valid());
    CHECK_FALSE(out.adv_ctc_skipped);
  }
  {
    // Unreachable transcript: the adversarial term is skipped and flagged.
    Tape t;
    Binder p(t, store, false);
    auto utt = make_utterance(corpus::ConditionClass::kUnpairedNoisy, 3, rng);
    utt.phoneme_ids = {1};
    utt.durations = {3};
    utt.transcript_chars = {2, 2, 2, 2};  // needs 7 frames
    auto out = model.train_forward(t, p, utt, flags, false, nullptr, false);
    CHECK_FALSE(out.adv_ctc.valid());
    CHECK(out.adv_ctc_skipped);
  }
}

TEST_CASE("inference conditions on silence and honors overrides", "[noise]") {
  ModelConfig cfg = small_config();
  TtsModel model(cfg, kLogFloor);
  ParamStore store;
  model.register_params(store, 86);

  TtsModel::InferenceRequest req;
  req.phoneme_ids = {1, 2, 3};
  req.duration_override = {3, 3, 3};
  auto res = model.infer(store, req);
  CHECK(res.mel.shape == std::vector<int>({9, 80}));
  CHECK(res.durations == std::vector<int>({3, 3, 3}));
  // The conditioning input is exactly silence of matching length.
  const Tensor expect = model.silence_values(9);
  CHECK(res.noise_encoder_input.shape == expect.shape);
  CHECK(res.noise_encoder_input.v == expect.v);

  // Without an override the predicted durations decide the length.
  TtsModel::InferenceRequest free_req;
  free_req.phoneme_ids = {1, 2, 3};
  auto free_res = model.infer(store, free_req);
  int total = 0;
  for (int d : free_res.durations) {
    CHECK(d >= 1);
    total += d;
  }
  CHECK(free_res.mel.dim(0) == total);

  // Determinism.
  auto res2 = model.infer(store, req);
  CHECK(res2.mel.v == res.mel.v);
}
