/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "cleartts/train/trainer.hpp"

using namespace cleartts;
using namespace cleartts::train;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cleartts_train_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// Tiny model + corpus so training smoke tests run in milliseconds per step.
RunConfig micro_config(const std::string& out_dir) {
  RunConfig cfg;
  cfg.seed = 321;
  cfg.out_dir = out_dir;
  cfg.model.d_model = 32;
  cfg.model.ffn = 64;
  cfg.model.n_layers = 1;
  cfg.model.ctc_layers = 1;
  cfg.model.unet_base_channels = 4;
  cfg.model.pitch_bins = 32;
  cfg.corpus.toy.n_speakers = 4;
  cfg.corpus.toy.utterances_per_speaker = 2;
  cfg.corpus.toy.n_noise_files = 2;
  cfg.train.batch_size = 2;
  cfg.train.pretrain_steps = 10;
  cfg.train.joint_steps = 6;
  cfg.train.val_interval = 4;
  cfg.train.checkpoint_interval = 1000;
  cfg.train.warmup_steps = 4;
  return cfg;
}

corpus::Manifest prepare_micro_corpus(const RunConfig& cfg) {
  auto toy = corpus::generate_toy_corpus(cfg.corpus.toy, cfg.frontend,
                                         cfg.out_dir, cfg.seed);
  auto manifest = corpus::build_artificial_corpus(
      toy.items, toy.noise_files, toy.phoneme_symbols, cfg.corpus.build,
      cfg.frontend, cfg.out_dir, cfg.seed);
  corpus::write_manifest(cfg.manifest_path(), manifest);
  return manifest;
}

corpus::Utterance fixture_utt(corpus::ConditionClass cls, int frames,
                              core::Rng& rng) {
  corpus::Utterance utt;
  utt.id = "fixture";
  utt.speaker = "spk0";
  utt.condition_class = cls;
  utt.phoneme_ids = {0, 1};
  utt.durations = {frames / 2, frames - frames / 2};
  utt.transcript_chars = {1, 2};
  utt.mel.values = core::Tensor({frames, 80});
  for (auto& x : utt.mel.values.v) x = rng.uniform(std::log(1e-5), 0.0);
  if (cls == corpus::ConditionClass::kPairedNoisy) {
    audio::MelSpectrogram nm;
    nm.values = core::Tensor({frames, 80});
    for (auto& x : nm.values.v) x = rng.uniform(std::log(1e-5), 0.0);
    utt.noise_mel = nm;
  }
  utt.pitch.f0.assign(static_cast<std::size_t>(frames), 200.0);
  return utt;
}

}  // namespace

TEST_CASE("loss terms follow condition-class eligibility", "[training]") {
  core::Rng rng(1);
  const double floor = std::log(1e-5), ceil = std::log(1e3);
  LossWeights w;

  // Clean: no extractor or adversarial term exists at all.
  {
    auto utt = fixture_utt(corpus::ConditionClass::kClean, 8, rng);
    nn::Tape t;
    TtsModel::ForwardOutputs out;
    out.mel_pred = nn::constant(t, utt.mel.values);
    out.log_dur_pred = nn::constant(t, log_duration_targets(utt.durations));
    out.pitch_pred = nn::constant(t, log_pitch_targets(utt.pitch.f0));
    auto ul = utterance_loss(t, out, utt, w, floor, ceil);
    CHECK(ul.terms.count("ext_mae") == 0);
    CHECK(ul.terms.count("adv_ctc") == 0);
    // Perfect predictions make every term vanish.
    CHECK(t.val(ul.total).v[0] <= 1e-6);
  }

  // Paired: extractor term present; adversarial absent.
  {
    auto utt = fixture_utt(corpus::ConditionClass::kPairedNoisy, 8, rng);
    nn::Tape t;
    TtsModel::ForwardOutputs out;
    out.mel_pred = nn::constant(t, utt.mel.values);
    out.log_dur_pred = nn::constant(t, log_duration_targets(utt.durations));
    out.pitch_pred = nn::constant(t, log_pitch_targets(utt.pitch.f0));
    out.extracted = nn::constant(t, utt.noise_mel->values);
    auto ul = utterance_loss(t, out, utt, w, floor, ceil);
    CHECK(ul.terms.count("ext_mae") == 1);
    CHECK(ul.terms.count("adv_ctc") == 0);
    CHECK(t.val(ul.total).v[0] <= 1e-6);
  }
}

TEST_CASE("batch total equals weighted sum of logged terms", "[training]") {
  const auto dir = fresh_dir("decomp");
  auto cfg = micro_config(dir);
  cfg.train.joint_steps = 3;
  cfg.train.val_interval = 100;
  auto manifest = prepare_micro_corpus(cfg);
  joint_train(manifest, cfg, dir + "/joint", "");

  const auto log = read_loss_log(dir + "/joint/losses.tsv");
  int rows = 0;
  for (long step = 0; step < 3; ++step) {
    double weighted = 0.0;
    for (const auto& name : loss_term_names())
      weighted += term_weight(cfg.train.weights, name) * log.at({step, name});
    const double total = log.at({step, "total"});
    CHECK_THAT(weighted, Catch::Matchers::WithinRel(total, 1e-9));
    ++rows;
  }
  CHECK(rows == 3);
  fs::remove_all(dir);
}

TEST_CASE("pretrain reduces extractor loss and respects freezing", "[training]") {
  const auto dir = fresh_dir("pretrain");
  auto cfg = micro_config(dir);
  auto manifest = prepare_micro_corpus(cfg);

  // Snapshot of a freshly initialized model: everything except the
  // extractor must stay bit-identical through Step 1.
  const auto mcfg = complete_model_config(cfg, manifest);
  TtsModel reference(mcfg, cfg.frontend.log_floor());
  nn::ParamStore fresh;
  reference.register_params(fresh, cfg.seed);

  auto outcome = pretrain_extractor(manifest, cfg, dir + "/extractor");
  CHECK(outcome.steps_run == 10);

  auto ckpt = model::load_checkpoint(outcome.final_checkpoint);
  CHECK(ckpt.step == 10);
  CHECK(ckpt.params.hash_of("extractor/") != fresh.hash_of("extractor/"));
  for (const char* prefix : {"encoder/", "decoder/", "dur/", "pitch_pred/",
                             "noise_enc/", "ctc_head/", "spk/", "pitch/"})
    CHECK(ckpt.params.hash_of(prefix) == fresh.hash_of(prefix));

  // Loss log exists and the train loss went down.
  const auto log = read_loss_log(dir + "/extractor/losses.tsv");
  CHECK(log.at({9, "extractor_mae"}) < log.at({0, "extractor_mae"}));
  fs::remove_all(dir);
}

TEST_CASE("pretrain with zero steps equals initialization", "[training]") {
  const auto dir = fresh_dir("pretrain0");
  auto cfg = micro_config(dir);
  cfg.train.pretrain_steps = 0;
  auto manifest = prepare_micro_corpus(cfg);

  const auto mcfg = complete_model_config(cfg, manifest);
  TtsModel reference(mcfg, cfg.frontend.log_floor());
  nn::ParamStore fresh;
  reference.register_params(fresh, cfg.seed);

  auto outcome = pretrain_extractor(manifest, cfg, dir + "/extractor");
  auto ckpt = model::load_checkpoint(outcome.final_checkpoint);
  CHECK(ckpt.params.hash_of("") == fresh.hash_of(""));
  fs::remove_all(dir);
}

TEST_CASE("pretrain requires paired data", "[training]") {
  const auto dir = fresh_dir("pretrain_nopaired");
  auto cfg = micro_config(dir);
  auto manifest = prepare_micro_corpus(cfg);
  for (auto& e : manifest.entries)
    if (e.condition_class == corpus::ConditionClass::kPairedNoisy)
      e.split = "validation";  // starve the train split of paired data
  CHECK_THROWS_AS(pretrain_extractor(manifest, cfg, dir + "/extractor"),
                  ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("training determinism: same seed, same bytes", "[training]") {
  const auto dir_a = fresh_dir("det_a");
  const auto dir_b = fresh_dir("det_b");
  for (const auto& dir : {dir_a, dir_b}) {
    auto cfg = micro_config(dir);
    cfg.train.pretrain_steps = 5;
    cfg.train.joint_steps = 4;
    auto manifest = prepare_micro_corpus(cfg);
    auto pre = pretrain_extractor(manifest, cfg, dir + "/extractor");
    joint_train(manifest, cfg, dir + "/joint", pre.final_checkpoint);
  }
  CHECK(file_bytes(dir_a + "/extractor/losses.tsv") ==
        file_bytes(dir_b + "/extractor/losses.tsv"));
  CHECK(file_bytes(dir_a + "/joint/losses.tsv") ==
        file_bytes(dir_b + "/joint/losses.tsv"));
  CHECK(file_bytes(dir_a + "/joint/ckpt_final.bin") ==
        file_bytes(dir_b + "/joint/ckpt_final.bin"));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("interrupt and resume reproduces the trajectory", "[training]") {
  const auto dir_full = fresh_dir("resume_full");
  const auto dir_split = fresh_dir("resume_split");

  // Uninterrupted reference: 6 joint steps.
  std::string full_ckpt;
  {
    auto cfg = micro_config(dir_full);
    cfg.train.joint_steps = 6;
    cfg.train.checkpoint_interval = 3;
    auto manifest = prepare_micro_corpus(cfg);
    full_ckpt = joint_train(manifest, cfg, dir_full + "/joint", "").final_checkpoint;
  }
  // Interrupted at step 3, then resumed to 6.
  std::string split_ckpt;
  {
    auto cfg = micro_config(dir_split);
    cfg.train.joint_steps = 3;
    cfg.train.checkpoint_interval = 3;
    auto manifest = prepare_micro_corpus(cfg);
    auto first = joint_train(manifest, cfg, dir_split + "/joint", "");
    cfg.train.joint_steps = 6;
    split_ckpt = joint_train(manifest, cfg, dir_split + "/joint", "",
                             first.final_checkpoint)
                     .final_checkpoint;
  }

  // The final checkpoints and the per-step losses must agree exactly.
  CHECK(file_bytes(full_ckpt) == file_bytes(split_ckpt));
  const auto log_full = read_loss_log(dir_full + "/joint/losses.tsv");
  const auto log_split = read_loss_log(dir_split + "/joint/losses.tsv");
  for (const auto& [key, value] : log_full) {
    INFO("step " << key.first << " term " << key.second);
    REQUIRE(log_split.count(key) == 1);
    CHECK(log_split.at(key) == value);
  }
  fs::remove_all(dir_full);
  fs::remove_all(dir_split);
}

TEST_CASE("flag contracts: fix_extractor and use_adversarial_ctc", "[training]") {
  const auto dir = fresh_dir("flags");
  auto cfg = micro_config(dir);
  cfg.train.pretrain_steps = 3;
  cfg.train.joint_steps = 3;
  auto manifest = prepare_micro_corpus(cfg);
  auto pre = pretrain_extractor(manifest, cfg, dir + "/extractor");
  const auto warm = model::load_checkpoint(pre.final_checkpoint);

  // fix_extractor: extractor parameters (and BN buffers) bit-identical.
  {
    auto cfg2 = cfg;
    cfg2.train.fix_extractor = true;
    auto out = joint_train(manifest, cfg2, dir + "/joint_fixed", pre.final_checkpoint);
    auto ckpt = model::load_checkpoint(out.final_checkpoint);
    CHECK(ckpt.params.hash_of("extractor/") == warm.params.hash_of("extractor/"));
    CHECK(ckpt.params.hash_of("decoder/") != warm.params.hash_of("decoder/"));
  }
  // And without the flag the extractor moves.
  {
    auto out = joint_train(manifest, cfg, dir + "/joint_free", pre.final_checkpoint);
    auto ckpt = model::load_checkpoint(out.final_checkpoint);
    CHECK(ckpt.params.hash_of("extractor/") != warm.params.hash_of("extractor/"));
  }
  // use_adversarial_ctc = false: the CTC head never trains and the term is
  // absent (logged as zero).
  {
    auto cfg3 = cfg;
    cfg3.train.use_adversarial_ctc = false;
    auto out = joint_train(manifest, cfg3, dir + "/joint_noadv", pre.final_checkpoint);
    auto ckpt = model::load_checkpoint(out.final_checkpoint);
    CHECK(ckpt.params.hash_of("ctc_head/") == warm.params.hash_of("ctc_head/"));
    const auto log = read_loss_log(dir + "/joint_noadv/losses.tsv");
    CHECK(log.at({0, "adv_ctc"}) == 0.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("batch index schedule is deterministic and covers the data", "[training]") {
  const auto a = step_batch_indices(7, 0xE2, 5, 3, 10);
  const auto b = step_batch_indices(7, 0xE2, 5, 3, 10);
  CHECK(a == b);
  CHECK(a.size() == 3);

  // One full epoch touches every utterance exactly once.
  std::vector<int> seen(10, 0);
  for (long step = 0; step < 5; ++step)
    for (int idx : step_batch_indices(7, 0xE2, step, 2, 10))
      seen[static_cast<std::size_t>(idx)]++;
  for (int count : seen) CHECK(count == 1);
}
