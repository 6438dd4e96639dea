/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cleartts/corpus/loader.hpp"
#include "cleartts/model/checkpoint.hpp"
#include "cleartts/train/loss.hpp"
#include "cleartts/train/run_config.hpp"

namespace cleartts::train {

namespace fs = std::filesystem;
using corpus::Manifest;
using corpus::Utterance;
using model::TtsModel;
using nn::Binder;
using nn::ParamStore;
using nn::Tape;
using nn::V;

struct StageOutcome {
  std::string final_checkpoint;
  long steps_run = 0;
  std::map<std::string, double> initial_validation;
  std::map<std::string, double> final_validation;
};

// Batch composition for a given step: a pure function of (seed, stage,
// step), which is what makes interrupted runs resumable bit-exactly.
inline std::vector<int> step_batch_indices(std::uint64_t seed, std::uint64_t stage,
                                           long step, int batch_size, int n) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  long long cursor = static_cast<long long>(step) * batch_size;
  for (int j = 0; j < batch_size; ++j, ++cursor) {
    const auto epoch = static_cast<std::uint64_t>(cursor / n);
    const auto pos = static_cast<int>(cursor % n);
    auto rng = core::Rng::derive(seed, {0x0Bu, stage, epoch});
    out.push_back(rng.permutation(n)[static_cast<std::size_t>(pos)]);
  }
  return out;
}

// Line-delimited loss history: "step<TAB>term<TAB>value".
class LossLog {
 public:
  LossLog(const std::string& path, bool append)
      : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw DataError("cannot open loss log " + path);
  }

  void log(long step, const std::string& term, double value) {
    out_ << step << '\t' << term << '\t' << format_double(value) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

// Loss-log reader used by tests and the resume-determinism check.
inline std::map<std::pair<long, std::string>, double> read_loss_log(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open loss log " + path);
  std::map<std::pair<long, std::string>, double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos)
      throw DataError("malformed loss log line: " + line);
    out[{std::stol(line.substr(0, tab1)), line.substr(tab1 + 1, tab2 - tab1 - 1)}] =
        std::stod(line.substr(tab2 + 1));
  }
  return out;
}

inline model::ModelConfig complete_model_config(const RunConfig& cfg,
                                                const Manifest& manifest) {
  model::ModelConfig mcfg = cfg.model;
  mcfg.phoneme_vocab = static_cast<int>(manifest.header.phoneme_symbols.size());
  mcfg.n_speakers = static_cast<int>(manifest.header.speakers.size());
  mcfg.validate();
  return mcfg;
}

inline nlohmann::json checkpoint_config(const std::string& stage,
                                        const model::ModelConfig& mcfg,
                                        const RunConfig& cfg,
                                        const Manifest& manifest) {
  return {{"stage", stage},
          {"model", mcfg.to_json()},
          {"frontend", model::frontend_to_json(cfg.frontend)},
          {"phoneme_symbols", manifest.header.phoneme_symbols},
          {"speakers", manifest.header.speakers}};
}

// Mean-with-zeros over the batch: ineligible utterances contribute 0 to a
// term, so the batch total stays the mean of per-utterance totals.
struct TermAccumulator {
  std::map<std::string, double> sums;
  double total = 0.0;
  int adv_skipped = 0;

  void add(const Tape& t, const UtteranceLoss& ul) {
    for (const auto& [name, node] : ul.terms) sums[name] += t.val(node).v[0];
    total += t.val(ul.total).v[0];
    if (ul.adv_skipped) ++adv_skipped;
  }

  void log_means(LossLog& log, long step, int batch) const {
    for (const auto& name : loss_term_names()) {
      const auto it = sums.find(name);
      log.log(step, name, it == sums.end() ? 0.0 : it->second / batch);
    }
    log.log(step, "total", total / batch);
    if (adv_skipped > 0) log.log(step, "adv_ctc_skipped", adv_skipped);
  }
};

// Teacher-forced validation losses in eval mode (no dropout, BN running
// statistics, buffers untouched).
inline std::map<std::string, double> evaluate_losses(
    const TtsModel& tts, ParamStore& store, const std::vector<Utterance>& utts,
    const LossWeights& weights, const model::TrainFlags& flags, double log_floor,
    double log_ceil) {
  std::map<std::string, double> sums;
  double total = 0.0;
  for (const auto& utt : utts) {
    Tape t;
    Binder bind(t, store, /*training=*/false);
    auto out = tts.train_forward(t, bind, utt, flags, false, nullptr, false);
    auto ul = utterance_loss(t, out, utt, weights, log_floor, log_ceil);
    for (const auto& [name, node] : ul.terms) sums[name] += t.val(node).v[0];
    total += t.val(ul.total).v[0];
  }
  std::map<std::string, double> means;
  for (const auto& name : loss_term_names()) {
    const auto it = sums.find(name);
    means[name] = it == sums.end() ? 0.0 : it->second / static_cast<double>(utts.size());
  }
  means["total"] = total / static_cast<double>(utts.size());
  return means;
}

// Verifies that the adversarial gradient reaching the extractor with
// lambda = 1 is the exact elementwise negation of the gradient with the GRL
// replaced by identity.
inline bool grl_gradient_audit(const TtsModel& tts, ParamStore& store,
                               const Utterance& utt, double log_floor) {
  auto extractor_grads = [&](bool reverse) {
    Tape t;
    Binder bind(t, store, /*training=*/true);
    V noisy = nn::constant(t, utt.mel.values);
    V extracted = tts.extractor().forward(t, bind, noisy, log_floor, true, false);
    V loss = tts.ctc_head().loss(t, bind, extracted, utt.transcript_chars, 1.0,
                                 false, nullptr, reverse);
    t.backward(loss);
    return bind.gradients();
  };
  const auto reversed = extractor_grads(true);
  const auto identity = extractor_grads(false);
  for (const auto& [name, g] : reversed) {
    if (name.rfind("extractor/", 0) != 0) continue;
    const auto it = identity.find(name);
    if (it == identity.end()) return false;
    for (std::size_t i = 0; i < g.v.size(); ++i)
      if (g.v[i] != -it->second.v[i]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Step 1: extractor warm start on paired data, all other parameters fixed.
// ---------------------------------------------------------------------------
inline StageOutcome pretrain_extractor(const Manifest& manifest,
                                       const RunConfig& cfg,
                                       const std::string& stage_dir,
                                       const std::string& resume_path = "") {
  cfg.train.validate();
  fs::create_directories(stage_dir);

  std::vector<Utterance> train_utts, val_utts;
  for (const auto& u : corpus::load_split(manifest, "train"))
    if (u.condition_class == corpus::ConditionClass::kPairedNoisy)
      train_utts.push_back(u);
  for (const auto& u : corpus::load_split(manifest, "validation"))
    if (u.condition_class == corpus::ConditionClass::kPairedNoisy)
      val_utts.push_back(u);
  if (train_utts.empty())
    throw ConfigError("pretrain: no paired_noisy utterances in the train split");
  const std::vector<Utterance>& held_out = val_utts.empty() ? train_utts : val_utts;

  const auto mcfg = complete_model_config(cfg, manifest);
  TtsModel tts(mcfg, cfg.frontend.log_floor());
  ParamStore store;
  tts.register_params(store, cfg.seed);
  nn::AdamOptimizer opt(cfg.train.adam());

  long start_step = 0;
  if (!resume_path.empty()) {
    auto ckpt = model::load_checkpoint(resume_path);
    model::apply_checkpoint_params(store, ckpt.params);
    opt.first_moments() = ckpt.adam_m;
    opt.second_moments() = ckpt.adam_v;
    opt.set_step(ckpt.step);
    start_step = ckpt.step;
  }

  const auto ckpt_config = checkpoint_config("extractor", mcfg, cfg, manifest);
  const std::string log_path = (fs::path(stage_dir) / "losses.tsv").string();
  LossLog log(log_path, start_step > 0);
  const double log_floor = cfg.frontend.log_floor();
  const int B = cfg.train.batch_size;
  const long steps = cfg.train.pretrain_steps;
  const auto trainable = [](const std::string& name) {
    return name.rfind("extractor/", 0) == 0;
  };

  auto held_out_mae = [&]() {
    double acc = 0.0;
    for (const auto& utt : held_out) {
      Tape t;
      Binder bind(t, store, false);
      V extracted = tts.extractor().forward(t, bind, nn::constant(t, utt.mel.values),
                                            log_floor, false, false);
      acc += t.val(nn::mae_loss(t, extracted, nn::constant(t, utt.noise_mel->values)))
                 .v[0];
    }
    return acc / static_cast<double>(held_out.size());
  };

  StageOutcome outcome;
  double best_val = std::numeric_limits<double>::infinity();
  for (long step = start_step; step < steps; ++step) {
    if (step % cfg.train.val_interval == 0) {
      const double val = held_out_mae();
      log.log(step, "val_extractor_mae", val);
      if (step == 0) outcome.initial_validation["extractor_mae"] = val;
      if (val < best_val) {
        best_val = val;
        model::save_checkpoint((fs::path(stage_dir) / "ckpt_best.bin").string(),
                               store, &opt, step, ckpt_config);
      }
    }

    const auto indices = step_batch_indices(cfg.seed, 0xE1, step, B,
                                            static_cast<int>(train_utts.size()));
    // One tape per step: parameters bind once and a single backward pass
    // accumulates the whole batch gradient.
    Tape t;
    Binder bind(t, store, true, trainable);
    std::vector<V> losses;
    double mae_sum = 0.0;
    for (int idx : indices) {
      const Utterance& utt = train_utts[static_cast<std::size_t>(idx)];
      V extracted = tts.extractor().forward(t, bind, nn::constant(t, utt.mel.values),
                                            log_floor, true, true);
      V loss = nn::mae_loss(t, extracted, nn::constant(t, utt.noise_mel->values));
      losses.push_back(loss);
      mae_sum += t.val(loss).v[0];
    }
    t.backward(nn::weighted_sum(t, losses, std::vector<double>(losses.size(), 1.0 / B)));
    opt.apply(store, bind.take_gradients());
    log.log(step, "extractor_mae", mae_sum / B);

    if ((step + 1) % cfg.train.checkpoint_interval == 0)
      model::save_checkpoint(
          (fs::path(stage_dir) / ("ckpt_step" + std::to_string(step + 1) + ".bin"))
              .string(),
          store, &opt, step + 1, ckpt_config);
  }

  const double final_val = held_out_mae();
  log.log(steps, "val_extractor_mae", final_val);
  outcome.final_validation["extractor_mae"] = final_val;
  outcome.steps_run = steps - start_step;
  outcome.final_checkpoint = (fs::path(stage_dir) / "ckpt_final.bin").string();
  model::save_checkpoint(outcome.final_checkpoint, store, &opt, steps, ckpt_config);
  return outcome;
}

// ---------------------------------------------------------------------------
// Step 2: joint training of the TTS model and the noise condition module.
// ---------------------------------------------------------------------------
inline StageOutcome joint_train(const Manifest& manifest, const RunConfig& cfg,
                                const std::string& stage_dir,
                                const std::string& warm_start_path,
                                const std::string& resume_path = "") {
  cfg.train.validate();
  fs::create_directories(stage_dir);

  auto train_utts = corpus::load_split(manifest, "train");
  auto val_utts = corpus::load_split(manifest, "validation");
  if (train_utts.empty()) throw ConfigError("joint: empty train split");
  const std::vector<Utterance>& held_out = val_utts.empty() ? train_utts : val_utts;

  const auto mcfg = complete_model_config(cfg, manifest);
  TtsModel tts(mcfg, cfg.frontend.log_floor());
  ParamStore store;
  tts.register_params(store, cfg.seed);
  nn::AdamOptimizer opt(cfg.train.adam());

  model::TrainFlags flags;
  flags.lambda_grl = cfg.train.lambda_grl;
  flags.use_adversarial_ctc = cfg.train.use_adversarial_ctc;
  flags.fix_extractor = cfg.train.fix_extractor;

  long start_step = 0;
  if (!resume_path.empty()) {
    auto ckpt = model::load_checkpoint(resume_path);
    model::apply_checkpoint_params(store, ckpt.params);
    opt.first_moments() = ckpt.adam_m;
    opt.second_moments() = ckpt.adam_v;
    opt.set_step(ckpt.step);
    start_step = ckpt.step;
  } else if (!warm_start_path.empty()) {
    auto ckpt = model::load_checkpoint(warm_start_path);
    model::apply_checkpoint_params(store, ckpt.params,
                                   model::NoiseExtractor::kPrefix);
  }

  const auto trainable = [&flags](const std::string& name) {
    if (flags.fix_extractor && name.rfind("extractor/", 0) == 0) return false;
    return true;
  };

  const auto ckpt_config = checkpoint_config("joint", mcfg, cfg, manifest);
  const std::string log_path = (fs::path(stage_dir) / "losses.tsv").string();
  LossLog log(log_path, start_step > 0);
  const double log_floor = cfg.frontend.log_floor();
  const double log_ceil = cfg.frontend.log_ceil();
  const int B = cfg.train.batch_size;
  const long steps = cfg.train.joint_steps;

  // One eligible unpaired utterance for the periodic GRL audit.
  const Utterance* audit_utt = nullptr;
  if (flags.use_adversarial_ctc && flags.lambda_grl == 1.0) {
    for (const auto& u : train_utts)
      if (u.condition_class == corpus::ConditionClass::kUnpairedNoisy &&
          nn::ctc_min_frames(u.transcript_chars) <= u.frames()) {
        audit_utt = &u;
        break;
      }
  }

  StageOutcome outcome;
  double best_val = std::numeric_limits<double>::infinity();
  auto run_validation = [&](long step) {
    auto means = evaluate_losses(tts, store, held_out, cfg.train.weights, flags,
                                 log_floor, log_ceil);
    for (const auto& [name, value] : means) log.log(step, "val_" + name, value);
    if (audit_utt) {
      if (!grl_gradient_audit(tts, store, *audit_utt, log_floor))
        throw Error("joint: GRL gradient audit failed");
      log.log(step, "grl_audit_ok", 1.0);
    }
    if (means.at("mel_mae") < best_val) {
      best_val = means.at("mel_mae");
      model::save_checkpoint((fs::path(stage_dir) / "ckpt_best.bin").string(),
                             store, &opt, step, ckpt_config);
    }
    return means;
  };

  for (long step = start_step; step < steps; ++step) {
    if (step % cfg.train.val_interval == 0) {
      auto means = run_validation(step);
      if (step == 0) outcome.initial_validation = means;
    }

    const auto indices = step_batch_indices(cfg.seed, 0xE2, step, B,
                                            static_cast<int>(train_utts.size()));
    Tape t;
    Binder bind(t, store, true, trainable);
    TermAccumulator acc;
    std::vector<V> totals;
    for (std::size_t j = 0; j < indices.size(); ++j) {
      const Utterance& utt = train_utts[static_cast<std::size_t>(indices[j])];
      auto drop_rng = core::Rng::derive(
          cfg.seed, {0xD0u, static_cast<std::uint64_t>(step), j});
      auto out =
          tts.train_forward(t, bind, utt, flags, true, &drop_rng,
                            /*update_bn=*/!flags.fix_extractor);
      auto ul = utterance_loss(t, out, utt, cfg.train.weights, log_floor, log_ceil);
      totals.push_back(ul.total);
      acc.add(t, ul);
    }
    t.backward(nn::weighted_sum(t, totals, std::vector<double>(totals.size(), 1.0 / B)));
    opt.apply(store, bind.take_gradients());
    acc.log_means(log, step, B);

    if ((step + 1) % cfg.train.checkpoint_interval == 0)
      model::save_checkpoint(
          (fs::path(stage_dir) / ("ckpt_step" + std::to_string(step + 1) + ".bin"))
              .string(),
          store, &opt, step + 1, ckpt_config);
  }

  outcome.final_validation = run_validation(steps);
  outcome.steps_run = steps - start_step;
  outcome.final_checkpoint = (fs::path(stage_dir) / "ckpt_final.bin").string();
  model::save_checkpoint(outcome.final_checkpoint, store, &opt, steps, ckpt_config);
  return outcome;
}

}  // namespace cleartts::train
