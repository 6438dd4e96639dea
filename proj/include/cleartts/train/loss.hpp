/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cmath>
#include <map>
#include <string>

#include "cleartts/model/tts_model.hpp"
#include "cleartts/nn/ssim.hpp"

namespace cleartts::train {

using model::TtsModel;
using nn::Tape;
using nn::V;

struct LossWeights {
  double mel = 1.0;
  double duration = 1.0;
  double pitch = 1.0;
  double extractor = 1.0;
  double adversarial = 1.0;
};

// Term names used in loss logs and breakdowns.
inline const std::vector<std::string>& loss_term_names() {
  static const std::vector<std::string> names = {
      "mel_mae", "mel_mssim", "dur_mse", "pitch_mae", "ext_mae", "adv_ctc"};
  return names;
}

inline double term_weight(const LossWeights& w, const std::string& term) {
  if (term == "mel_mae" || term == "mel_mssim") return w.mel;
  if (term == "dur_mse") return w.duration;
  if (term == "pitch_mae") return w.pitch;
  if (term == "ext_mae") return w.extractor;
  if (term == "adv_ctc") return w.adversarial;
  throw Error("unknown loss term " + term);
}

struct UtteranceLoss {
  V total{};
  std::map<std::string, V> terms;  // only the terms present for this class
  bool adv_skipped = false;
};

// Duration targets in the log(d + 1) domain, [L, 1].
inline core::Tensor log_duration_targets(const std::vector<int>& durations) {
  core::Tensor t({static_cast<int>(durations.size()), 1});
  for (std::size_t i = 0; i < durations.size(); ++i)
    t.v[i] = std::log1p(static_cast<double>(durations[i]));
  return t;
}

// Pitch targets in the log(1 + f0) domain, [T, 1].
inline core::Tensor log_pitch_targets(const std::vector<double>& f0) {
  core::Tensor t({static_cast<int>(f0.size()), 1});
  for (std::size_t i = 0; i < f0.size(); ++i) t.v[i] = std::log1p(f0[i]);
  return t;
}

// Builds the weighted per-utterance loss over a completed forward pass.
// Terms with no eligible data for this utterance are simply absent; the
// batch mean treats them as zero.
inline UtteranceLoss utterance_loss(Tape& t, const TtsModel::ForwardOutputs& out,
                                    const corpus::Utterance& utt,
                                    const LossWeights& weights, double log_floor,
                                    double log_ceil) {
  UtteranceLoss loss;
  loss.adv_skipped = out.adv_ctc_skipped;

  V mel_target = nn::constant(t, utt.mel.values);
  loss.terms["mel_mae"] = nn::mae_loss(t, out.mel_pred, mel_target);
  loss.terms["mel_mssim"] =
      nn::mssim_loss(t, out.mel_pred, mel_target, log_floor, log_ceil);
  loss.terms["dur_mse"] = nn::mse_loss(
      t, out.log_dur_pred, nn::constant(t, log_duration_targets(utt.durations)));
  loss.terms["pitch_mae"] = nn::mae_loss(
      t, out.pitch_pred, nn::constant(t, log_pitch_targets(utt.pitch.f0)));
  if (utt.condition_class == corpus::ConditionClass::kPairedNoisy) {
    loss.terms["ext_mae"] =
        nn::mae_loss(t, out.extracted, nn::constant(t, utt.noise_mel->values));
  }
  if (out.adv_ctc.valid()) loss.terms["adv_ctc"] = out.adv_ctc;

  std::vector<V> vs;
  std::vector<double> ws;
  for (const auto& [name, node] : loss.terms) {
    vs.push_back(node);
    ws.push_back(term_weight(weights, name));
  }
  loss.total = nn::weighted_sum(t, vs, ws);
  return loss;
}

}  // namespace cleartts::train
