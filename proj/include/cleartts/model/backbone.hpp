/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cleartts/model/config.hpp"
#include "cleartts/nn/transformer.hpp"

namespace cleartts::model {

using nn::Binder;
using nn::ParamStore;
using nn::Tape;
using nn::V;
using core::Tensor;

// Expands durations [d_0, ..., d_{L-1}] into the row-index map used by the
// length regulator: index i repeated d_i times, order preserved.
inline std::vector<int> duration_index_map(const std::vector<int>& durations) {
  std::vector<int> idx;
  long long total = 0;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] < 0)
      throw InvalidInputError("length_regulate: negative duration");
    total += durations[i];
    for (int r = 0; r < durations[i]; ++r) idx.push_back(static_cast<int>(i));
  }
  if (total < 1)
    throw InvalidInputError("length_regulate: durations sum to zero");
  return idx;
}

// Row i of h repeated durations[i] times; exact copies, no interpolation.
inline V length_regulate(Tape& t, V h, const std::vector<int>& durations) {
  if (t.val(h).dim(0) != static_cast<int>(durations.size()))
    throw InvalidInputError("length_regulate: phoneme/duration length mismatch");
  return nn::gather_rows(t, h, duration_index_map(durations));
}

// Inference rounding for log-domain duration predictions: never drops a
// phoneme (floor at one frame). Accepts any contiguous double container.
template <typename Vec>
inline std::vector<int> durations_from_log(const Vec& log_pred) {
  std::vector<int> out(log_pred.size());
  for (std::size_t i = 0; i < log_pred.size(); ++i)
    out[i] = std::max(1, static_cast<int>(std::lround(std::exp(log_pred[i]) - 1.0)));
  return out;
}

// Two conv1d + LN layers and a scalar linear head; the duration and pitch
// predictors share this structure.
class VariancePredictor {
 public:
  VariancePredictor(std::string prefix, int d_model, double dropout)
      : prefix_(std::move(prefix)), d_(d_model), dropout_(dropout) {}

  void register_params(ParamStore& store, std::uint64_t seed) const {
    for (int layer = 1; layer <= 2; ++layer) {
      const std::string cw = prefix_ + "conv" + std::to_string(layer) + "_w";
      auto rng = nn::init_rng(seed, cw);
      store.add(cw, nn::xavier_uniform({d_, d_, 3}, d_ * 3, d_ * 3, rng));
      store.add(prefix_ + "conv" + std::to_string(layer) + "_b", Tensor::zeros({d_}));
      store.add(prefix_ + "ln" + std::to_string(layer) + "_g", Tensor::full({d_}, 1.0));
      store.add(prefix_ + "ln" + std::to_string(layer) + "_b", Tensor::zeros({d_}));
    }
    auto rng = nn::init_rng(seed, prefix_ + "out_w");
    store.add(prefix_ + "out_w", nn::xavier_uniform({d_, 1}, d_, 1, rng));
    store.add(prefix_ + "out_b", Tensor::zeros({1}));
  }

  // Returns one prediction per input row, shape [T, 1].
  V forward(Tape& t, Binder& p, V h, bool training, core::Rng* drop_rng) const {
    V x = h;
    for (int layer = 1; layer <= 2; ++layer) {
      const std::string n = std::to_string(layer);
      x = nn::relu(t, nn::conv1d_same(t, x, p(prefix_ + "conv" + n + "_w"),
                                      p(prefix_ + "conv" + n + "_b")));
      x = nn::layer_norm(t, x, p(prefix_ + "ln" + n + "_g"),
                         p(prefix_ + "ln" + n + "_b"));
      if (training && drop_rng) x = nn::dropout(t, x, dropout_, *drop_rng);
    }
    return nn::add_bias_rows(t, nn::matmul(t, x, p(prefix_ + "out_w")),
                             p(prefix_ + "out_b"));
  }

 private:
  std::string prefix_;
  int d_;
  double dropout_;
};

// Phoneme encoder, speaker embedding, duration/pitch predictors, pitch
// embedding, and mel decoder. The noise condition is added by the caller
// between length regulation and the pitch predictor.
class TtsBackbone {
 public:
  explicit TtsBackbone(const ModelConfig& cfg)
      : cfg_(cfg),
        encoder_("encoder/", cfg.n_layers,
                 {cfg.d_model, cfg.ffn, cfg.n_heads, cfg.dropout}),
        decoder_("decoder/", cfg.n_layers,
                 {cfg.d_model, cfg.ffn, cfg.n_heads, cfg.dropout}),
        duration_("dur/", cfg.d_model, cfg.dropout),
        pitch_pred_("pitch_pred/", cfg.d_model, cfg.dropout),
        quantizer_(cfg.pitch_bins, cfg.pitch_fmin_hz, cfg.pitch_fmax_hz) {
    if (cfg.phoneme_vocab <= 0 || cfg.n_speakers <= 0)
      throw ConfigError("backbone: phoneme_vocab and n_speakers must be set");
  }

  void register_params(ParamStore& store, std::uint64_t seed) const {
    {
      auto rng = nn::init_rng(seed, "encoder/emb");
      store.add("encoder/emb",
                nn::normal_init({cfg_.phoneme_vocab, cfg_.d_model},
                                1.0 / std::sqrt(cfg_.d_model), rng));
    }
    {
      auto rng = nn::init_rng(seed, "spk/emb");
      store.add("spk/emb", nn::normal_init({cfg_.n_speakers, cfg_.d_model},
                                           1.0 / std::sqrt(cfg_.d_model), rng));
    }
    {
      auto rng = nn::init_rng(seed, "pitch/emb");
      store.add("pitch/emb", nn::normal_init({cfg_.pitch_bins, cfg_.d_model},
                                             1.0 / std::sqrt(cfg_.d_model), rng));
    }
    encoder_.register_params(store, seed);
    decoder_.register_params(store, seed);
    duration_.register_params(store, seed);
    pitch_pred_.register_params(store, seed);
    {
      auto rng = nn::init_rng(seed, "decoder/out_w");
      store.add("decoder/out_w",
                nn::xavier_uniform({cfg_.d_model, cfg_.mel_bins}, cfg_.d_model,
                                   cfg_.mel_bins, rng));
      store.add("decoder/out_b", Tensor::zeros({cfg_.mel_bins}));
    }
  }

  // Embedding lookup + positional encoding + encoder stack; [L, d].
  V encode_phonemes(Tape& t, Binder& p, const std::vector<int>& phoneme_ids,
                    bool training, core::Rng* drop_rng) const {
    if (phoneme_ids.empty())
      throw InvalidInputError("encode_phonemes: empty phoneme sequence");
    for (int id : phoneme_ids)
      if (id < 0 || id >= cfg_.phoneme_vocab)
        throw InvalidInputError("encode_phonemes: phoneme id " +
                                std::to_string(id) + " out of vocabulary");
    const int L = static_cast<int>(phoneme_ids.size());
    V x = nn::gather_rows(t, p("encoder/emb"), phoneme_ids);
    x = nn::add(t, x, nn::constant(t, nn::positional_encoding(L, cfg_.d_model)));
    return encoder_.forward(t, p, x, {}, training, drop_rng);
  }

  // Speaker identity added to the encoder output, phoneme resolution.
  V add_speaker(Tape& t, Binder& p, V h, int speaker_id) const {
    if (speaker_id < 0 || speaker_id >= cfg_.n_speakers)
      throw InvalidInputError("add_speaker: speaker id out of range");
    V row = nn::gather_rows(t, p("spk/emb"), {speaker_id});
    return nn::add(t, h, nn::broadcast_row(t, row, t.val(h).dim(0)));
  }

  // Per-phoneme log(d + 1) predictions, [L, 1].
  V predict_log_durations(Tape& t, Binder& p, V h, bool training,
                          core::Rng* drop_rng) const {
    return duration_.forward(t, p, h, training, drop_rng);
  }

  // Per-frame log(1 + f0) predictions, [T, 1]. Runs on the hidden sequence
  // that already carries the noise condition.
  V predict_pitch(Tape& t, Binder& p, V h_cond, bool training,
                  core::Rng* drop_rng) const {
    return pitch_pred_.forward(t, p, h_cond, training, drop_rng);
  }

  // Adds the quantized-pitch embedding to the hidden sequence.
  V add_pitch(Tape& t, Binder& p, V h_cond, const std::vector<double>& f0) const {
    const int T = t.val(h_cond).dim(0);
    if (static_cast<int>(f0.size()) != T)
      throw InvalidInputError("add_pitch: pitch length mismatch");
    std::vector<int> bins(f0.size());
    for (std::size_t i = 0; i < f0.size(); ++i) bins[i] = quantizer_.bin_of(f0[i]);
    return nn::add(t, h_cond, nn::gather_rows(t, p("pitch/emb"), bins));
  }

  // Decoder stack + linear projection to mel bins; [T, mel_bins].
  V decode_mel(Tape& t, Binder& p, V h, bool training, core::Rng* drop_rng) const {
    const int T = t.val(h).dim(0);
    V x = nn::add(t, h, nn::constant(t, nn::positional_encoding(T, cfg_.d_model)));
    x = decoder_.forward(t, p, x, {}, training, drop_rng);
    return nn::add_bias_rows(t, nn::matmul(t, x, p("decoder/out_w")),
                             p("decoder/out_b"));
  }

  const PitchQuantizer& quantizer() const { return quantizer_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  nn::TransformerStack encoder_;
  nn::TransformerStack decoder_;
  VariancePredictor duration_;
  VariancePredictor pitch_pred_;
  PitchQuantizer quantizer_;
};

}  // namespace cleartts::model
