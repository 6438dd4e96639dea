/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cmath>
#include <vector>

#include "cleartts/corpus/types.hpp"
#include "cleartts/model/backbone.hpp"
#include "cleartts/model/noise.hpp"

namespace cleartts::model {

struct TrainFlags {
  double lambda_grl = 1.0;
  bool use_adversarial_ctc = true;
  bool fix_extractor = false;
};

// The full acoustic model: backbone plus noise condition module. The noise
// encoder input routing is normative: paired utterances use the ground-truth
// noise mel, unpaired use the extractor output, clean (and inference) use
// silence of matching length.
class TtsModel {
 public:
  TtsModel(const ModelConfig& cfg, double log_floor)
      : cfg_(cfg), log_floor_(log_floor), backbone_(cfg), extractor_(cfg),
        noise_encoder_(cfg), ctc_head_(cfg) {}

  void register_params(nn::ParamStore& store, std::uint64_t seed) const {
    backbone_.register_params(store, seed);
    extractor_.register_params(store, seed);
    noise_encoder_.register_params(store, seed);
    ctc_head_.register_params(store, seed);
  }

  struct ForwardOutputs {
    V mel_pred{};       // [T, mel]
    V log_dur_pred{};   // [L, 1]
    V pitch_pred{};     // [T, 1]
    V extracted{};      // extractor output when it ran
    V adv_ctc{};        // adversarial CTC loss node when eligible
    bool adv_ctc_skipped = false;  // transcript unreachable in T frames
    int frames = 0;
  };

  // Teacher-forced training/validation graph for one utterance.
  ForwardOutputs train_forward(Tape& t, nn::Binder& p, const corpus::Utterance& utt,
                               const TrainFlags& flags, bool training,
                               core::Rng* drop_rng, bool update_bn) const {
    utt.validate();
    const int T = utt.frames();
    ForwardOutputs out;
    out.frames = T;

    V h = backbone_.encode_phonemes(t, p, utt.phoneme_ids, training, drop_rng);
    h = backbone_.add_speaker(t, p, h, utt.speaker_id);
    out.log_dur_pred = backbone_.predict_log_durations(t, p, h, training, drop_rng);
    V hf = length_regulate(t, h, utt.durations);

    const bool unpaired = utt.condition_class == corpus::ConditionClass::kUnpairedNoisy;
    const bool paired = utt.condition_class == corpus::ConditionClass::kPairedNoisy;
    const bool want_adv = unpaired && flags.use_adversarial_ctc;
    const bool need_extractor =
        paired || (unpaired && (cfg_.granularity != Granularity::kNone || want_adv));
    if (need_extractor) {
      // The input to extraction is the (noisy) target mel itself.
      V noisy = nn::constant(t, utt.mel.values);
      // A frozen extractor runs in eval mode: parameters bind as constants
      // via the trainer's filter and BN buffers must not drift either.
      const bool ext_training = training && !flags.fix_extractor;
      out.extracted = extractor_.forward(t, p, noisy, log_floor_, ext_training,
                                         ext_training && update_bn);
    }

    V cond_input{};
    switch (utt.condition_class) {
      case corpus::ConditionClass::kClean:
        cond_input = nn::constant(t, silence_values(T));
        break;
      case corpus::ConditionClass::kPairedNoisy:
        cond_input = nn::constant(t, utt.noise_mel->values);
        break;
      case corpus::ConditionClass::kUnpairedNoisy:
        cond_input = out.extracted;
        break;
    }
    V cond = noise_encoder_.forward(t, p, cond_input, cfg_.granularity, T);
    V h_cond = nn::add(t, hf, cond);

    out.pitch_pred = backbone_.predict_pitch(t, p, h_cond, training, drop_rng);
    V h_pitched = backbone_.add_pitch(t, p, h_cond, utt.pitch.f0);
    out.mel_pred = backbone_.decode_mel(t, p, h_pitched, training, drop_rng);

    if (want_adv) {
      if (nn::ctc_min_frames(utt.transcript_chars) <= T) {
        out.adv_ctc = ctc_head_.loss(t, p, out.extracted, utt.transcript_chars,
                                     flags.lambda_grl, training, drop_rng);
      } else {
        out.adv_ctc_skipped = true;
      }
    }
    return out;
  }

  struct InferenceRequest {
    std::vector<int> phoneme_ids;
    int speaker_id = 0;
    std::vector<int> duration_override;  // empty: use predicted durations
  };

  struct InferenceResult {
    Tensor mel;                       // [T, mel]
    std::vector<int> durations;
    std::vector<double> f0;
    Tensor noise_encoder_input;       // the silence mel that conditioned it
  };

  // Silence-conditioned synthesis; deterministic given parameters.
  InferenceResult infer(nn::ParamStore& store, const InferenceRequest& req) const {
    Tape t;
    nn::Binder p(t, store, /*training=*/false);
    V h = backbone_.encode_phonemes(t, p, req.phoneme_ids, false, nullptr);
    h = backbone_.add_speaker(t, p, h, req.speaker_id);

    std::vector<int> durations = req.duration_override;
    if (durations.empty()) {
      V logdur = backbone_.predict_log_durations(t, p, h, false, nullptr);
      durations = durations_from_log(t.val(logdur).v);
    } else if (durations.size() != req.phoneme_ids.size()) {
      throw InvalidInputError("infer: duration override length mismatch");
    }

    V hf = length_regulate(t, h, durations);
    const int T = t.val(hf).dim(0);

    InferenceResult res;
    res.durations = durations;
    res.noise_encoder_input = silence_values(T);
    V cond = noise_encoder_.forward(t, p, nn::constant(t, res.noise_encoder_input),
                                    cfg_.granularity, T);
    V h_cond = nn::add(t, hf, cond);

    V pitch = backbone_.predict_pitch(t, p, h_cond, false, nullptr);
    res.f0.resize(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) {
      const double f = std::expm1(t.val(pitch).at(i, 0));
      res.f0[static_cast<std::size_t>(i)] =
          std::clamp(f, 0.0, cfg_.pitch_fmax_hz);
    }
    V h_pitched = backbone_.add_pitch(t, p, h_cond, res.f0);
    res.mel = t.val(backbone_.decode_mel(t, p, h_pitched, false, nullptr));
    return res;
  }

  // Constant silence mel of the configured log floor, [frames, mel_bins].
  Tensor silence_values(int frames) const {
    return Tensor::full({frames, cfg_.mel_bins}, log_floor_);
  }

  const ModelConfig& config() const { return cfg_; }
  const TtsBackbone& backbone() const { return backbone_; }
  const NoiseExtractor& extractor() const { return extractor_; }
  const NoiseEncoder& noise_encoder() const { return noise_encoder_; }
  const AdversarialCtcHead& ctc_head() const { return ctc_head_; }
  double log_floor() const { return log_floor_; }

 private:
  ModelConfig cfg_;
  double log_floor_;
  TtsBackbone backbone_;
  NoiseExtractor extractor_;
  NoiseEncoder noise_encoder_;
  AdversarialCtcHead ctc_head_;
};

}  // namespace cleartts::model
