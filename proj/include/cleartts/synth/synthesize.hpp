/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "cleartts/model/checkpoint.hpp"
#include "cleartts/model/tts_model.hpp"
#include "cleartts/synth/griffin_lim.hpp"

namespace cleartts::synth {

// A loaded checkpoint plus everything needed to run it.
struct LoadedModel {
  model::ModelConfig mcfg;
  audio::FrontendConfig frontend;
  std::vector<std::string> phoneme_symbols;
  std::vector<std::string> speakers;
  nn::ParamStore params;
  long step = 0;

  int phoneme_id(const std::string& symbol) const {
    for (std::size_t i = 0; i < phoneme_symbols.size(); ++i)
      if (phoneme_symbols[i] == symbol) return static_cast<int>(i);
    throw InvalidInputError("unknown phoneme symbol '" + symbol + "'");
  }

  int speaker_id(const std::string& name) const {
    if (name.empty()) return 0;
    for (std::size_t i = 0; i < speakers.size(); ++i)
      if (speakers[i] == name) return static_cast<int>(i);
    throw InvalidInputError("unknown speaker '" + name + "'");
  }

  model::TtsModel make_model() const {
    return model::TtsModel(mcfg, frontend.log_floor());
  }
};

inline LoadedModel load_model(const std::string& checkpoint_path) {
  auto ckpt = model::load_checkpoint(checkpoint_path);
  LoadedModel lm;
  try {
    lm.mcfg = model::ModelConfig::from_json(ckpt.config.at("model"));
    lm.frontend = model::frontend_from_json(ckpt.config.at("frontend"));
    lm.phoneme_symbols =
        ckpt.config.at("phoneme_symbols").get<std::vector<std::string>>();
    lm.speakers = ckpt.config.at("speakers").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint metadata incomplete: " + std::string(e.what()));
  }
  lm.step = ckpt.step;

  // Cross-check: the stored arrays must exactly cover this architecture.
  model::TtsModel tts(lm.mcfg, lm.frontend.log_floor());
  tts.register_params(lm.params, /*seed=*/0);
  model::apply_checkpoint_params(lm.params, ckpt.params);
  return lm;
}

struct SynthesisRequest {
  std::vector<std::string> phoneme_symbols;
  std::string speaker;                 // empty: first speaker
  std::vector<int> duration_override;  // empty: predicted durations
  int griffin_lim_iters = 60;
};

struct SynthesisResult {
  core::Tensor mel;  // [T, mel_bins]
  std::vector<int> durations;
  std::vector<double> f0;
  core::Tensor noise_encoder_input;  // silence mel actually used
  audio::Waveform wav;
};

inline SynthesisResult synthesize(LoadedModel& lm, const SynthesisRequest& req) {
  if (req.phoneme_symbols.empty())
    throw InvalidInputError("synthesize: empty phoneme sequence");
  model::TtsModel tts = lm.make_model();
  model::TtsModel::InferenceRequest ir;
  for (const auto& s : req.phoneme_symbols) ir.phoneme_ids.push_back(lm.phoneme_id(s));
  ir.speaker_id = lm.speaker_id(req.speaker);
  ir.duration_override = req.duration_override;

  auto inf = tts.infer(lm.params, ir);
  SynthesisResult res;
  res.mel = std::move(inf.mel);
  res.durations = std::move(inf.durations);
  res.f0 = std::move(inf.f0);
  res.noise_encoder_input = std::move(inf.noise_encoder_input);

  audio::MelSpectrogram mel;
  mel.values = res.mel;
  mel.hop_samples = lm.frontend.hop_samples;
  mel.win_samples = lm.frontend.win_samples;
  res.wav = griffin_lim(mel, lm.frontend, req.griffin_lim_iters);
  return res;
}

// Simple binary mel container ("MELB"): u32 version, i32 frames, i32 bins,
// little-endian doubles. Synthesized mels are stored in this format so runs
// can be compared byte for byte.
inline void save_mel(const std::string& path, const core::Tensor& mel) {
  if (mel.rank() != 2) throw InvalidInputError("save_mel: expects [T, M]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_mel: cannot open " + path);
  out.write("MELB", 4);
  const std::uint32_t version = 1;
  const std::int32_t T = mel.dim(0), M = mel.dim(1);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&T), 4);
  out.write(reinterpret_cast<const char*>(&M), 4);
  out.write(reinterpret_cast<const char*>(mel.v.data()),
            static_cast<std::streamsize>(mel.v.size() * sizeof(double)));
  if (!out) throw DataError("save_mel: write failed: " + path);
}

inline core::Tensor load_mel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_mel: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "MELB")
    throw DataError("load_mel: bad magic in " + path);
  std::uint32_t version = 0;
  std::int32_t T = 0, M = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&T), 4);
  in.read(reinterpret_cast<char*>(&M), 4);
  if (!in || version != 1 || T < 1 || M < 1)
    throw DataError("load_mel: bad header in " + path);
  core::Tensor mel({T, M});
  in.read(reinterpret_cast<char*>(mel.v.data()),
          static_cast<std::streamsize>(mel.v.size() * sizeof(double)));
  if (!in) throw DataError("load_mel: truncated data in " + path);
  return mel;
}

}  // namespace cleartts::synth
