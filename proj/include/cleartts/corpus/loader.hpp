/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cleartts/corpus/manifest.hpp"
#include "cleartts/model/config.hpp"

namespace cleartts::corpus {

// Feature extraction at load time keeps the manifest small and guarantees
// features always match the manifest's frontend header.
inline Utterance load_utterance(const Manifest& m, const ManifestEntry& e) {
  namespace fs = std::filesystem;
  const auto& cfg = m.header.frontend;

  Utterance utt;
  utt.id = e.id;
  utt.speaker = e.speaker;
  utt.speaker_id = m.header.speaker_id(e.speaker);
  utt.condition_class = e.condition_class;
  utt.durations = e.durations;
  for (const auto& symbol : e.phonemes)
    utt.phoneme_ids.push_back(m.header.phoneme_id(symbol));
  utt.transcript_chars = model::transcript_to_ids(e.transcript);

  const auto wav = audio::read_wav((fs::path(m.dir) / e.audio).string());
  utt.mel = audio::mel_spectrogram(wav, cfg);
  utt.pitch = audio::extract_f0(wav, cfg);
  if (e.noise_audio) {
    const auto noise = audio::read_wav((fs::path(m.dir) / *e.noise_audio).string());
    utt.noise_mel = audio::mel_spectrogram(noise, cfg);
  }
  utt.validate();
  return utt;
}

inline std::vector<Utterance> load_split(const Manifest& m, const std::string& split) {
  std::vector<Utterance> out;
  for (const auto& e : m.entries)
    if (e.split == split) out.push_back(load_utterance(m, e));
  return out;
}

}  // namespace cleartts::corpus
