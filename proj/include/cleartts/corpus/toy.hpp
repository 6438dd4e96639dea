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

#include "cleartts/audio/frontend.hpp"
#include "cleartts/core/rng.hpp"
#include "cleartts/model/config.hpp"

namespace cleartts::corpus {

namespace fs = std::filesystem;

// Desk-scale synthetic corpus: harmonic tones with per-phoneme pitch and
// amplitude patterns, so durations and transcripts are known exactly and a
// small model can fit the data within the acceptance budgets.
struct ToyConfig {
  int n_speakers = 4;
  int utterances_per_speaker = 4;
  int phoneme_vocab = 8;
  int min_phonemes = 3;
  int max_phonemes = 4;
  int min_dur_frames = 3;
  int max_dur_frames = 5;
  int n_noise_files = 4;
  double noise_seconds = 1.0;

  void validate() const {
    if (n_speakers < 1 || utterances_per_speaker < 1 || phoneme_vocab < 1 ||
        phoneme_vocab > 26)
      throw ConfigError("toy: bad corpus sizes (phoneme_vocab must be 1..26)");
    if (min_phonemes < 1 || max_phonemes < min_phonemes)
      throw ConfigError("toy: bad phoneme count range");
    if (min_dur_frames < 1 || max_dur_frames < min_dur_frames)
      throw ConfigError("toy: bad duration range");
    if (n_noise_files < 1 || noise_seconds <= 0.0)
      throw ConfigError("toy: bad noise bank settings");
  }

  nlohmann::json to_json() const {
    return {{"n_speakers", n_speakers},
            {"utterances_per_speaker", utterances_per_speaker},
            {"phoneme_vocab", phoneme_vocab},
            {"min_phonemes", min_phonemes},
            {"max_phonemes", max_phonemes},
            {"min_dur_frames", min_dur_frames},
            {"max_dur_frames", max_dur_frames},
            {"n_noise_files", n_noise_files},
            {"noise_seconds", noise_seconds}};
  }

  static ToyConfig from_json(const nlohmann::json& j) {
    model::check_allowed_keys(j,
                              {"n_speakers", "utterances_per_speaker",
                               "phoneme_vocab", "min_phonemes", "max_phonemes",
                               "min_dur_frames", "max_dur_frames",
                               "n_noise_files", "noise_seconds"},
                              "corpus.toy");
    ToyConfig c;
    c.n_speakers = j.value("n_speakers", c.n_speakers);
    c.utterances_per_speaker =
        j.value("utterances_per_speaker", c.utterances_per_speaker);
    c.phoneme_vocab = j.value("phoneme_vocab", c.phoneme_vocab);
    c.min_phonemes = j.value("min_phonemes", c.min_phonemes);
    c.max_phonemes = j.value("max_phonemes", c.max_phonemes);
    c.min_dur_frames = j.value("min_dur_frames", c.min_dur_frames);
    c.max_dur_frames = j.value("max_dur_frames", c.max_dur_frames);
    c.n_noise_files = j.value("n_noise_files", c.n_noise_files);
    c.noise_seconds = j.value("noise_seconds", c.noise_seconds);
    c.validate();
    return c;
  }
};

// A source utterance before mixing: clean audio plus exact labels.
struct CleanItem {
  std::string id;
  std::string speaker;
  std::string wav_path;  // relative to the corpus directory
  std::vector<std::string> phonemes;
  std::vector<int> durations;
  std::string transcript;
};

struct ToyCorpus {
  std::vector<CleanItem> items;
  std::vector<std::string> noise_files;  // relative paths
  std::vector<std::string> phoneme_symbols;
};

namespace detail {

// Phoneme timbre: fundamental plus two harmonics with id-dependent mix.
inline double phoneme_f0(int phoneme, int speaker) {
  return 110.0 * std::pow(2.0, phoneme / 8.0) * (1.0 + 0.06 * speaker);
}

inline audio::Waveform synthesize_phonemes(const std::vector<int>& phonemes,
                                           const std::vector<int>& durations,
                                           int speaker,
                                           const audio::FrontendConfig& cfg) {
  int total_frames = 0;
  for (int d : durations) total_frames += d;
  const std::size_t n =
      static_cast<std::size_t>((total_frames - 1) * cfg.hop_samples);
  audio::Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.assign(std::max<std::size_t>(n, 1), 0.0);

  double phase1 = 0.0, phase2 = 0.0, phase3 = 0.0;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < phonemes.size(); ++i) {
    const int p = phonemes[i];
    const double f0 = phoneme_f0(p, speaker);
    const double amp = 0.22 + 0.04 * (p % 3);
    const double a2 = 0.15 + 0.05 * (p % 2);
    const std::size_t seg =
        static_cast<std::size_t>(durations[i]) * cfg.hop_samples;
    const double w1 = 2.0 * 3.14159265358979323846 * f0 / cfg.sample_rate;
    for (std::size_t s = 0; s < seg && cursor < w.samples.size(); ++s, ++cursor) {
      // Short attack/decay inside each segment softens the boundaries.
      const double pos = static_cast<double>(s) / static_cast<double>(seg);
      const double env = std::min({1.0, pos / 0.1, (1.0 - pos) / 0.1});
      phase1 += w1;
      phase2 += 2.0 * w1;
      phase3 += 3.0 * w1;
      w.samples[cursor] = amp * env *
                          (0.7 * std::sin(phase1) + a2 * std::sin(phase2) +
                           0.1 * std::sin(phase3));
    }
  }
  return w;
}

inline audio::Waveform colored_noise(double seconds, double alpha, double amp,
                                     core::Rng& rng,
                                     const audio::FrontendConfig& cfg) {
  audio::Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.resize(static_cast<std::size_t>(seconds * cfg.sample_rate));
  double state = 0.0;
  for (auto& s : w.samples) {
    state = alpha * state + (1.0 - alpha) * rng.uniform(-1.0, 1.0);
    s = amp * state;
  }
  // One-pole filters attenuate; renormalize to the requested amplitude.
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::fabs(s));
  if (peak > 0.0)
    for (auto& s : w.samples) s *= amp / peak;
  return w;
}

}  // namespace detail

// Writes clean WAVs and a noise bank under out_dir/audio and returns the
// item list. Bit-identical for identical (cfg, frontend, seed).
inline ToyCorpus generate_toy_corpus(const ToyConfig& cfg,
                                     const audio::FrontendConfig& frontend,
                                     const std::string& out_dir,
                                     std::uint64_t seed) {
  cfg.validate();
  frontend.validate();
  fs::create_directories(fs::path(out_dir) / "audio" / "clean");
  fs::create_directories(fs::path(out_dir) / "audio" / "noise_bank");

  ToyCorpus corpus;
  for (int p = 0; p < cfg.phoneme_vocab; ++p)
    corpus.phoneme_symbols.push_back("p" + std::to_string(p));

  for (int s = 0; s < cfg.n_speakers; ++s) {
    const std::string speaker = "spk" + std::to_string(s);
    for (int u = 0; u < cfg.utterances_per_speaker; ++u) {
      auto rng = core::Rng::derive(seed, {0x70u, static_cast<std::uint64_t>(s),
                                          static_cast<std::uint64_t>(u)});
      const int n_ph =
          static_cast<int>(rng.uniform_int(cfg.min_phonemes, cfg.max_phonemes));
      std::vector<int> phoneme_ids(static_cast<std::size_t>(n_ph));
      std::vector<int> durations(static_cast<std::size_t>(n_ph));
      for (int i = 0; i < n_ph; ++i) {
        phoneme_ids[static_cast<std::size_t>(i)] =
            static_cast<int>(rng.uniform_int(0, cfg.phoneme_vocab - 1));
        durations[static_cast<std::size_t>(i)] = static_cast<int>(
            rng.uniform_int(cfg.min_dur_frames, cfg.max_dur_frames));
      }

      CleanItem item;
      item.id = speaker + "_utt" + std::to_string(u);
      item.speaker = speaker;
      item.wav_path = "audio/clean/" + item.id + ".wav";
      for (int id : phoneme_ids) {
        item.phonemes.push_back("p" + std::to_string(id));
        item.transcript += static_cast<char>('a' + id);
      }
      item.durations = durations;
      const auto wav = detail::synthesize_phonemes(phoneme_ids, durations, s,
                                                   frontend);
      audio::write_wav((fs::path(out_dir) / item.wav_path).string(), wav);
      corpus.items.push_back(std::move(item));
    }
  }

  for (int k = 0; k < cfg.n_noise_files; ++k) {
    auto rng = core::Rng::derive(seed, {0x71u, static_cast<std::uint64_t>(k)});
    const double alpha = 0.75 + 0.2 * (static_cast<double>(k) /
                                       std::max(1, cfg.n_noise_files - 1));
    const auto wav =
        detail::colored_noise(cfg.noise_seconds, alpha, 0.3, rng, frontend);
    const std::string rel = "audio/noise_bank/noise" + std::to_string(k) + ".wav";
    audio::write_wav((fs::path(out_dir) / rel).string(), wav);
    corpus.noise_files.push_back(rel);
  }
  return corpus;
}

}  // namespace cleartts::corpus
