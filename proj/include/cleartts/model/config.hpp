/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <json.hpp>
#include <set>
#include <string>

#include "cleartts/audio/frontend.hpp"
#include "cleartts/common.hpp"

namespace cleartts::model {

using nlohmann::json;

// Rejects keys outside the supported schema; typos fail loudly.
inline void check_allowed_keys(const json& obj, const std::set<std::string>& allowed,
                               const std::string& ctx) {
  if (!obj.is_object()) throw ConfigError(ctx + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
}

enum class Granularity { kFrame, kUtterance, kNone };

inline std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::kFrame: return "frame";
    case Granularity::kUtterance: return "utterance";
    case Granularity::kNone: return "none";
  }
  throw Error("unreachable");
}

inline Granularity granularity_from_string(const std::string& s) {
  if (s == "frame") return Granularity::kFrame;
  if (s == "utterance") return Granularity::kUtterance;
  if (s == "none") return Granularity::kNone;
  throw ConfigError("granularity must be frame|utterance|none, got '" + s + "'");
}

// Character inventory for the CTC head: blank(0), 'a'..'z', space, apostrophe.
constexpr int kCtcBlank = 0;
constexpr int kCharVocab = 29;

inline int char_to_id(char c) {
  if (c >= 'a' && c <= 'z') return 1 + (c - 'a');
  if (c == ' ') return 27;
  if (c == '\'') return 28;
  throw InvalidInputError(std::string("unsupported transcript character '") + c + "'");
}

inline std::vector<int> transcript_to_ids(const std::string& text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(char_to_id(c));
  return ids;
}

struct ModelConfig {
  int d_model = 256;
  int n_layers = 4;  // per transformer stack
  int ffn = 1024;
  int n_heads = 2;
  int mel_bins = 80;
  int pitch_bins = 256;
  double dropout = 0.1;
  int unet_base_channels = 32;
  int unet_depth = 4;
  int ctc_layers = 2;
  Granularity granularity = Granularity::kFrame;
  double pitch_fmin_hz = 50.0;
  double pitch_fmax_hz = 800.0;
  // Corpus-dependent sizes, fixed at prepare time.
  int phoneme_vocab = 0;
  int n_speakers = 0;

  void validate() const {
    if (d_model <= 0 || n_layers <= 0 || ffn <= 0 || n_heads <= 0 ||
        mel_bins <= 0 || pitch_bins <= 2 || unet_base_channels <= 0 ||
        unet_depth <= 0 || ctc_layers <= 0)
      throw ConfigError("model: sizes must be positive");
    if (d_model % n_heads != 0)
      throw ConfigError("model: d_model must divide by n_heads");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("model: dropout must be in [0, 1)");
  }

  json to_json() const {
    return json{{"d_model", d_model},
                {"n_layers", n_layers},
                {"ffn", ffn},
                {"n_heads", n_heads},
                {"mel_bins", mel_bins},
                {"pitch_bins", pitch_bins},
                {"dropout", dropout},
                {"unet_base_channels", unet_base_channels},
                {"unet_depth", unet_depth},
                {"ctc_layers", ctc_layers},
                {"granularity", to_string(granularity)},
                {"pitch_fmin_hz", pitch_fmin_hz},
                {"pitch_fmax_hz", pitch_fmax_hz},
                {"phoneme_vocab", phoneme_vocab},
                {"n_speakers", n_speakers}};
  }

  static ModelConfig from_json(const json& j) {
    check_allowed_keys(j,
                       {"d_model", "n_layers", "ffn", "n_heads", "mel_bins",
                        "pitch_bins", "dropout", "unet_base_channels",
                        "unet_depth", "ctc_layers", "granularity",
                        "pitch_fmin_hz", "pitch_fmax_hz", "phoneme_vocab",
                        "n_speakers"},
                       "model");
    ModelConfig c;
    c.d_model = j.value("d_model", c.d_model);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.ffn = j.value("ffn", c.ffn);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.mel_bins = j.value("mel_bins", c.mel_bins);
    c.pitch_bins = j.value("pitch_bins", c.pitch_bins);
    c.dropout = j.value("dropout", c.dropout);
    c.unet_base_channels = j.value("unet_base_channels", c.unet_base_channels);
    c.unet_depth = j.value("unet_depth", c.unet_depth);
    c.ctc_layers = j.value("ctc_layers", c.ctc_layers);
    if (j.contains("granularity"))
      c.granularity = granularity_from_string(j.at("granularity").get<std::string>());
    c.pitch_fmin_hz = j.value("pitch_fmin_hz", c.pitch_fmin_hz);
    c.pitch_fmax_hz = j.value("pitch_fmax_hz", c.pitch_fmax_hz);
    c.phoneme_vocab = j.value("phoneme_vocab", c.phoneme_vocab);
    c.n_speakers = j.value("n_speakers", c.n_speakers);
    c.validate();
    return c;
  }
};

inline json frontend_to_json(const audio::FrontendConfig& f) {
  return json{{"sample_rate", f.sample_rate}, {"win_samples", f.win_samples},
              {"hop_samples", f.hop_samples}, {"n_fft", f.n_fft},
              {"n_mels", f.n_mels},           {"fmin_hz", f.fmin_hz},
              {"fmax_hz", f.fmax_hz},         {"amp_floor", f.amp_floor},
              {"amp_ceil", f.amp_ceil},       {"f0_min_hz", f.f0_min_hz},
              {"f0_max_hz", f.f0_max_hz},
              {"voicing_threshold", f.voicing_threshold}};
}

inline audio::FrontendConfig frontend_from_json(const json& j) {
  check_allowed_keys(j,
                     {"sample_rate", "win_samples", "hop_samples", "n_fft",
                      "n_mels", "fmin_hz", "fmax_hz", "amp_floor", "amp_ceil",
                      "f0_min_hz", "f0_max_hz", "voicing_threshold"},
                     "frontend");
  audio::FrontendConfig f;
  f.sample_rate = j.value("sample_rate", f.sample_rate);
  f.win_samples = j.value("win_samples", f.win_samples);
  f.hop_samples = j.value("hop_samples", f.hop_samples);
  f.n_fft = j.value("n_fft", f.n_fft);
  f.n_mels = j.value("n_mels", f.n_mels);
  f.fmin_hz = j.value("fmin_hz", f.fmin_hz);
  f.fmax_hz = j.value("fmax_hz", f.fmax_hz);
  f.amp_floor = j.value("amp_floor", f.amp_floor);
  f.amp_ceil = j.value("amp_ceil", f.amp_ceil);
  f.f0_min_hz = j.value("f0_min_hz", f.f0_min_hz);
  f.f0_max_hz = j.value("f0_max_hz", f.f0_max_hz);
  f.voicing_threshold = j.value("voicing_threshold", f.voicing_threshold);
  f.validate();
  return f;
}

// Log-spaced pitch quantizer. Bin 0 is reserved for unvoiced frames; bins
// 1..pitch_bins-1 span [fmin, fmax] uniformly in log frequency.
struct PitchQuantizer {
  int bins;
  double fmin, fmax;

  PitchQuantizer(int bins_, double fmin_, double fmax_)
      : bins(bins_), fmin(fmin_), fmax(fmax_) {}

  int bin_of(double f0) const {
    if (f0 < fmin) return 0;
    const int voiced = bins - 1;
    const double u = (std::log(f0) - std::log(fmin)) /
                     (std::log(fmax) - std::log(fmin));
    const int b = 1 + static_cast<int>(std::floor(u * voiced));
    return std::clamp(b, 1, voiced);
  }

  double center_of(int bin) const {
    if (bin <= 0) return 0.0;
    const int voiced = bins - 1;
    const double u = (bin - 0.5) / voiced;
    return std::exp(std::log(fmin) + u * (std::log(fmax) - std::log(fmin)));
  }
};

}  // namespace cleartts::model
