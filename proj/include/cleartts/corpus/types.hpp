/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cleartts/audio/frontend.hpp"
#include "cleartts/common.hpp"

namespace cleartts::corpus {

enum class ConditionClass { kClean, kPairedNoisy, kUnpairedNoisy };

inline std::string to_string(ConditionClass c) {
  switch (c) {
    case ConditionClass::kClean: return "clean";
    case ConditionClass::kPairedNoisy: return "paired_noisy";
    case ConditionClass::kUnpairedNoisy: return "unpaired_noisy";
  }
  throw Error("unreachable");
}

inline ConditionClass condition_class_from_string(const std::string& s) {
  if (s == "clean") return ConditionClass::kClean;
  if (s == "paired_noisy") return ConditionClass::kPairedNoisy;
  if (s == "unpaired_noisy") return ConditionClass::kUnpairedNoisy;
  throw DataError("unknown condition class '" + s + "'");
}

// One fully loaded training record with features extracted.
struct Utterance {
  std::string id;
  std::string speaker;
  int speaker_id = 0;
  ConditionClass condition_class = ConditionClass::kClean;
  std::vector<int> phoneme_ids;
  std::vector<int> durations;        // frames per phoneme, sums to mel frames
  std::vector<int> transcript_chars; // CTC target ids
  audio::MelSpectrogram mel;
  std::optional<audio::MelSpectrogram> noise_mel;  // paired_noisy only
  audio::PitchContour pitch;

  int frames() const { return mel.frames(); }

  // The invariants every loaded utterance must satisfy.
  void validate() const {
    const int T = frames();
    if (T < 1) throw DataError("utterance " + id + ": empty mel");
    const long long dur_sum =
        std::accumulate(durations.begin(), durations.end(), 0LL);
    if (durations.size() != phoneme_ids.size())
      throw DataError("utterance " + id + ": phoneme/duration count mismatch");
    if (dur_sum != T)
      throw DataError("utterance " + id + ": durations sum to " +
                      std::to_string(dur_sum) + " but mel has " +
                      std::to_string(T) + " frames");
    for (int d : durations)
      if (d < 0) throw DataError("utterance " + id + ": negative duration");
    if (dur_sum < 1) throw DataError("utterance " + id + ": zero total duration");
    const bool paired = condition_class == ConditionClass::kPairedNoisy;
    if (paired != noise_mel.has_value())
      throw DataError("utterance " + id +
                      ": noise mel must be present iff paired_noisy");
    if (paired && noise_mel->frames() != T)
      throw DataError("utterance " + id + ": noise mel frame mismatch");
    if (static_cast<int>(pitch.f0.size()) != T)
      throw DataError("utterance " + id + ": pitch length mismatch");
  }
};

}  // namespace cleartts::corpus
