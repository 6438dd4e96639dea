/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "cleartts/corpus/manifest.hpp"
#include "cleartts/corpus/toy.hpp"

namespace cleartts::corpus {

struct BuildConfig {
  double snr_db_min = 5.0;
  double snr_db_max = 25.0;
  double paired_fraction = 0.5;       // of the noisy speakers
  double validation_fraction = 0.25;  // of each speaker's utterances

  void validate() const {
    if (snr_db_min > snr_db_max)
      throw ConfigError("corpus: snr_db_min must be <= snr_db_max");
    if (paired_fraction <= 0.0 || paired_fraction >= 1.0)
      throw ConfigError("corpus: paired_fraction must be inside (0, 1)");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0)
      throw ConfigError("corpus: validation_fraction must be in [0, 1)");
  }
};

// Artificial noisy-corpus construction: half of the speakers (rounded up)
// become noisy; every utterance of a noisy speaker is mixed with bank noise
// at an SNR drawn uniformly from the configured range; the noisy speakers
// and the noise bank are partitioned into disjoint paired/unpaired halves.
// Pure function of (inputs, seed): identical calls give identical manifests
// and identical audio bytes.
inline Manifest build_artificial_corpus(const std::vector<CleanItem>& items,
                                        const std::vector<std::string>& noise_files,
                                        const std::vector<std::string>& phoneme_symbols,
                                        const BuildConfig& cfg,
                                        const audio::FrontendConfig& frontend,
                                        const std::string& out_dir,
                                        std::uint64_t seed, int workers = 1) {
  cfg.validate();
  frontend.validate();
  if (items.empty()) throw ConfigError("corpus: no input utterances");

  std::set<std::string> speaker_set;
  for (const auto& it : items) speaker_set.insert(it.speaker);
  std::vector<std::string> speakers(speaker_set.begin(), speaker_set.end());
  if (speakers.size() < 2)
    throw ConfigError("corpus: need at least 2 speakers, got " +
                      std::to_string(speakers.size()));
  if (noise_files.size() < 2)
    throw ConfigError("corpus: need at least 2 noise files for disjoint banks");

  // Seeded speaker selection: ceil(S/2) noisy, split into paired/unpaired.
  auto rng = core::Rng::derive(seed, {0xC0});
  const auto speaker_perm = rng.permutation(static_cast<int>(speakers.size()));
  const int n_noisy = (static_cast<int>(speakers.size()) + 1) / 2;
  if (n_noisy < 2)
    throw ConfigError("corpus: need at least 2 noisy speakers to keep the "
                      "paired and unpaired subsets disjoint");
  const int n_paired_speakers = std::clamp(
      static_cast<int>(std::lround(n_noisy * cfg.paired_fraction)), 1, n_noisy - 1);
  std::map<std::string, ConditionClass> speaker_class;
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    const auto& name = speakers[static_cast<std::size_t>(speaker_perm[i])];
    if (static_cast<int>(i) < n_paired_speakers)
      speaker_class[name] = ConditionClass::kPairedNoisy;
    else if (static_cast<int>(i) < n_noisy)
      speaker_class[name] = ConditionClass::kUnpairedNoisy;
    else
      speaker_class[name] = ConditionClass::kClean;
  }

  // Disjoint noise banks.
  const auto noise_perm = rng.permutation(static_cast<int>(noise_files.size()));
  const int n_paired_noise =
      std::clamp(static_cast<int>(noise_files.size()) / 2, 1,
                 static_cast<int>(noise_files.size()) - 1);
  std::vector<std::string> paired_bank, unpaired_bank;
  for (std::size_t i = 0; i < noise_files.size(); ++i) {
    const auto& f = noise_files[static_cast<std::size_t>(noise_perm[i])];
    (static_cast<int>(i) < n_paired_noise ? paired_bank : unpaired_bank).push_back(f);
  }
  std::sort(paired_bank.begin(), paired_bank.end());
  std::sort(unpaired_bank.begin(), unpaired_bank.end());

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "audio" / "noisy");
  fs::create_directories(fs::path(out_dir) / "audio" / "noise_gt");

  Manifest m;
  m.dir = out_dir;
  m.header.frontend = frontend;
  m.header.phoneme_symbols = phoneme_symbols;
  m.header.speakers = speakers;
  m.header.paired_noise_files = paired_bank;
  m.header.unpaired_noise_files = unpaired_bank;
  m.header.seed = seed;
  m.header.snr_db_min = cfg.snr_db_min;
  m.header.snr_db_max = cfg.snr_db_max;

  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < items.size(); ++i)
    by_speaker[items[i].speaker].push_back(i);

  // Per-speaker validation split, seeded independently of mixing. Every
  // speaker gets an entry (possibly empty) so the worker pool below can use
  // read-only lookups.
  std::map<std::string, std::set<std::size_t>> val_indices;
  for (const auto& [speaker, idxs] : by_speaker) {
    auto& chosen = val_indices[speaker];
    const int n_val = static_cast<int>(
        std::ceil(cfg.validation_fraction * static_cast<double>(idxs.size())));
    auto srng = core::Rng::derive(seed, {0xC2, core::hash_str(speaker)});
    const auto perm = srng.permutation(static_cast<int>(idxs.size()));
    for (int k = 0; k < n_val; ++k)
      chosen.insert(idxs[static_cast<std::size_t>(perm[k])]);
  }

  // Mixing is independent per utterance; entry i depends only on
  // (items[i], seed), so a worker pool fills the pre-sized vector and the
  // manifest assembly below stays a single-threaded, ordered reduction.
  std::vector<ManifestEntry> entries(items.size());
  auto process_item = [&](std::size_t i) {
    const CleanItem& item = items[i];
    const ConditionClass cls = speaker_class.at(item.speaker);

    ManifestEntry e;
    e.id = item.id;
    e.speaker = item.speaker;
    e.condition_class = cls;
    e.phonemes = item.phonemes;
    e.durations = item.durations;
    e.transcript = item.transcript;
    e.split = val_indices.at(item.speaker).count(i) ? "validation" : "train";

    if (cls == ConditionClass::kClean) {
      e.audio = item.wav_path;
    } else {
      const auto& bank =
          cls == ConditionClass::kPairedNoisy ? paired_bank : unpaired_bank;
      auto urng = core::Rng::derive(seed, {0xC1, core::hash_str(item.id)});
      const double snr = urng.uniform(cfg.snr_db_min, cfg.snr_db_max);
      const auto& noise_rel = bank[static_cast<std::size_t>(
          urng.uniform_int(0, static_cast<int>(bank.size()) - 1))];

      const auto clean = audio::read_wav(
          (fs::path(out_dir) / item.wav_path).string());
      const auto noise_src =
          audio::read_wav((fs::path(out_dir) / noise_rel).string());
      const auto offset = static_cast<std::size_t>(urng.uniform_int(
          0, static_cast<std::int64_t>(noise_src.samples.size()) - 1));
      const auto noise =
          audio::tile_to_length(noise_src, clean.samples.size(), offset);
      const auto mixed = audio::mix_at_snr(clean, noise, snr);

      e.audio = "audio/noisy/" + item.id + ".wav";
      audio::write_wav((fs::path(out_dir) / e.audio).string(), mixed.noisy);
      if (cls == ConditionClass::kPairedNoisy) {
        e.noise_audio = "audio/noise_gt/" + item.id + ".wav";
        audio::write_wav((fs::path(out_dir) / *e.noise_audio).string(),
                         mixed.scaled_noise);
      }
      e.clean_audio = item.wav_path;
      e.noise_source = noise_rel;
      e.snr_db = snr;
      e.gain = mixed.gain;
    }
    entries[i] = std::move(e);
  };

  const int n_workers =
      std::clamp(workers, 1, static_cast<int>(items.size()));
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) process_item(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto drain = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= items.size()) return;
        try {
          process_item(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(drain);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }
  m.entries = std::move(entries);

  validate_manifest(m);
  return m;
}

}  // namespace cleartts::corpus
