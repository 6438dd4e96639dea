/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cleartts/corpus/types.hpp"
#include "cleartts/model/config.hpp"

namespace cleartts::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

// Line-delimited manifest: a corpus-level header line (feature config,
// vocabularies, noise partition) followed by one utterance record per line.
// All paths are relative to the manifest's directory.
struct ManifestEntry {
  std::string id;
  std::string speaker;
  ConditionClass condition_class = ConditionClass::kClean;
  std::string audio;
  std::optional<std::string> noise_audio;   // paired only: scaled noise y'
  std::optional<std::string> clean_audio;   // reference when constructed
  std::optional<std::string> noise_source;  // bank file used for mixing
  std::vector<std::string> phonemes;
  std::vector<int> durations;
  std::string transcript;
  std::optional<double> snr_db;
  double gain = 1.0;
  std::string split = "train";
};

struct ManifestHeader {
  int version = 1;
  audio::FrontendConfig frontend;
  std::vector<std::string> phoneme_symbols;
  std::vector<std::string> speakers;
  std::vector<std::string> paired_noise_files;
  std::vector<std::string> unpaired_noise_files;
  std::uint64_t seed = 0;
  double snr_db_min = 5.0;
  double snr_db_max = 25.0;

  int phoneme_id(const std::string& symbol) const {
    const auto it =
        std::find(phoneme_symbols.begin(), phoneme_symbols.end(), symbol);
    if (it == phoneme_symbols.end())
      throw DataError("manifest: unknown phoneme symbol '" + symbol + "'");
    return static_cast<int>(it - phoneme_symbols.begin());
  }

  int speaker_id(const std::string& name) const {
    const auto it = std::find(speakers.begin(), speakers.end(), name);
    if (it == speakers.end())
      throw DataError("manifest: unknown speaker '" + name + "'");
    return static_cast<int>(it - speakers.begin());
  }
};

struct Manifest {
  ManifestHeader header;
  std::vector<ManifestEntry> entries;
  std::string dir;  // directory the relative paths resolve against

  std::vector<const ManifestEntry*> split_entries(const std::string& split) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.split == split) out.push_back(&e);
    return out;
  }
};

namespace detail {

inline json entry_to_json(const ManifestEntry& e) {
  json j{{"type", "utterance"},
         {"id", e.id},
         {"speaker", e.speaker},
         {"class", to_string(e.condition_class)},
         {"audio", e.audio},
         {"phonemes", e.phonemes},
         {"durations", e.durations},
         {"transcript", e.transcript},
         {"gain", e.gain},
         {"split", e.split}};
  if (e.noise_audio) j["noise_audio"] = *e.noise_audio;
  if (e.clean_audio) j["clean_audio"] = *e.clean_audio;
  if (e.noise_source) j["noise_source"] = *e.noise_source;
  if (e.snr_db) j["snr_db"] = *e.snr_db;
  return j;
}

inline ManifestEntry entry_from_json(const json& j) {
  model::check_allowed_keys(
      j,
      {"type", "id", "speaker", "class", "audio", "noise_audio", "clean_audio",
       "noise_source", "phonemes", "durations", "transcript", "snr_db", "gain",
       "split"},
      "manifest entry");
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.speaker = j.at("speaker").get<std::string>();
  e.condition_class = condition_class_from_string(j.at("class").get<std::string>());
  e.audio = j.at("audio").get<std::string>();
  if (j.contains("noise_audio")) e.noise_audio = j.at("noise_audio").get<std::string>();
  if (j.contains("clean_audio")) e.clean_audio = j.at("clean_audio").get<std::string>();
  if (j.contains("noise_source"))
    e.noise_source = j.at("noise_source").get<std::string>();
  e.phonemes = j.at("phonemes").get<std::vector<std::string>>();
  e.durations = j.at("durations").get<std::vector<int>>();
  e.transcript = j.at("transcript").get<std::string>();
  if (j.contains("snr_db")) e.snr_db = j.at("snr_db").get<double>();
  e.gain = j.value("gain", 1.0);
  e.split = j.value("split", std::string("train"));
  return e;
}

}  // namespace detail

// Structural invariants: disjoint paired/unpaired speakers and noise banks,
// consistent class/noise-audio pairing, and existing files.
inline void validate_manifest(const Manifest& m, bool check_files = true) {
  std::set<std::string> paired_speakers, unpaired_speakers;
  for (const auto& e : m.entries) {
    if (e.condition_class == ConditionClass::kPairedNoisy) {
      paired_speakers.insert(e.speaker);
      if (!e.noise_audio)
        throw DataError("manifest: paired entry " + e.id + " missing noise_audio");
    } else if (e.noise_audio) {
      throw DataError("manifest: non-paired entry " + e.id + " has noise_audio");
    }
    if (e.condition_class == ConditionClass::kUnpairedNoisy)
      unpaired_speakers.insert(e.speaker);
  }
  for (const auto& s : paired_speakers)
    if (unpaired_speakers.count(s))
      throw DataError("manifest: speaker '" + s + "' appears in both the paired "
                      "and unpaired subsets");
  for (const auto& f : m.header.paired_noise_files)
    if (std::find(m.header.unpaired_noise_files.begin(),
                  m.header.unpaired_noise_files.end(),
                  f) != m.header.unpaired_noise_files.end())
      throw DataError("manifest: noise file '" + f + "' in both banks");
  if (check_files) {
    for (const auto& e : m.entries) {
      for (const auto* p : {&e.audio})
        if (!fs::exists(fs::path(m.dir) / *p))
          throw DataError("manifest: missing file " + *p);
      if (e.noise_audio && !fs::exists(fs::path(m.dir) / *e.noise_audio))
        throw DataError("manifest: missing file " + *e.noise_audio);
    }
  }
}

inline void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw DataError("manifest: cannot open for write: " + path);
  json header{{"type", "header"},
              {"version", m.header.version},
              {"frontend", model::frontend_to_json(m.header.frontend)},
              {"phoneme_symbols", m.header.phoneme_symbols},
              {"speakers", m.header.speakers},
              {"paired_noise_files", m.header.paired_noise_files},
              {"unpaired_noise_files", m.header.unpaired_noise_files},
              {"seed", m.header.seed},
              {"snr_db_min", m.header.snr_db_min},
              {"snr_db_max", m.header.snr_db_max}};
  out << header.dump() << "\n";
  for (const auto& e : m.entries) out << detail::entry_to_json(e).dump() << "\n";
  if (!out) throw DataError("manifest: write failed: " + path);
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest: cannot open " + path);
  Manifest m;
  m.dir = fs::path(path).parent_path().string();
  if (m.dir.empty()) m.dir = ".";
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("manifest: bad json line: " + std::string(e.what()));
    }
    const std::string type = j.value("type", std::string());
    if (type == "header") {
      if (have_header) throw DataError("manifest: duplicate header");
      model::check_allowed_keys(
          j,
          {"type", "version", "frontend", "phoneme_symbols", "speakers",
           "paired_noise_files", "unpaired_noise_files", "seed", "snr_db_min",
           "snr_db_max"},
          "manifest header");
      m.header.version = j.at("version").get<int>();
      if (m.header.version != 1)
        throw DataError("manifest: unsupported version " +
                        std::to_string(m.header.version));
      m.header.frontend = model::frontend_from_json(j.at("frontend"));
      m.header.phoneme_symbols =
          j.at("phoneme_symbols").get<std::vector<std::string>>();
      m.header.speakers = j.at("speakers").get<std::vector<std::string>>();
      m.header.paired_noise_files =
          j.at("paired_noise_files").get<std::vector<std::string>>();
      m.header.unpaired_noise_files =
          j.at("unpaired_noise_files").get<std::vector<std::string>>();
      m.header.seed = j.at("seed").get<std::uint64_t>();
      m.header.snr_db_min = j.at("snr_db_min").get<double>();
      m.header.snr_db_max = j.at("snr_db_max").get<double>();
      have_header = true;
    } else if (type == "utterance") {
      if (!have_header) throw DataError("manifest: entry before header");
      m.entries.push_back(detail::entry_from_json(j));
    } else {
      throw DataError("manifest: unknown record type '" + type + "'");
    }
  }
  if (!have_header) throw DataError("manifest: missing header: " + path);
  return m;
}

}  // namespace cleartts::corpus
