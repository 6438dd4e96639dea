/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cleartts/corpus/alignment.hpp"
#include "cleartts/corpus/builder.hpp"
#include "cleartts/synth/evaluate.hpp"
#include "cleartts/train/trainer.hpp"

namespace cleartts::cli {

namespace fs = std::filesystem;
using train::RunConfig;

// Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

inline int workers_from_env() {
  const char* env = std::getenv("CLEARTTS_WORKERS");
  if (!env) return 1;
  try {
    const int w = std::stoi(env);
    if (w < 1) throw ConfigError("CLEARTTS_WORKERS must be >= 1");
    return w;
  } catch (const std::invalid_argument&) {
    throw ConfigError("CLEARTTS_WORKERS must be an integer");
  }
}

// Every command copies the effective config into its output directory so
// runs stay reproducible from the artifacts alone.
inline void copy_config_into(const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream out((fs::path(dir) / "config.json").string());
  if (!out) throw DataError("cannot write config copy into " + dir);
  out << cfg.to_json().dump(2) << "\n";
}

namespace detail {

// wav-mode input layout, relative to corpus.data_dir:
//   clean/<speaker>/<utt>.wav      mono 16-bit PCM at the configured rate
//   alignments/<speaker>/<utt>.tsv phoneme<TAB>start_s<TAB>end_s rows
//   transcripts/<speaker>/<utt>.txt lowercase characters for the CTC target
//   noise/*.wav                    noise bank
inline std::pair<std::vector<corpus::CleanItem>, std::vector<std::string>>
scan_wav_corpus(const RunConfig& cfg) {
  const fs::path root(cfg.corpus.data_dir);
  if (!fs::is_directory(root / "clean"))
    throw DataError("wav corpus: missing directory " + (root / "clean").string());

  std::vector<corpus::CleanItem> items;
  std::vector<std::string> speakers;
  for (const auto& spk_dir : fs::directory_iterator(root / "clean")) {
    if (!spk_dir.is_directory()) continue;
    speakers.push_back(spk_dir.path().filename().string());
  }
  std::sort(speakers.begin(), speakers.end());

  fs::create_directories(fs::path(cfg.out_dir) / "audio" / "clean");
  for (const auto& speaker : speakers) {
    std::vector<std::string> utt_names;
    for (const auto& f : fs::directory_iterator(root / "clean" / speaker))
      if (f.path().extension() == ".wav")
        utt_names.push_back(f.path().stem().string());
    std::sort(utt_names.begin(), utt_names.end());

    for (const auto& utt : utt_names) {
      const auto wav_src = root / "clean" / speaker / (utt + ".wav");
      const auto align_src = root / "alignments" / speaker / (utt + ".tsv");
      const auto text_src = root / "transcripts" / speaker / (utt + ".txt");
      if (!fs::exists(align_src))
        throw DataError("wav corpus: missing alignment " + align_src.string());

      const auto wav = audio::read_wav(wav_src.string());
      const auto mel = audio::mel_spectrogram(wav, cfg.frontend);
      const auto alignment =
          corpus::load_durations(align_src.string(), mel.frames(), cfg.frontend);

      corpus::CleanItem item;
      item.id = speaker + "_" + utt;
      item.speaker = speaker;
      item.wav_path = "audio/clean/" + item.id + ".wav";
      fs::copy_file(wav_src, fs::path(cfg.out_dir) / item.wav_path,
                    fs::copy_options::overwrite_existing);
      item.phonemes = alignment.phonemes;
      item.durations = alignment.durations;
      if (fs::exists(text_src)) {
        std::ifstream tin(text_src);
        std::getline(tin, item.transcript);
      }
      items.push_back(std::move(item));
    }
  }

  std::vector<std::string> noise_files;
  if (fs::is_directory(root / "noise")) {
    fs::create_directories(fs::path(cfg.out_dir) / "audio" / "noise_bank");
    std::vector<std::string> names;
    for (const auto& f : fs::directory_iterator(root / "noise"))
      if (f.path().extension() == ".wav") names.push_back(f.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
      const std::string rel = "audio/noise_bank/" + name;
      fs::copy_file(root / "noise" / name, fs::path(cfg.out_dir) / rel,
                    fs::copy_options::overwrite_existing);
      noise_files.push_back(rel);
    }
  }
  return {std::move(items), std::move(noise_files)};
}

inline std::vector<std::string> collect_symbols(
    const std::vector<corpus::CleanItem>& items) {
  std::set<std::string> symbols;
  for (const auto& item : items)
    for (const auto& s : item.phonemes) symbols.insert(s);
  return {symbols.begin(), symbols.end()};
}

inline void print_prepare_summary(const corpus::Manifest& m, std::ostream& os) {
  int clean = 0, paired = 0, unpaired = 0, train = 0, val = 0;
  std::set<std::string> clean_spk, paired_spk, unpaired_spk;
  for (const auto& e : m.entries) {
    switch (e.condition_class) {
      case corpus::ConditionClass::kClean:
        ++clean;
        clean_spk.insert(e.speaker);
        break;
      case corpus::ConditionClass::kPairedNoisy:
        ++paired;
        paired_spk.insert(e.speaker);
        break;
      case corpus::ConditionClass::kUnpairedNoisy:
        ++unpaired;
        unpaired_spk.insert(e.speaker);
        break;
    }
    (e.split == "train" ? train : val)++;
  }
  os << "speakers: " << m.header.speakers.size() << " (clean " << clean_spk.size()
     << ", paired " << paired_spk.size() << ", unpaired " << unpaired_spk.size()
     << ")\n";
  os << "utterances: " << m.entries.size() << " (clean " << clean << ", paired "
     << paired << ", unpaired " << unpaired << "; train " << train
     << ", validation " << val << ")\n";

  // SNR histogram over the configured range, 10 bins.
  const double lo = m.header.snr_db_min, hi = m.header.snr_db_max;
  std::vector<int> hist(10, 0);
  int mixed = 0;
  for (const auto& e : m.entries) {
    if (!e.snr_db) continue;
    ++mixed;
    const double u = hi > lo ? (*e.snr_db - lo) / (hi - lo) : 0.0;
    hist[static_cast<std::size_t>(std::clamp(static_cast<int>(u * 10.0), 0, 9))]++;
  }
  if (mixed > 0) {
    os << "snr histogram [" << lo << ", " << hi << "] dB:";
    for (int c : hist) os << " " << c;
    os << "\n";
  }
}

}  // namespace detail

// prepare: build (or ingest) the corpus, mix noise, write the manifest.
inline int cmd_prepare(const RunConfig& cfg, std::ostream& os = std::cout) {
  fs::create_directories(cfg.out_dir);
  copy_config_into(cfg, cfg.out_dir);

  std::vector<corpus::CleanItem> items;
  std::vector<std::string> noise_files;
  if (cfg.corpus.mode == "toy") {
    auto toy = corpus::generate_toy_corpus(cfg.corpus.toy, cfg.frontend,
                                           cfg.out_dir, cfg.seed);
    items = std::move(toy.items);
    noise_files = std::move(toy.noise_files);
  } else {
    auto scanned = detail::scan_wav_corpus(cfg);
    items = std::move(scanned.first);
    noise_files = std::move(scanned.second);
  }

  auto manifest = corpus::build_artificial_corpus(
      items, noise_files, detail::collect_symbols(items), cfg.corpus.build,
      cfg.frontend, cfg.out_dir, cfg.seed, workers_from_env());
  corpus::write_manifest(cfg.manifest_path(), manifest);
  os << "manifest: " << cfg.manifest_path() << "\n";
  detail::print_prepare_summary(manifest, os);
  return kExitOk;
}

inline corpus::Manifest load_manifest_checked(const RunConfig& cfg) {
  auto manifest = corpus::read_manifest(cfg.manifest_path());
  corpus::validate_manifest(manifest);
  // The manifest header is the source of truth for features; a diverging
  // run config would silently change every mel, so reject it.
  if (model::frontend_to_json(manifest.header.frontend) !=
      model::frontend_to_json(cfg.frontend))
    throw ConfigError("manifest frontend config does not match the run config; "
                      "re-run prepare or fix the config");
  return manifest;
}

// train-extractor: Step 1 warm start of the noise extractor.
inline int cmd_train_extractor(const RunConfig& cfg, const std::string& resume = "",
                               std::ostream& os = std::cout) {
  const auto manifest = load_manifest_checked(cfg);
  const std::string stage_dir = (fs::path(cfg.out_dir) / "extractor").string();
  copy_config_into(cfg, stage_dir);
  auto outcome = train::pretrain_extractor(manifest, cfg, stage_dir, resume);
  os << "extractor checkpoint: " << outcome.final_checkpoint << "\n";
  os << "held-out extractor mae: "
     << format_double(outcome.final_validation.at("extractor_mae")) << "\n";
  return kExitOk;
}

// train: Step 2 joint training with a warm-started extractor.
inline int cmd_train(const RunConfig& cfg, std::string warm_start,
                     bool cold_start, const std::string& resume = "",
                     std::ostream& os = std::cout) {
  const auto manifest = load_manifest_checked(cfg);
  if (resume.empty()) {
    if (warm_start.empty() && !cold_start) {
      const auto default_warm =
          fs::path(cfg.out_dir) / "extractor" / "ckpt_final.bin";
      if (fs::exists(default_warm)) {
        warm_start = default_warm.string();
      } else {
        throw ConfigError(
            "no extractor warm-start checkpoint; run train-extractor first or "
            "pass --cold-start to skip Step 1 explicitly");
      }
    }
    if (cold_start && cfg.train.fix_extractor)
      throw ConfigError("fix_extractor with a cold start would freeze a random "
                        "extractor; train one first");
    if (cold_start) warm_start.clear();
  }
  const std::string stage_dir = (fs::path(cfg.out_dir) / "joint").string();
  copy_config_into(cfg, stage_dir);
  auto outcome = train::joint_train(manifest, cfg, stage_dir, warm_start, resume);
  os << "joint checkpoint: " << outcome.final_checkpoint << "\n";
  for (const auto& [name, value] : outcome.final_validation)
    os << "val " << name << ": " << format_double(value) << "\n";
  return kExitOk;
}

// synth: silence-conditioned synthesis from space-separated phoneme symbols.
inline int cmd_synth(const RunConfig& cfg, std::string checkpoint,
                     const std::string& phonemes, const std::string& speaker,
                     const std::string& durations_csv, const std::string& name,
                     std::ostream& os = std::cout) {
  if (checkpoint.empty())
    checkpoint = (fs::path(cfg.out_dir) / "joint" / "ckpt_final.bin").string();
  if (!fs::exists(checkpoint))
    throw DataError("checkpoint not found: " + checkpoint);
  auto lm = synth::load_model(checkpoint);

  synth::SynthesisRequest req;
  req.speaker = speaker;
  req.griffin_lim_iters = cfg.griffin_lim_iters;
  std::istringstream ss(phonemes);
  for (std::string tok; ss >> tok;) req.phoneme_symbols.push_back(tok);
  if (req.phoneme_symbols.empty())
    throw InvalidInputError("synth: no phoneme symbols given");
  if (!durations_csv.empty()) {
    std::istringstream ds(durations_csv);
    for (std::string tok; std::getline(ds, tok, ',');)
      req.duration_override.push_back(std::stoi(tok));
  }

  auto result = synth::synthesize(lm, req);
  const auto dir = fs::path(cfg.out_dir) / "synth";
  fs::create_directories(dir);
  copy_config_into(cfg, dir.string());
  const std::string base = (dir / name).string();
  audio::write_wav(base + ".wav", result.wav);
  synth::save_mel(base + ".mel.bin", result.mel);
  viz::write_bmp_heatmap(base + ".bmp", result.mel, lm.frontend.log_floor(),
                         lm.frontend.log_ceil());
  os << "frames: " << result.mel.dim(0) << "\n";
  os << "wav: " << base << ".wav (" << result.wav.samples.size() << " samples)\n";
  return kExitOk;
}

// eval: objective metrics + comparison plots on a manifest split.
inline int cmd_eval(const RunConfig& cfg, std::string checkpoint,
                    std::string split, std::ostream& os = std::cout) {
  const auto manifest = load_manifest_checked(cfg);
  if (checkpoint.empty())
    checkpoint = (fs::path(cfg.out_dir) / "joint" / "ckpt_final.bin").string();
  if (!fs::exists(checkpoint))
    throw DataError("checkpoint not found: " + checkpoint);
  if (split.empty()) split = "validation";
  auto lm = synth::load_model(checkpoint);

  const auto dir = fs::path(cfg.out_dir) / "eval";
  fs::create_directories(dir);
  copy_config_into(cfg, dir.string());
  auto report = synth::evaluate_checkpoint(manifest, lm, split,
                                           (dir / "plots").string(),
                                           cfg.eval_plot_count);
  {
    std::ofstream out((dir / "report.json").string());
    out << report.to_json().dump(2) << "\n";
  }
  os << "report: " << (dir / "report.json").string() << "\n";
  for (const auto& [name, value] : report.aggregates)
    os << name << ": " << format_double(value) << "\n";
  return kExitOk;
}

// plot: render a stored mel as a heatmap image.
inline int cmd_plot(const std::string& mel_path, const std::string& out_path,
                    std::ostream& os = std::cout) {
  const auto mel = synth::load_mel(mel_path);
  double lo = mel.v[0], hi = mel.v[0];
  for (double x : mel.v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  viz::write_bmp_heatmap(out_path, mel, lo, hi);
  os << "plot: " << out_path << "\n";
  return kExitOk;
}

}  // namespace cleartts::cli
