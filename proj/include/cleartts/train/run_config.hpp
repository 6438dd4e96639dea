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
#include <string>

#include "cleartts/corpus/builder.hpp"
#include "cleartts/corpus/toy.hpp"
#include "cleartts/model/config.hpp"
#include "cleartts/train/loss.hpp"

namespace cleartts::train {

using nlohmann::json;

struct CorpusSection {
  std::string mode = "toy";  // "toy" or "wav"
  corpus::ToyConfig toy;
  std::string data_dir;  // wav mode: clean/, alignments/, transcripts/, noise/
  corpus::BuildConfig build;

  json to_json() const {
    return {{"mode", mode},
            {"toy", toy.to_json()},
            {"data_dir", data_dir},
            {"snr_db_min", build.snr_db_min},
            {"snr_db_max", build.snr_db_max},
            {"paired_fraction", build.paired_fraction},
            {"validation_fraction", build.validation_fraction}};
  }

  static CorpusSection from_json(const json& j) {
    model::check_allowed_keys(j,
                              {"mode", "toy", "data_dir", "snr_db_min",
                               "snr_db_max", "paired_fraction",
                               "validation_fraction"},
                              "corpus");
    CorpusSection c;
    c.mode = j.value("mode", c.mode);
    if (c.mode != "toy" && c.mode != "wav")
      throw ConfigError("corpus.mode must be 'toy' or 'wav'");
    if (j.contains("toy")) c.toy = corpus::ToyConfig::from_json(j.at("toy"));
    c.data_dir = j.value("data_dir", std::string());
    if (c.mode == "wav" && c.data_dir.empty())
      throw ConfigError("corpus.data_dir is required in wav mode");
    c.build.snr_db_min = j.value("snr_db_min", c.build.snr_db_min);
    c.build.snr_db_max = j.value("snr_db_max", c.build.snr_db_max);
    c.build.paired_fraction = j.value("paired_fraction", c.build.paired_fraction);
    c.build.validation_fraction =
        j.value("validation_fraction", c.build.validation_fraction);
    c.build.validate();
    return c;
  }
};

struct TrainSection {
  int batch_size = 2;
  int pretrain_steps = 1000;
  int joint_steps = 2000;
  double peak_lr = 1e-3;
  int warmup_steps = 400;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  double grad_clip = 1.0;
  double lambda_grl = 1.0;
  LossWeights weights;
  bool fix_extractor = false;
  bool use_adversarial_ctc = true;
  int checkpoint_interval = 500;
  int val_interval = 100;

  void validate() const {
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (pretrain_steps < 0 || joint_steps < 0)
      throw ConfigError("train: step budgets must be >= 0");
    if (peak_lr <= 0.0 || warmup_steps < 1)
      throw ConfigError("train: bad learning-rate schedule");
    if (lambda_grl < 0.0) throw ConfigError("train.lambda_grl must be >= 0");
    if (weights.mel < 0 || weights.duration < 0 || weights.pitch < 0 ||
        weights.extractor < 0 || weights.adversarial < 0)
      throw ConfigError("train: loss weights must be >= 0");
    if (checkpoint_interval < 1 || val_interval < 1)
      throw ConfigError("train: intervals must be >= 1");
  }

  nn::AdamConfig adam() const {
    return {adam_beta1, adam_beta2, adam_eps, peak_lr, warmup_steps, grad_clip};
  }

  json to_json() const {
    return {{"batch_size", batch_size},
            {"pretrain_steps", pretrain_steps},
            {"joint_steps", joint_steps},
            {"peak_lr", peak_lr},
            {"warmup_steps", warmup_steps},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},
            {"grad_clip", grad_clip},
            {"lambda_grl", lambda_grl},
            {"loss_weights",
             {{"mel", weights.mel},
              {"duration", weights.duration},
              {"pitch", weights.pitch},
              {"extractor", weights.extractor},
              {"adversarial", weights.adversarial}}},
            {"fix_extractor", fix_extractor},
            {"use_adversarial_ctc", use_adversarial_ctc},
            {"checkpoint_interval", checkpoint_interval},
            {"val_interval", val_interval}};
  }

  static TrainSection from_json(const json& j) {
    model::check_allowed_keys(
        j,
        {"batch_size", "pretrain_steps", "joint_steps", "peak_lr",
         "warmup_steps", "adam_beta1", "adam_beta2", "adam_eps", "grad_clip",
         "lambda_grl", "loss_weights", "fix_extractor", "use_adversarial_ctc",
         "checkpoint_interval", "val_interval"},
        "train");
    TrainSection t;
    t.batch_size = j.value("batch_size", t.batch_size);
    t.pretrain_steps = j.value("pretrain_steps", t.pretrain_steps);
    t.joint_steps = j.value("joint_steps", t.joint_steps);
    t.peak_lr = j.value("peak_lr", t.peak_lr);
    t.warmup_steps = j.value("warmup_steps", t.warmup_steps);
    t.adam_beta1 = j.value("adam_beta1", t.adam_beta1);
    t.adam_beta2 = j.value("adam_beta2", t.adam_beta2);
    t.adam_eps = j.value("adam_eps", t.adam_eps);
    t.grad_clip = j.value("grad_clip", t.grad_clip);
    t.lambda_grl = j.value("lambda_grl", t.lambda_grl);
    if (j.contains("loss_weights")) {
      const auto& w = j.at("loss_weights");
      model::check_allowed_keys(
          w, {"mel", "duration", "pitch", "extractor", "adversarial"},
          "train.loss_weights");
      t.weights.mel = w.value("mel", 1.0);
      t.weights.duration = w.value("duration", 1.0);
      t.weights.pitch = w.value("pitch", 1.0);
      t.weights.extractor = w.value("extractor", 1.0);
      t.weights.adversarial = w.value("adversarial", 1.0);
    }
    t.fix_extractor = j.value("fix_extractor", t.fix_extractor);
    t.use_adversarial_ctc = j.value("use_adversarial_ctc", t.use_adversarial_ctc);
    t.checkpoint_interval = j.value("checkpoint_interval", t.checkpoint_interval);
    t.val_interval = j.value("val_interval", t.val_interval);
    t.validate();
    return t;
  }
};

struct RunConfig {
  int version = 1;
  std::uint64_t seed = 1234;
  std::string out_dir = "runs/default";
  audio::FrontendConfig frontend;
  model::ModelConfig model;  // vocab/speaker counts filled from the manifest
  CorpusSection corpus;
  TrainSection train;
  int griffin_lim_iters = 60;
  int eval_plot_count = 4;

  std::string manifest_path() const {
    return (std::filesystem::path(out_dir) / "manifest.jsonl").string();
  }

  json to_json() const {
    return {{"version", version},
            {"seed", seed},
            {"out_dir", out_dir},
            {"frontend", model::frontend_to_json(frontend)},
            {"model", model.to_json()},
            {"corpus", corpus.to_json()},
            {"train", train.to_json()},
            {"griffin_lim_iters", griffin_lim_iters},
            {"eval_plot_count", eval_plot_count}};
  }

  static RunConfig from_json(const json& j) {
    model::check_allowed_keys(j,
                              {"version", "seed", "out_dir", "frontend", "model",
                               "corpus", "train", "griffin_lim_iters",
                               "eval_plot_count"},
                              "run config");
    RunConfig c;
    c.version = j.value("version", 1);
    if (c.version != 1)
      throw ConfigError("run config: unsupported version " +
                        std::to_string(c.version));
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (c.out_dir.empty()) throw ConfigError("run config: out_dir is required");
    if (j.contains("frontend")) c.frontend = model::frontend_from_json(j.at("frontend"));
    c.frontend.validate();
    if (j.contains("model")) c.model = model::ModelConfig::from_json(j.at("model"));
    if (j.contains("corpus")) c.corpus = CorpusSection::from_json(j.at("corpus"));
    if (j.contains("train")) c.train = TrainSection::from_json(j.at("train"));
    c.griffin_lim_iters = j.value("griffin_lim_iters", c.griffin_lim_iters);
    c.eval_plot_count = j.value("eval_plot_count", c.eval_plot_count);
    if (c.griffin_lim_iters < 1)
      throw ConfigError("run config: griffin_lim_iters must be >= 1");
    return c;
  }
};

// Loads and validates a run config file. CLEARTTS_OUT_ROOT, when set,
// prefixes relative output directories.
inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  RunConfig cfg = RunConfig::from_json(j);
  if (const char* root = std::getenv("CLEARTTS_OUT_ROOT")) {
    std::filesystem::path out(cfg.out_dir);
    if (out.is_relative()) cfg.out_dir = (std::filesystem::path(root) / out).string();
  }
  return cfg;
}

}  // namespace cleartts::train
