/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cleartts/corpus/loader.hpp"
#include "cleartts/synth/synthesize.hpp"
#include "cleartts/train/loss.hpp"
#include "cleartts/viz/heatmap.hpp"

namespace cleartts::synth {

namespace fs = std::filesystem;

// Objective desk-scale evaluation. Perceptual MOS/CMOS scores are not
// computed here; every metric is an objective proxy measured on held-out
// data, and the report says so explicitly.
struct EvalReport {
  struct Row {
    std::string id;
    std::map<std::string, double> metrics;
  };
  std::vector<Row> rows;
  std::map<std::string, double> aggregates;
  std::string note =
      "perceptual MOS/CMOS scores are not computed; all metrics are "
      "objective proxies";
  std::vector<std::string> plot_files;

  nlohmann::json to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows)
      rows_json.push_back({{"id", r.id}, {"metrics", r.metrics}});
    return {{"note", note},
            {"utterances", rows_json},
            {"aggregates", aggregates},
            {"plots", plot_files}};
  }
};

// Error-power ratio of the extractor estimate against predicting the
// per-utterance mean of the target, in dB. Positive means the extractor
// beats the trivial baseline.
inline double extractor_snr_gain_db(const core::Tensor& extracted,
                                    const core::Tensor& target) {
  double mean = 0.0;
  for (double x : target.v) mean += x;
  mean /= static_cast<double>(target.v.size());
  double mse_est = 0.0, mse_base = 0.0;
  for (std::size_t i = 0; i < target.v.size(); ++i) {
    const double de = extracted.v[i] - target.v[i];
    const double db = mean - target.v[i];
    mse_est += de * de;
    mse_base += db * db;
  }
  mse_est /= static_cast<double>(target.v.size());
  mse_base /= static_cast<double>(target.v.size());
  if (mse_est <= 0.0) return 99.0;  // exact reconstruction
  return 10.0 * std::log10(std::max(mse_base, 1e-30) / mse_est);
}

inline EvalReport evaluate_checkpoint(const corpus::Manifest& manifest,
                                      LoadedModel& lm, const std::string& split,
                                      const std::string& plot_dir = "",
                                      int plot_count = 4) {
  auto utts = corpus::load_split(manifest, split);
  if (utts.empty())
    throw ConfigError("evaluate: split '" + split + "' is empty");

  model::TtsModel tts = lm.make_model();
  model::TrainFlags flags;  // adversarial term not part of the report
  flags.use_adversarial_ctc = false;
  const double log_floor = lm.frontend.log_floor();
  const double log_ceil = lm.frontend.log_ceil();

  if (!plot_dir.empty()) fs::create_directories(plot_dir);

  EvalReport report;
  std::map<std::string, double> sums;
  std::map<std::string, int> counts;
  int plotted = 0;
  for (const auto& utt : utts) {
    nn::Tape t;
    nn::Binder bind(t, lm.params, /*training=*/false);
    auto out = tts.train_forward(t, bind, utt, flags, false, nullptr, false);

    EvalReport::Row row;
    row.id = utt.id;
    const core::Tensor& pred = t.val(out.mel_pred);
    row.metrics["mel_mae"] =
        t.val(nn::mae_loss(t, out.mel_pred, nn::constant(t, utt.mel.values))).v[0];
    row.metrics["mel_mssim"] = nn::mssim_loss_value(pred, utt.mel.values,
                                                    log_floor, log_ceil);

    // Duration accuracy in frames, through the inference rounding rule.
    const auto pred_durations = model::durations_from_log(t.val(out.log_dur_pred).v);
    double dur_err = 0.0;
    for (std::size_t i = 0; i < pred_durations.size(); ++i)
      dur_err += std::fabs(static_cast<double>(pred_durations[i]) -
                           static_cast<double>(utt.durations[i]));
    row.metrics["duration_frame_mae"] =
        dur_err / static_cast<double>(pred_durations.size());

    if (utt.condition_class == corpus::ConditionClass::kPairedNoisy) {
      const core::Tensor& extracted = t.val(out.extracted);
      row.metrics["extractor_mae"] =
          t.val(nn::mae_loss(t, out.extracted,
                             nn::constant(t, utt.noise_mel->values))).v[0];
      row.metrics["extractor_snr_gain_db"] =
          extractor_snr_gain_db(extracted, utt.noise_mel->values);
      if (!plot_dir.empty() && plotted < plot_count) {
        const std::string base = (fs::path(plot_dir) / utt.id).string();
        viz::write_bmp_heatmap(base + "_noise_gt.bmp", utt.noise_mel->values,
                               log_floor, log_ceil);
        viz::write_bmp_heatmap(base + "_noise_extracted.bmp", extracted,
                               log_floor, log_ceil);
        report.plot_files.push_back(base + "_noise_gt.bmp");
        report.plot_files.push_back(base + "_noise_extracted.bmp");
      }
    }
    if (!plot_dir.empty() && plotted < plot_count) {
      const std::string base = (fs::path(plot_dir) / utt.id).string();
      viz::write_bmp_heatmap(base + "_mel_target.bmp", utt.mel.values, log_floor,
                             log_ceil);
      viz::write_bmp_heatmap(base + "_mel_predicted.bmp", pred, log_floor, log_ceil);
      report.plot_files.push_back(base + "_mel_target.bmp");
      report.plot_files.push_back(base + "_mel_predicted.bmp");
      ++plotted;
    }

    for (const auto& [name, value] : row.metrics) {
      sums[name] += value;
      counts[name] += 1;
    }
    report.rows.push_back(std::move(row));
  }
  for (const auto& [name, total] : sums)
    report.aggregates[name] = total / counts.at(name);
  return report;
}

}  // namespace cleartts::synth
