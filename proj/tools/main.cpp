/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include <CLI11.hpp>
#include <iostream>

#include "cleartts/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace cleartts;

  CLI::App app{"cleartts: train a text-to-speech model on noisy recordings "
               "with frame-level noise conditioning, synthesize clean speech"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint, warm_start, resume;
  std::string phonemes, speaker, durations, name = "synth";
  std::string split, mel_path, out_path;
  bool cold_start = false;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config JSON file")->required();
  };

  auto* prepare = app.add_subcommand("prepare", "build the corpus and manifest");
  add_config(prepare);

  auto* train_ext =
      app.add_subcommand("train-extractor", "Step 1: warm-start the noise extractor");
  add_config(train_ext);
  train_ext->add_option("--resume", resume, "resume from a Step-1 checkpoint");

  auto* train = app.add_subcommand("train", "Step 2: joint training");
  add_config(train);
  train->add_option("--warm-start", warm_start,
                    "extractor checkpoint (default: <out_dir>/extractor/ckpt_final.bin)");
  train->add_flag("--cold-start", cold_start,
                  "start without an extractor warm start");
  train->add_option("--resume", resume, "resume from a Step-2 checkpoint");

  auto* synth = app.add_subcommand("synth", "synthesize from phoneme symbols");
  add_config(synth);
  synth->add_option("--checkpoint", checkpoint,
                    "model checkpoint (default: <out_dir>/joint/ckpt_final.bin)");
  synth->add_option("--phonemes", phonemes, "space-separated phoneme symbols")
      ->required();
  synth->add_option("--speaker", speaker, "speaker name (default: first)");
  synth->add_option("--durations", durations,
                    "comma-separated per-phoneme frame counts (default: predicted)");
  synth->add_option("--name", name, "output base name");

  auto* eval = app.add_subcommand("eval", "objective evaluation on a split");
  add_config(eval);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint");
  eval->add_option("--split", split, "manifest split (default: validation)");

  auto* plot = app.add_subcommand("plot", "render a stored mel as a BMP heatmap");
  plot->add_option("--mel", mel_path, "input .mel.bin file")->required();
  plot->add_option("--out", out_path, "output .bmp file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (plot->parsed()) return cli::cmd_plot(mel_path, out_path);
    const auto cfg = train::load_run_config(config_path);
    if (prepare->parsed()) return cli::cmd_prepare(cfg);
    if (train_ext->parsed()) return cli::cmd_train_extractor(cfg, resume);
    if (train->parsed()) return cli::cmd_train(cfg, warm_start, cold_start, resume);
    if (synth->parsed())
      return cli::cmd_synth(cfg, checkpoint, phonemes, speaker, durations, name);
    if (eval->parsed()) return cli::cmd_eval(cfg, checkpoint, split);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return cli::kExitData;
  } catch (const InvalidInputError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return cli::kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitRuntime;
  }
  return cli::kExitRuntime;
}
