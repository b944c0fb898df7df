// SPDX-License-Identifier: Apache-2.0
// vigunet: train / eval / predict / info / gen
#include <CLI11.hpp>

#include <iostream>

#include "vigunet/commands.hpp"
#include "vigunet/kernels.hpp"

using namespace vigunet;

int main(int argc, char **argv) {
  CLI::App app{"ViG-UNet graph segmentation network"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> checkpoint, out, image;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> count;
  bool val_only = false;

  app.add_option("--config", config_path, "run configuration (key = value file)");
  app.add_option("--seed", seed, "overrides the configured seed");

  auto *train = app.add_subcommand("train", "train and write checkpoints + metrics.csv");
  train->add_option("--out", out, "output directory (default: out_dir)");

  auto *eval = app.add_subcommand("eval", "mean IoU / Dice of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--out", out, "per-sample CSV");
  eval->add_flag("--val", val_only, "only the validation split");

  auto *predict = app.add_subcommand("predict", "write a 0/255 mask for one image");
  predict->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  predict->add_option("--image", image, "input image")->required();
  predict->add_option("--out", out, "mask PNG path")->required();

  auto *info = app.add_subcommand("info", "per-module shape and parameter table");

  auto *gen = app.add_subcommand("gen", "write a synthetic ellipse dataset");
  gen->add_option("--out", out, "dataset root (default: data_dir)");
  gen->add_option("--count", count, "number of pairs (default: synthetic_count)");

  // Allow the shared flags after the subcommand as well.
  for (auto *sub : {train, eval, predict, info, gen}) {
    sub->add_option("--config", config_path, "run configuration");
    sub->add_option("--seed", seed, "overrides the configured seed");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed)
      cfg.seed = *seed;
    std::clog << "kernels: " << kernels::isa_name(kernels::active().isa) << '\n';

    if (train->parsed()) {
      cmd_train(cfg, std::cout, out);
    } else if (eval->parsed()) {
      cmd_eval(cfg, *checkpoint, std::cout, val_only ? EvalSubset::val : EvalSubset::all, out);
    } else if (predict->parsed()) {
      cmd_predict(cfg, *checkpoint, *image, *out, std::cout);
    } else if (info->parsed()) {
      cmd_info(cfg, std::cout);
    } else if (gen->parsed()) {
      cmd_gen(cfg, std::cout, out, count);
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
