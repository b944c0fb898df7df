// SPDX-License-Identifier: Apache-2.0
// Entry points behind the `vigunet` command line tool.
//
// Every command writes human-readable progress to `log` and returns a
// process exit code. Errors are reported by exception.
#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>

#include "vigunet/config.hpp"
#include "vigunet/trainer.hpp"

namespace vigunet {

struct TrainResult {
  std::string last_checkpoint;
  std::string best_checkpoint;
  std::string metrics_csv;
  double best_val_iou = 0.0;
  std::vector<EpochReport> epochs;
};

/// Trains on <data_dir>, selecting the checkpoint with the best validation
/// IoU. Writes checkpoint_last.bin, checkpoint_best.bin and metrics.csv to
/// `out_dir` (config value unless overridden).
TrainResult cmd_train(const RunConfig &cfg, std::ostream &log,
                      const std::optional<std::string> &out_dir = std::nullopt);

enum class EvalSubset { all, val };

/// Evaluates a checkpoint on the dataset (or only its validation split).
/// When `per_sample_csv` is set, per-sample IoU/Dice rows are written there.
EvalReport cmd_eval(const RunConfig &cfg, const std::string &checkpoint, std::ostream &log,
                    EvalSubset subset = EvalSubset::all,
                    const std::optional<std::string> &per_sample_csv = std::nullopt);

/// Writes an 8-bit mask (0 background, 255 foreground) with the input
/// image's size.
void cmd_predict(const RunConfig &cfg, const std::string &checkpoint, const std::string &image,
                 const std::string &out_path, std::ostream &log);

/// Prints the per-module size/channel/parameter table and the total.
/// Returns the total learnable parameter count.
std::size_t cmd_info(const RunConfig &cfg, std::ostream &out);

/// Generates a synthetic dataset under `root` (data_dir unless overridden).
void cmd_gen(const RunConfig &cfg, std::ostream &log,
             const std::optional<std::string> &root = std::nullopt,
             std::optional<std::size_t> count = std::nullopt);

} // namespace vigunet
