// SPDX-License-Identifier: Apache-2.0
// Run configuration: flat UTF-8 "key = value" lines, '#' comments.
//
// Keys (defaults give the desk profile):
//   dims              8,16,32,64,128   channels per stage (5 values, doubling)
//   input_size        64               square input side, multiple of 32
//   in_channels       3
//   k                 9                neighbours per node
//   heads             4                update-function heads
//   ffn_ratio         4                FFN hidden expansion
//   reduction         1,1,1,1,1        candidate pooling factor per stage
//   droppath          0.0              droppath rate for every block
//   droppath_ramp     false            ramp the rate linearly over blocks
//   skip_before_stage false            add skips before the decoder stage
//   bottleneck_graphers 2
//   epochs            30
//   batch_size        4
//   lr_max            1e-4
//   lr_min            1e-5
//   seed              0
//   split_ratio       0.2
//   split_seed        41
//   augment           true
//   normalize         true             per-channel stats from the train split
//   data_dir          data
//   out_dir           runs
//   synthetic_count   32               images written by the gen command
#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include "vigunet/model.hpp"

namespace vigunet {

struct RunConfig {
  std::vector<std::size_t> dims{8, 16, 32, 64, 128};
  std::size_t input_size = 64;
  std::size_t in_channels = 3;
  std::size_t k = 9;
  std::size_t heads = 4;
  std::size_t ffn_ratio = 4;
  std::vector<std::size_t> reduction{1, 1, 1, 1, 1};
  double droppath = 0.0;
  bool droppath_ramp = false;
  bool skip_before_stage = false;
  std::size_t bottleneck_graphers = 2;

  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  double lr_max = 1e-4;
  double lr_min = 1e-5;
  std::uint64_t seed = 0;
  double split_ratio = 0.2;
  std::uint64_t split_seed = 41;
  bool augment = true;
  bool normalize = true;

  std::string data_dir = "data";
  std::string out_dir = "runs";
  std::size_t synthetic_count = 32;

  /// Throws ConfigError on invalid model settings.
  ModelConfig to_model_config() const;
};

/// `source` names the input in error messages ("<file>:<line>: ...").
RunConfig parse_run_config(std::istream &in, const std::string &source = "<config>");
RunConfig load_run_config(const std::string &path);

} // namespace vigunet
