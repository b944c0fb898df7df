// SPDX-License-Identifier: Apache-2.0
// Binary model checkpoints.
//
// Layout (little-endian):
//   "VGUN"  u32 version
//   u32 config_len, config_len bytes of "key=value" lines (model config echo)
//   u32 entry_count
//   entry_count x { u32 name_len, name bytes, tensor (see write_tensor) }
//
// Entries are the model's tensors in visit() order followed by any extra
// named tensors (e.g. input normalization statistics).
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "vigunet/model.hpp"

namespace vigunet {

inline constexpr char kCheckpointMagic[4] = {'V', 'G', 'U', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_model_config(const ModelConfig &cfg);
ModelConfig parse_model_config(std::string_view text);

struct LoadedCheckpoint {
  VigUnet<float> model;
  std::map<std::string, Tensor<float>> extras;
};

void save_checkpoint(VigUnet<float> &m, const std::string &path,
                     const std::map<std::string, Tensor<float>> &extras = {});

/// Rebuilds the model from the stored config echo. When `expected` is given
/// the tensors are loaded into that configuration instead, and any shape
/// difference is reported as Kind::shape_mismatch naming the tensor.
LoadedCheckpoint load_checkpoint(const std::string &path,
                                 const std::optional<ModelConfig> &expected = std::nullopt);

} // namespace vigunet
