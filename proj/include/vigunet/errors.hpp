// SPDX-License-Identifier: Apache-2.0
// Exception types shared by every vigunet module.
#pragma once

#include <stdexcept>
#include <string>

namespace vigunet {

/// Tensor shapes that do not fit an operation.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// An object used in a state it does not support (uninitialized BN stats,
/// missing gradients, ...).
class StateError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Invalid model or run configuration.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Dataset pairing and decoding failures.
class DatasetError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
public:
  enum class Kind { io, bad_magic, version_mismatch, truncated, shape_mismatch, missing_tensor };

  CheckpointError(Kind kind, const std::string &what)
    : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

} // namespace vigunet
