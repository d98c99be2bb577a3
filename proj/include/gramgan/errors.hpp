#pragma once

#include <stdexcept>
#include <string>

namespace gramgan {

/// Raised when a training or adaptation step produces a non-finite value.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for unreadable, truncated or mismatched checkpoint/delta files.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a configuration document fails validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation needs a conditional model but got a
/// single-exemplar one, or vice versa.
class ModeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gramgan
