#pragma once

#include <stdexcept>
#include <string>

namespace advcloak {

// Precondition violations on inputs (shape mismatch, empty sets, bad ranges).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A run configuration failed validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An upstream artifact (dataset, checkpoint) required by a stage is absent.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace advcloak
