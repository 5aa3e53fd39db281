#pragma once

#include <stdexcept>

namespace fedora {

// Error families; the CLI maps them to exit codes (config/validation -> 2,
// divergence -> 3, io -> 4).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : ValidationError {
  using ValidationError::ValidationError;
};

struct AlignmentError : ValidationError {
  using ValidationError::ValidationError;
};

struct ConfigError : ValidationError {
  using ValidationError::ValidationError;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IngestionError : IoError {
  using IoError::IoError;
};

}  // namespace fedora
