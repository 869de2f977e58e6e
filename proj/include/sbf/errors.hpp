#pragma once

#include <stdexcept>
#include <string>

namespace sbf {

// Invalid or inconsistent configuration (exit code 2 at the CLI).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input outside an operation's mathematical domain.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure during training (NaN loss, non-finite gradient).
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Persistence failures: missing files, truncated blobs, bad manifests.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sbf
