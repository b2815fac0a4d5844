#pragma once

#include <stdexcept>
#include <string>

namespace capstext {

// Tensor shapes incompatible with the requested operation.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A documented call contract was violated (bad argument range, wrong mode).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed external data: dataset files, embedding files, checkpoints.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failure (unreadable/unwritable path).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training aborted (non-finite loss and similar runtime failures).
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace capstext
