#pragma once

#include <stdexcept>
#include <string>

namespace saeaudit {

// Base class for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible matrix / tensor dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid argument values (out-of-range labels, bad indices, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration (bad hyperparameters, unknown
// config keys, unregistered method names).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss) or could not proceed.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Expert-feature selection could not satisfy its contract.
class SelectionError : public Error {
 public:
  using Error::Error;
};

// File I/O and container-format failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage failed; the message names the stage.
class StageError : public Error {
 public:
  using Error::Error;
};

}  // namespace saeaudit
