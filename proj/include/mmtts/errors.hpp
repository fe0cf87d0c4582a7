#pragma once

#include <stdexcept>
#include <string>

namespace mmtts {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad tensor shapes, empty inputs, out-of-range arguments.
struct InvalidInputError : Error {
  using Error::Error;
};

// Inconsistent or unparseable configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Inference requested a prompt modality that was not supplied.
struct MissingPromptError : Error {
  using Error::Error;
};

// Adaptive ODE solver could not make progress.
struct IntegrationError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Non-finite loss during training.
struct TrainingDivergedError : Error {
  using Error::Error;
};

}  // namespace mmtts
