#pragma once

#include <stdexcept>
#include <string>

namespace prox {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or geometry mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid argument value (rate, ratio, factor, ...).
struct ParameterError : Error {
  using Error::Error;
};

// Invalid interval bounds (lo >= hi).
struct RangeError : Error {
  using Error::Error;
};

// Malformed file contents.
struct FormatError : Error {
  using Error::Error;
};

// Operation attempted on an object in the wrong state.
struct StateError : Error {
  using Error::Error;
};

// Non-finite values or a failed numerical procedure.
struct NumericalError : Error {
  using Error::Error;
};

// Patch list does not match its grid.
struct GridError : Error {
  using Error::Error;
};

// A pluggable component violated its interface contract.
struct ContractError : Error {
  using Error::Error;
};

// Malformed composite value (e.g. inconsistent wavelet bands).
struct StructureError : Error {
  using Error::Error;
};

// Training diverged or was misconfigured.
struct TrainingError : Error {
  using Error::Error;
};

// Bad configuration file or command line.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace prox
