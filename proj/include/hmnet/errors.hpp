#pragma once

#include <stdexcept>
#include <string>

namespace hmnet {

// Root of every error thrown by the library. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Face indices out of range, isolated vertices, empty neighborhoods.
class TopologyError : public Error {
 public:
  using Error::Error;
};

// Dimension or count mismatch between two operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Every vertex of a sample projected outside the raster grid.
class DegenerateSampleError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

// A caller broke an API contract (e.g. backward on a stale trace).
class ContractError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Malformed or mismatched files on disk.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace hmnet
