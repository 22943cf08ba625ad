#pragma once

#include <stdexcept>
#include <string>

namespace destnet {

/// Base of all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not line up for the requested operation.
struct DimensionError : Error {
  using Error::Error;
};

/// Invalid configuration value (out-of-range hyperparameter, unknown key).
struct ConfigError : Error {
  using Error::Error;
};

/// Malformed input data (bad label, inconsistent sample).
struct DataError : Error {
  using Error::Error;
};

/// On-disk format violation (bad magic, truncation); message carries the byte offset.
struct FormatError : Error {
  using Error::Error;
};

/// Degenerate geometry: singular homography, vanishing perspective divisor.
struct GeometryError : Error {
  using Error::Error;
};

/// Architecture-string syntax error; message carries the position.
struct ParseError : Error {
  using Error::Error;
};

/// Ill-formed layer sequence (pool before conv, raster exhausted).
struct StructureError : Error {
  using Error::Error;
};

/// API misuse (non-scalar backward root, fusion arity mismatch).
struct UsageError : Error {
  using Error::Error;
};

/// Numeric failure (non-finite input where finite is required).
struct NumericError : Error {
  using Error::Error;
};

}  // namespace destnet
