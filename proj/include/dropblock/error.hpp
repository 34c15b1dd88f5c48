#pragma once

#include <stdexcept>
#include <string>

namespace dropblock {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that are malformed or do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument outside its admissible range (probabilities, rates).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// block_size does not fit the feature map, so the seed region is empty.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an input contract that cannot be expressed as a shape.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data (IDX, PGM).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Bad run configuration text.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace dropblock
