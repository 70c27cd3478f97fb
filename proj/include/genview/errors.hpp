#pragma once

#include <stdexcept>
#include <string>

namespace genview {

// Root of the library's error hierarchy. The three direct children map to
// CLI exit codes: ConfigError -> 2, FormatError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Bad values or bad usage of the numerical operations.
class NumericError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public NumericError {
 public:
  using NumericError::NumericError;
};

class ShapeMismatch : public NumericError {
 public:
  using NumericError::NumericError;
};

class DegenerateCovariance : public NumericError {
 public:
  using NumericError::NumericError;
};

class InvalidValue : public NumericError {
 public:
  using NumericError::NumericError;
};

class ZeroVector : public NumericError {
 public:
  using NumericError::NumericError;
};

class EmptyInput : public NumericError {
 public:
  using NumericError::NumericError;
};

class OutOfRange : public NumericError {
 public:
  using NumericError::NumericError;
};

class InvalidConstant : public NumericError {
 public:
  using NumericError::NumericError;
};

class InvalidRange : public NumericError {
 public:
  using NumericError::NumericError;
};

class LevelOutOfRange : public NumericError {
 public:
  using NumericError::NumericError;
};

class LengthMismatch : public NumericError {
 public:
  using NumericError::NumericError;
};

class InvalidTemperature : public NumericError {
 public:
  using NumericError::NumericError;
};

class NonFinite : public NumericError {
 public:
  using NumericError::NumericError;
};

class InvalidDistribution : public NumericError {
 public:
  using NumericError::NumericError;
};

class InvalidConfig : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class SingleClass : public NumericError {
 public:
  using NumericError::NumericError;
};

class DivergedLoss : public NumericError {
 public:
  using NumericError::NumericError;
};

class MissingInput : public FormatError {
 public:
  using FormatError::FormatError;
};

class BadMagic : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedVersion : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFile : public FormatError {
 public:
  using FormatError::FormatError;
};

class DuplicateId : public FormatError {
 public:
  using FormatError::FormatError;
};

class OversizeHeader : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace genview
