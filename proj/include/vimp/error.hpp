#pragma once

#include <stdexcept>
#include <string>

namespace vimp {

// Base of every error raised by the library. The CLI maps ValidationError
// to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InvalidRho : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class TooFewRows : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NonFinite : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class DegenerateCovariance : public Error {
 public:
  using Error::Error;
};

class ZeroVariance : public Error {
 public:
  using Error::Error;
};

}  // namespace vimp
