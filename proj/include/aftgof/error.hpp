#pragma once

#include <stdexcept>
#include <string>

namespace aftgof {

/// Invalid or malformed input. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The covariate design cannot identify beta (constant or collinear columns).
class NonIdentifiableError : public DataError {
 public:
  using DataError::DataError;
};

/// A solver or resampling step failed. The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace aftgof
