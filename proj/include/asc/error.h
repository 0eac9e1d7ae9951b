#pragma once

#include <stdexcept>
#include <string>

namespace asc {

// Exception families map one-to-one onto the CLI exit codes.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for audio whose sample rate differs from the expected 22050 Hz.
/// Callers can opt out with allow_any_rate.
class SampleRateError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace asc
