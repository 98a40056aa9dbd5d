#pragma once

#include <stdexcept>
#include <string>

namespace gestimate {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// bad input data or model specification; the cli maps these to exit code 2
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

// solver failures, singular systems, separation; exit code 1
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace gestimate
