#pragma once
#include <stdexcept>
#include <string>

namespace dice {

// exit codes: config 2, data 3, numerical 4
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

class ConfigError : public Error {
public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class DataError : public Error {
public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

// zero variance, empty region, single class, ...
class DegenerateInput : public DataError {
public:
  using DataError::DataError;
};

class NumericalError : public Error {
public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

}  // namespace dice
