#pragma once

#include <stdexcept>
#include <string>

namespace arrestmap {

// Input-side failures (bad files, bad config, violated preconditions) map to
// exit code 2 in the CLI; everything else derived from Error maps to 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class LoadError : public InputError {
 public:
  using InputError::InputError;
};

class FormatError : public InputError {
 public:
  using InputError::InputError;
};

class ValidationError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class InvalidInput : public InputError {
 public:
  using InputError::InputError;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class DegenerateGraph : public Error {
 public:
  using Error::Error;
};

}  // namespace arrestmap
