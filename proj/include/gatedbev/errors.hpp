#pragma once

#include <stdexcept>
#include <string>

namespace gatedbev {

// Base for everything this library throws on bad input or environment.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or precondition violation (bad grid, N % 4 != 0, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shape or size disagreement between tensors.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or parameters during training.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class IoError : public Error {
 public:
  enum class Kind { unwritable, missing, corrupt, schema_mismatch, token_collision };

  IoError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace gatedbev
