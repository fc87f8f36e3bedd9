#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcgcl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to a primitive's rules.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced or detected.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A caller broke an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// An output file or directory could not be written.
class OutputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Training diverged; carries the stage and epoch where it happened.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::string stage, std::size_t epoch, const std::string& what)
      : NumericError(stage + " stage, epoch " + std::to_string(epoch) + ": " + what),
        stage_(std::move(stage)),
        epoch_(epoch) {}

  const std::string& stage() const { return stage_; }
  std::size_t epoch() const { return epoch_; }

 private:
  std::string stage_;
  std::size_t epoch_;
};

}  // namespace mcgcl
