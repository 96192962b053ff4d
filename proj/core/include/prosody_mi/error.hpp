#pragma once

#include <stdexcept>
#include <string>

namespace prosody_mi {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kConfig,   // bad parameters or configuration
  kData,     // malformed or inconsistent input data
  kNumeric,  // numerical failure (divergence, degenerate data, quadrature)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Invalid argument or configuration value.
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

// Malformed file content; carries the offending line when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, long line, const std::string& what)
      : Error(ErrorKind::kData,
              source + (line > 0 ? ":" + std::to_string(line) : "") + ": " +
                  what),
        line_(line) {}

  long line() const noexcept { return line_; }

 private:
  long line_;
};

// Input parsed but violates a data invariant.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::kData, what) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what)
      : Error(ErrorKind::kData, what) {}
};

// Data that cannot support the requested estimate (zero variance, singular
// covariance, empty voicing, too little class data).
class DegenerateDataError : public Error {
 public:
  explicit DegenerateDataError(const std::string& what)
      : Error(ErrorKind::kNumeric, what) {}
};

class SupportError : public Error {
 public:
  explicit SupportError(const std::string& what)
      : Error(ErrorKind::kData, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(int epoch, const std::string& what)
      : Error(ErrorKind::kNumeric, what), epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::kNumeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

}  // namespace prosody_mi
