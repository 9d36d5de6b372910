#pragma once

#include <stdexcept>
#include <string>

namespace ffm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad invocation or configuration (CLI exit code 2).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing input data (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training or evaluation (CLI exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Violated API contract, e.g. a computation graph consumed twice.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class FormatErrorKind { kBadMagic, kTruncated, kVersionMismatch, kInvalid, kIo };

inline const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kBadMagic: return "bad magic";
    case FormatErrorKind::kTruncated: return "truncated file";
    case FormatErrorKind::kVersionMismatch: return "version mismatch";
    case FormatErrorKind::kInvalid: return "invalid content";
    case FormatErrorKind::kIo: return "i/o failure";
  }
  return "unknown";
}

/// Binary container errors; `kind()` distinguishes the failure.
class FormatError : public DataError {
 public:
  FormatError(FormatErrorKind kind, const std::string& detail)
      : DataError(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

}  // namespace ffm
