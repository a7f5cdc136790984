#pragma once

#include <stdexcept>
#include <string>

namespace hitok {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kFormat = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, std::string kind, const std::string& msg)
      : std::runtime_error(msg), code_(code), kind_(std::move(kind)) {}

  ExitCode code() const { return code_; }
  const std::string& kind() const { return kind_; }

 private:
  ExitCode code_;
  std::string kind_;
};

// Bad arguments, shape mismatches, invalid configuration.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(ExitCode::kUsage, "usage", msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(ExitCode::kUsage, "shape", msg) {}
};

// NaN/Inf produced by an op, divergent training.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(ExitCode::kNumeric, "numeric", msg) {}
};

enum class FormatErrc {
  kBadMagic,
  kTruncated,
  kVersionMismatch,
  kInvalidField,
  kIo,
};

inline const char* to_string(FormatErrc e) {
  switch (e) {
    case FormatErrc::kBadMagic: return "bad_magic";
    case FormatErrc::kTruncated: return "truncated";
    case FormatErrc::kVersionMismatch: return "version_mismatch";
    case FormatErrc::kInvalidField: return "invalid_field";
    case FormatErrc::kIo: return "io";
  }
  return "unknown";
}

class FormatError : public Error {
 public:
  FormatError(FormatErrc errc, const std::string& msg)
      : Error(ExitCode::kFormat, to_string(errc), msg), errc_(errc) {}

  FormatErrc errc() const { return errc_; }

 private:
  FormatErrc errc_;
};

}  // namespace hitok
