#pragma once

#include <stdexcept>
#include <string>

namespace gsdtta {

// Exit codes used by the command-line tool. Every error type below maps to
// exactly one of them.
enum class ExitCode : int {
  kSuccess = 0,
  kUsage = 2,
  kGateFailure = 3,
  kIo = 4,
  kNumeric = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad arguments, malformed configuration, or violated preconditions.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ExitCode::kUsage, what) {}
};

/// File missing, unreadable or unwritable, or a data file that does not parse.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::kIo, what) {}
};

/// A line-level parse failure inside a data file.
class ParseError : public IoError {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& detail)
      : IoError(path + ":" + std::to_string(line) + ": " + detail), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Non-finite values, solver failure, divergence.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, what) {}
};

/// A quality gate (e.g. minimum clean accuracy) was not met.
class GateError : public Error {
 public:
  explicit GateError(const std::string& what) : Error(ExitCode::kGateFailure, what) {}
};

}  // namespace gsdtta
