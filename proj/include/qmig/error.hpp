#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qmig {

enum class ErrorCode {
  InvalidArgument,
  InvalidCid,
  InvalidVersion,
  CidTooShort,
  NotVersionNegotiation,
  EchoMismatch,
  Truncated,
  UnknownFrameType,
  InvalidFrame,
  ProtocolViolation,
  LimitExceeded,
  NoSpareCid,
  NoIssuedCid,
  MigrationDisabled,
  WrongPhase,
  UnknownPath,
  DeadlineExceeded,
  TransportUnavailable,
  Blocklisted,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure surfaced by the library is an Error carrying a code, so
// callers can branch on the code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Input file errors report the 1-based line that failed.
class ParseError : public Error {
 public:
  ParseError(std::string_view source, std::size_t line, std::string_view detail);

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace qmig
