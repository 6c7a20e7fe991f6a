#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace csc {

enum class ErrorKind {
  InvalidArgument,
  Load,
  Parse,
  Remote,
  Internal,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::Load: return "load_error";
    case ErrorKind::Parse: return "parse_error";
    case ErrorKind::Remote: return "remote_error";
    case ErrorKind::Internal: return "internal_error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class LoadError : public Error {
 public:
  explicit LoadError(const std::string& message) : Error(ErrorKind::Load, message) {}
};

/// Malformed input at a known location; the message carries `source:line`.
class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what)
      : Error(ErrorKind::Parse, source + ":" + std::to_string(line) + ": " + what),
        source_(std::move(source)),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorKind::InvalidArgument, message);
}

}  // namespace csc
