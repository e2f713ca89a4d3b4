#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trialx {

/// Base of every error the engine raises. Callers that only need a message
/// can catch this; the subclasses carry location or classification data.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input file. `file` and `line` locate the
/// offending row (line is 1-based, 0 when the error is not row-specific).
class IngestError : public Error {
 public:
  IngestError(std::string file, std::size_t line, const std::string& what);

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

/// Contract violation on an argument (bad config, unknown name, range).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Criteria text that does not parse or does not validate.
class SpecError : public Error {
 public:
  SpecError(const std::string& what, std::size_t line, std::size_t column);

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  /// Message without the "line:col:" prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::size_t line_;
  std::size_t column_;
};

/// Predicate evaluation failure (unbound parameter, type mismatch).
class EvalError : public Error {
 public:
  using Error::Error;
};

/// A treatment or control arm is empty where both are required.
class EmptyArmError : public Error {
 public:
  using Error::Error;
};

/// Design matrix is rank deficient; the message names the collinear columns.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// The candidate grid exceeds the configured maximum size.
class GridTooLargeError : public Error {
 public:
  GridTooLargeError(std::size_t size, std::size_t limit);

  std::size_t size() const noexcept { return size_; }
  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t size_;
  std::size_t limit_;
};

/// A persisted document that cannot be read back: truncated, not JSON, or
/// structurally wrong.
class CorruptFileError : public Error {
 public:
  using Error::Error;
};

/// A persisted document written with an unsupported schema version.
class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace trialx
