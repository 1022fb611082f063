#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace osxr {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Extents do not fit the operation (mismatch, zero extent, window too large).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the operation's domain (empty input, bad label, bad fraction).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a usage contract (backward twice, step without grads).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Object is not in a usable state (e.g. an untrained generator).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or stream failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed encoded data. Carries the byte offset where decoding stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), message_(what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }
  /// The message without the offset suffix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::size_t offset_;
};

/// Checkpoint missing, unreadable, or inconsistent with the model it should build.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace osxr
