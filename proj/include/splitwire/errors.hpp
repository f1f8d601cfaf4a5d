#pragma once

#include <stdexcept>
#include <string>

namespace splitwire {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidSplitError : public Error {
 public:
  using Error::Error;
};

// Malformed or corrupted bytes: model files, entropy streams, wire messages.
class FormatError : public Error {
 public:
  enum class Kind {
    BadMagic,
    VersionMismatch,
    HashMismatch,
    Truncated,
    BadCrc,
    UnknownCodec,
    UnknownMessageType,
    LengthMismatch,
    Malformed,
    TooLarge,
  };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

// The peer replied with a protocol Error message.
class RemoteError : public TransportError {
 public:
  RemoteError(int code, const std::string& message)
      : TransportError("server error " + std::to_string(code) + ": " + message), code_(code) {}

  int code() const noexcept { return code_; }

 private:
  int code_;
};

}  // namespace splitwire
