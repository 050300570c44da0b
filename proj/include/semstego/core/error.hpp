#pragma once

#include <stdexcept>
#include <string>

namespace semstego {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or image dimensions that violate an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A scalar argument outside its admissible range.
class RangeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A file or payload whose bytes do not describe a valid object.
class CorruptDataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Network failure talking to a remote backend. Callers may retry.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0)
      : Error(what), status_(status) {}
  // HTTP status, or 0 when the request never produced a response.
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class InvalidKeyError : public Error {
 public:
  using Error::Error;
};

class AccessError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

// Wraps a failure from one stage of the end-to-end protocol.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace semstego
