#pragma once

#include <stdexcept>
#include <string>

namespace sensekit {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid argument or violated precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Requested entity (paper id, template name, ...) does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Structured text (score tags, JSON lines, templates) could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Provider request failed at the transport level. Carries the attempt count
/// so callers can distinguish a first-try failure from exhausted retries.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what, int attempts = 1)
      : Error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

/// Replay-mode request whose digest is not in the transcript.
class ReplayMissError : public TransportError {
 public:
  explicit ReplayMissError(const std::string& what) : TransportError(what, 1) {}
};

/// Provider answered but the payload violates the wire contract
/// (missing fields, mismatched embedding dimensions, ...).
class ProviderContractError : public Error {
 public:
  using Error::Error;
};

/// Numerically meaningless input (zero-norm vector, empty pooled embedding).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace sensekit
