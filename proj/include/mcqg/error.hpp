#pragma once

#include <stdexcept>
#include <string>

namespace mcqg {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a domain invariant (empty field, duplicate option, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Config file or path problems. The CLI maps these to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A model reply could not be parsed after the allowed retries.
/// Carries the last raw reply so callers can persist it.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw_reply)
      : Error(what), raw_reply_(std::move(raw_reply)) {}

  const std::string& raw_reply() const noexcept { return raw_reply_; }

 private:
  std::string raw_reply_;
};

/// Anything that went wrong talking to a model gateway.
class BackendError : public Error {
 public:
  enum class Kind { auth, rate_limit, transport, malformed_reply, replay_miss };

  BackendError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Two input files that should describe the same items do not.
class InputMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcqg
