#pragma once

#include <stdexcept>
#include <string>

namespace sonar_oi {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input clouds too small to register (distinct from a registration that ran and failed).
class InsufficientPoints : public Error {
 public:
  using Error::Error;
};

/// A pose-graph variable is not tied to any prior, or an endpoint is missing.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Information matrix could not be factorized; names the offending variable when known.
class SingularInformation : public Error {
 public:
  SingularInformation(const std::string& what, int variable)
      : Error(what), variable_(variable) {}
  [[nodiscard]] int variable() const noexcept { return variable_; }

 private:
  int variable_;
};

/// Remote translator could not be reached, timed out, or spoke a malformed protocol.
class TranslatorUnavailable : public Error {
 public:
  using Error::Error;
};

/// Procedural generation could not satisfy its constraints.
class GenerationFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace sonar_oi
