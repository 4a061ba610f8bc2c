#pragma once

#include <stdexcept>
#include <string>

namespace beamkd {

/// Caller violated a precondition (bad shapes, bad flags, missing inputs).
/// The CLI maps this to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Filesystem or decoding failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace beamkd
