#pragma once

#include <stdexcept>
#include <string>

namespace commod {

/// Raised for any contract violation or failed computation in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a theory or acceptance check fails (distinct exit code in the CLI).
class VerificationFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace commod
