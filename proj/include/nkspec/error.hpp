#pragma once

#include <stdexcept>
#include <string>

namespace nkspec {

// Bad input: malformed configs, violated preconditions, unknown ids.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A memory or enumeration cap would be exceeded.
struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Factorization failure, non-finite values.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace nkspec
