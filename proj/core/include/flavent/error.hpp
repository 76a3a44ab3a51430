#pragma once

#include <stdexcept>
#include <string>

namespace flavent {

/// Bad input: malformed files, out-of-range parameters, violated preconditions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure did not reach its target (quadrature, SVD rank, minimizer).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flavent
