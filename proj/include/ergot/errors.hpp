#pragma once

#include <stdexcept>
#include <string>

namespace ergot {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A spectral object would need modes beyond its cutoff to meet the
/// requested tolerance. `tail` carries the estimated missing mass.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, double tail)
      : Error(what), tail_(tail) {}
  double tail() const noexcept { return tail_; }

 private:
  double tail_;
};

/// An iterative or adaptive scheme stopped before meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A density that must be positive (or nearly so) is not.
class DensityError : public Error {
 public:
  using Error::Error;
};

}  // namespace ergot
