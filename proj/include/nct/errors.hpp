#ifndef NCT_ERRORS_HPP
#define NCT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace nct {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid or inconsistent input parameters (theta mismatch, bad geometry, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// An iteration failed to reach its tolerance within the budget.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& msg, double residual)
      : Error(msg), residual(residual) {}
  double residual;
};

/// Spectral lower bound of a positive element crossed zero.
class InvertibilityError : public Error {
 public:
  using Error::Error;
};

/// A Gaussian exponent lost its negative real part (non-integrable section).
class IntegrabilityError : public Error {
 public:
  using Error::Error;
};

/// Truncation window too small: tail mass or least-squares residual over budget.
class WindowError : public Error {
 public:
  WindowError(const std::string& msg, double residual)
      : Error(msg), residual(residual) {}
  double residual;
};

/// Test-section battery is numerically degenerate.
class BasisError : public Error {
 public:
  using Error::Error;
};

}  // namespace nct

#endif
