#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lottery {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (negative public
// good, nonpositive scale factor, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// An internal invariant that construction should have ruled out.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

// Input to H^-1 above H(0).
class OutOfCodomain : public Error {
 public:
  using Error::Error;
};

// The odds term divides by s_bar - c_bar == 0.
class SingularPool : public Error {
 public:
  using Error::Error;
};

// No aggregate first-order-condition root with a positive pool.
class InfeasibleRegime : public Error {
 public:
  using Error::Error;
};

class NonConvergence : public Error {
 public:
  using Error::Error;
};

// Closed-form sensitivities requested with inactive players present.
class UnsupportedRegime : public Error {
 public:
  using Error::Error;
};

class SolverFailure : public Error {
 public:
  using Error::Error;
};

// A design handed to verification that violates its own constraints.
class InfeasibleDesign : public Error {
 public:
  using Error::Error;
};

// The equilibrium induced by a designed (R, c) disagrees with the
// reformulation's prediction.
class ExactnessViolation : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace lottery
