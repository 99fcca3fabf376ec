#pragma once

#include <stdexcept>
#include <string>

namespace esscher {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: model, claim, grid or option outside its documented range.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A root search or optimizer did not converge. Carries the last bracket.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double lo, double hi)
      : Error(what), lo_(lo), hi_(hi) {}

  double bracket_lo() const noexcept { return lo_; }
  double bracket_hi() const noexcept { return hi_; }

 private:
  double lo_;
  double hi_;
};

/// The jump law puts mass on one side of zero only, so no tilt can make
/// the price a martingale.
class OneSidedJumpsError : public SolverError {
 public:
  using SolverError::SolverError;
};

class OverflowError : public Error {
 public:
  using Error::Error;
};

}  // namespace esscher
