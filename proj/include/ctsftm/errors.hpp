#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ctsftm {

// Base class for every error the library raises deliberately.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data: bad CSV rows, subjects violating
// the dispensation geometry, covariate processes out of order.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Argument outside an operation's domain (negative time, evaluation past
// the follow-up time, non-positive target for the inverse transform).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Exponent clamp exceeded in the counterfactual time transform.
class OverflowError : public Error {
 public:
  using Error::Error;
};

// Iterative fit exhausted its iteration budget; carries the last iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& msg, std::vector<double> iterate)
      : Error(msg), last_iterate(std::move(iterate)) {}
  explicit ConvergenceError(const std::string& msg) : Error(msg) {}
  std::vector<double> last_iterate;
};

// Censoring-survival positivity floor violated for a named subject.
class PositivityError : public Error {
 public:
  using Error::Error;
};

// Estimating-equation Jacobian is singular: no treatment variation or a
// degenerate effect-modifier map.
class NonIdentifiabilityError : public Error {
 public:
  using Error::Error;
};

// Config file or CLI argument problems.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A feature map touched history at or after its evaluation bound.  This is a
// programming error in the feature specification, not a data problem.
class LeakageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace ctsftm
