#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rifl {

// Argument outside the documented domain (probabilities, sizes, shapes).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Iterative numerics that failed to reach tolerance.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

class SingularDesignError : public NumericError {
 public:
  using NumericError::NumericError;
};

class SeparationError : public NumericError {
 public:
  using NumericError::NumericError;
};

class DegenerateFunctionalError : public DomainError {
 public:
  using DomainError::DomainError;
};

class InfeasibleError : public NumericError {
 public:
  InfeasibleError(const std::string& what, double lambda)
      : NumericError(what), lambda_(lambda) {}
  double lambda() const { return lambda_; }

 private:
  double lambda_;
};

// Raised when no resampled clique satisfies the majority rule.
struct MajorityDiagnostics {
  double rho = 0.0;
  double threshold = 0.0;
  int resamples = 0;
  int largest_clique = 0;
  // histogram[s] = number of draws whose maximum clique has size s
  std::vector<int> clique_histogram;
};

class MajorityRuleError : public std::runtime_error {
 public:
  MajorityRuleError(const std::string& what, MajorityDiagnostics diag)
      : std::runtime_error(what), diag_(std::move(diag)) {}
  const MajorityDiagnostics& diagnostics() const { return diag_; }

 private:
  MajorityDiagnostics diag_;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rifl
