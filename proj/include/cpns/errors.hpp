// ============================================================================
// errors.hpp -- exception types shared by the cpns library
// ============================================================================
#pragma once
#include <stdexcept>
#include <string>

namespace cpns {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// The physical model is used outside the range where it is a valid
/// approximation (e.g. a "hitting probability" above one).
class ModelValidityError : public std::runtime_error {
public:
  explicit ModelValidityError(const std::string& what) : std::runtime_error(what) {}
};

/// Iterative evaluation failed to converge or lost too much precision.
class ConvergenceError : public std::runtime_error {
public:
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// The requested computation is not feasible at the configured size or
/// tolerance (e.g. enumeration too large, truncation tail too heavy).
class InfeasibleError : public std::runtime_error {
public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cpns
