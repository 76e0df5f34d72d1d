#pragma once

#include "diracspec/types.hpp"

#include <stdexcept>
#include <string>

namespace diracspec {

enum class ErrorKind {
  validation,
  integration,
  localization,
  solver,
  contour,
  completeness,
  degenerate,
  near_singular,
  collision,
  probe,
  isolation,
  quadrature,
  io,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::integration: return "integration";
    case ErrorKind::localization: return "localization";
    case ErrorKind::solver: return "solver";
    case ErrorKind::contour: return "contour";
    case ErrorKind::completeness: return "completeness";
    case ErrorKind::degenerate: return "degenerate_eigenvalue";
    case ErrorKind::near_singular: return "near_singular";
    case ErrorKind::collision: return "collision";
    case ErrorKind::probe: return "probe_failure";
    case ErrorKind::isolation: return "contour_isolation";
    case ErrorKind::quadrature: return "quadrature";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

/// Base of every library error. `numeric()` separates user input problems
/// (validation) from failures of the numerics.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  bool numeric() const noexcept { return kind_ != ErrorKind::validation; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& w) : Error(ErrorKind::validation, w) {}
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& w, double worst_local_error)
      : Error(ErrorKind::integration, w), worst_(worst_local_error) {}
  double worst_local_error() const noexcept { return worst_; }

 private:
  double worst_;
};

class LocalizationError : public Error {
 public:
  explicit LocalizationError(const std::string& w) : Error(ErrorKind::localization, w) {}
};

class SolverError : public Error {
 public:
  explicit SolverError(const std::string& w) : Error(ErrorKind::solver, w) {}
};

class ContourError : public Error {
 public:
  ContourError(const std::string& w, double min_abs)
      : Error(ErrorKind::contour, w), min_abs_(min_abs) {}
  double min_abs() const noexcept { return min_abs_; }

 private:
  double min_abs_;
};

class CompletenessError : public Error {
 public:
  CompletenessError(const std::string& w, int expected, int found)
      : Error(ErrorKind::completeness, w), expected_(expected), found_(found) {}
  int expected() const noexcept { return expected_; }
  int found() const noexcept { return found_; }

 private:
  int expected_, found_;
};

/// Condition (7) fails: F'(lambda) or s1(pi, lambda) below threshold.
class DegenerateEigenvalueError : public Error {
 public:
  DegenerateEigenvalueError(const std::string& w, cplx lambda)
      : Error(ErrorKind::degenerate, w), lambda_(lambda) {}
  cplx lambda() const noexcept { return lambda_; }

 private:
  cplx lambda_;
};

class NearSingularError : public Error {
 public:
  NearSingularError(const std::string& w, double delta_abs)
      : Error(ErrorKind::near_singular, w), delta_(delta_abs) {}
  double delta_abs() const noexcept { return delta_; }

 private:
  double delta_;
};

/// Two tracked branches met; [t_lo, t_hi] brackets the meeting point.
class CollisionError : public Error {
 public:
  CollisionError(const std::string& w, cplx t_lo, cplx t_hi)
      : Error(ErrorKind::collision, w), lo_(t_lo), hi_(t_hi) {}
  cplx t_lo() const noexcept { return lo_; }
  cplx t_hi() const noexcept { return hi_; }

 private:
  cplx lo_, hi_;
};

class ProbeFailure : public Error {
 public:
  ProbeFailure(const std::string& w, cplx t) : Error(ErrorKind::probe, w), t_(t) {}
  cplx t() const noexcept { return t_; }

 private:
  cplx t_;
};

class IsolationError : public Error {
 public:
  explicit IsolationError(const std::string& w) : Error(ErrorKind::isolation, w) {}
};

class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& w, double change)
      : Error(ErrorKind::quadrature, w), change_(change) {}
  double change() const noexcept { return change_; }

 private:
  double change_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& w) : Error(ErrorKind::io, w) {}
};

}  // namespace diracspec
