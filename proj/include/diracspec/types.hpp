#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdlib>
#include <numbers>
#include <string>

namespace diracspec {

using cplx = std::complex<double>;
using Vec2 = Eigen::Matrix<cplx, 2, 1>;
using Mat2 = Eigen::Matrix<cplx, 2, 2>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr cplx kI{0.0, 1.0};

/// Numeric knobs shared by every module. Defaults are the documented ones;
/// `from_environment` lets the CLI override them.
struct Tolerances {
  double integrator_abs = 1e-12;
  double integrator_rel = 1e-12;
  double root_residual = 1e-10;
  double contour_min_abs = 1e-8;   ///< min |G| allowed on a counting contour
  double degenerate = 1e-8;        ///< |F'| and |s1| thresholds of condition (7)
  double integer_guard = 1e-6;     ///< guard radius around integer t
  double projection_quad = 1e-10;  ///< trapezoid doubling stop on circles
  double term_quad = 1e-8;         ///< node-doubling stop for t-integrals
  double near_singular = 1e-10;    ///< min |Delta| for resolvent evaluation

  static Tolerances from_environment() {
    Tolerances t;
    auto read = [](const char* name, double& slot) {
      if (const char* v = std::getenv(name)) {
        char* end = nullptr;
        double x = std::strtod(v, &end);
        if (end != v && x > 0) slot = x;
      }
    };
    double integ = t.integrator_abs;
    read("DIRACSPEC_INTEGRATOR_TOL", integ);
    t.integrator_abs = t.integrator_rel = integ;
    read("DIRACSPEC_ROOT_TOL", t.root_residual);
    read("DIRACSPEC_QUAD_TOL", t.projection_quad);
    read("DIRACSPEC_CONTOUR_TOL", t.contour_min_abs);
    return t;
  }
};

/// Branch label (n, j) with j in {1, 2}.
struct Label {
  int n = 0;
  int j = 1;
  friend bool operator==(const Label&, const Label&) = default;
  friend auto operator<=>(const Label&, const Label&) = default;
};

/// Zero-potential center 2n + t (j = 1) or 2n - t (j = 2).
inline cplx center_of(Label l, cplx t) {
  return l.j == 1 ? 2.0 * l.n + t : 2.0 * l.n - t;
}

/// Distance from t to the nearest integer.
inline double distance_to_integers(cplx t) {
  return std::abs(t - std::round(t.real()));
}

}  // namespace diracspec
