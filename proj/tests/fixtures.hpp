#pragma once

#include "diracspec/potential.hpp"

namespace fixtures {

using diracspec::cplx;
using diracspec::PotentialSpec;

inline const cplx kP0{0.3, 0.0};
inline const cplx kQ0{0.0, 0.4};

inline PotentialSpec zero() { return PotentialSpec::zero(); }

inline PotentialSpec constant() { return PotentialSpec::constant(kP0, kQ0); }

/// p = 0.5 on [0, pi/2), -0.5 + 0.2i on [pi/2, pi); q = 0.1.
inline PotentialSpec piecewise() {
  return PotentialSpec::piecewise({
      {{0, 1}, {1, 2}, cplx(0.5, 0.0), cplx(0.1, 0.0)},
      {{1, 2}, {1, 1}, cplx(-0.5, 0.2), cplx(0.1, 0.0)},
  });
}

/// Fixture C written as a Fourier spec (k = 0 terms only), for the adaptive backend.
inline PotentialSpec constant_fourier() {
  return PotentialSpec::fourier({{0, kP0}}, {{0, kQ0}});
}

inline PotentialSpec zero_fourier() { return PotentialSpec::fourier({}, {}); }

/// A genuinely x-dependent smooth potential.
inline PotentialSpec smooth() {
  return PotentialSpec::fourier({{1, cplx(0.2, 0.1)}, {-1, cplx(0.1, 0.0)}},
                                {{0, cplx(0.0, 0.1)}, {2, cplx(0.05, -0.05)}});
}

}  // namespace fixtures

namespace fixtures {

/// Piecewise family with a double eigenvalue at lambda = 0 whose
/// quasimomentum crosses the real axis near t = 0.486 for mu in (0.03, 0.1).
inline PotentialSpec collision_family(double mu) {
  return PotentialSpec::piecewise({
      {{0, 1}, {1, 2}, cplx(0.5, 0.0), cplx(0.1, mu)},
      {{1, 2}, {1, 1}, cplx(-0.5, 1.0), cplx(0.1, 0.0)},
  });
}

}  // namespace fixtures
