#pragma once

#include "diracspec/errors.hpp"
#include "diracspec/integrator.hpp"
#include "diracspec/potential.hpp"
#include "diracspec/quadrature.hpp"
#include "diracspec/types.hpp"

#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <vector>

namespace diracspec {

/// y' = A y for J y' + Q y = lambda y, J = [[0, 1], [-1, 0]]:
/// A = -J (lambda I - Q) = [[q, -(lambda + p)], [lambda - p, -q]].
inline Mat2 system_matrix(cplx lambda, cplx p, cplx q) {
  Mat2 a;
  a << q, -(lambda + p), lambda - p, -q;
  return a;
}

/// cos(z) and sin(z)/z as functions of z^2 (branch free).
inline void cos_sinc(cplx z2, cplx& c, cplx& sc) {
  if (std::abs(z2) < 1e-3) {
    // Taylor to z^10; truncation below 1e-19 at this radius.
    c = 1.0 + z2 * (-0.5 + z2 * (1.0 / 24 + z2 * (-1.0 / 720 + z2 * (1.0 / 40320 - z2 / 3628800.0))));
    sc = 1.0 + z2 * (-1.0 / 6 + z2 * (1.0 / 120 + z2 * (-1.0 / 5040 + z2 * (1.0 / 362880 - z2 / 39916800.0))));
    return;
  }
  cplx z = std::sqrt(z2);
  c = std::cos(z);
  sc = std::sin(z) / z;
}

/// exp(A dx) for traceless A with A^2 = -omega2 I.
inline Mat2 traceless_exp(const Mat2& a, cplx omega2, double dx) {
  cplx c, sc;
  cos_sinc(omega2 * dx * dx, c, sc);
  Mat2 e = (dx * sc) * a;
  e(0, 0) += c;
  e(1, 1) += c;
  return e;
}

/// Fundamental matrix Y(x, lambda) = [c | s] evaluated on an increasing list
/// of points in [0, pi]. Exact for piecewise specs, DOP853 for Fourier specs.
inline std::vector<Mat2> propagate(const PotentialSpec& spec, cplx lambda,
                                   std::span<const double> xs, const Tolerances& tol = {},
                                   IntegratorStats* stats = nullptr) {
  std::vector<Mat2> out;
  out.reserve(xs.size());
  Mat2 y = Mat2::Identity();
  if (spec.kind() == PotentialSpec::Kind::piecewise) {
    const auto& pcs = spec.pieces();
    std::vector<Mat2> a(pcs.size());
    std::vector<cplx> w2(pcs.size());
    for (std::size_t i = 0; i < pcs.size(); ++i) {
      a[i] = system_matrix(lambda, pcs[i].p, pcs[i].q);
      w2[i] = lambda * lambda - pcs[i].p * pcs[i].p - pcs[i].q * pcs[i].q;
    }
    double pos = 0;
    std::size_t k = 0;
    for (double x : xs) {
      if (x < pos - 1e-15) throw ValidationError("propagate: points must be increasing");
      while (k + 1 < pcs.size() && x > pcs[k].b.radians()) {
        double end = pcs[k].b.radians();
        y = traceless_exp(a[k], w2[k], end - pos) * y;
        pos = end;
        ++k;
      }
      if (x > pos) {
        y = traceless_exp(a[k], w2[k], x - pos) * y;
        pos = x;
      }
      out.push_back(y);
    }
    return out;
  }
  IntegratorOptions opt;
  opt.atol = tol.integrator_abs;
  opt.rtol = tol.integrator_rel;
  auto rhs = [&](double x, const Mat2& m) -> Mat2 {
    return system_matrix(lambda, spec.p(x), spec.q(x)) * m;
  };
  double pos = 0, h = 0;
  for (double x : xs) {
    if (x < pos - 1e-15) throw ValidationError("propagate: points must be increasing");
    if (x > pos) {
      dop853_integrate(rhs, pos, x, y, h, opt, stats);
      pos = x;
    }
    out.push_back(y);
  }
  return out;
}

inline Mat2 monodromy(const PotentialSpec& spec, cplx lambda, const Tolerances& tol = {}) {
  const double pi[1] = {kPi};
  return propagate(spec, lambda, pi, tol).back();
}

/// Sampled c(., lambda), s(., lambda) on a uniform grid plus Y(pi, lambda).
struct FundamentalPair {
  cplx lambda;
  std::vector<double> grid;
  std::vector<Vec2> c_values, s_values;
  Mat2 monodromy;
  double wronskian_residual = 0;  ///< max |c1 s2 - c2 s1 - 1| over the grid
};

inline FundamentalPair fundamental_solutions(const PotentialSpec& spec, cplx lambda,
                                             int resolution, const Tolerances& tol = {}) {
  if (resolution < 2) throw ValidationError("resolution must be at least 2");
  FundamentalPair fp;
  fp.lambda = lambda;
  for (int i = 0; i <= resolution; ++i) fp.grid.push_back(kPi * i / resolution);
  auto ys = propagate(spec, lambda, fp.grid, tol);
  for (const auto& y : ys) {
    fp.c_values.push_back(y.col(0));
    fp.s_values.push_back(y.col(1));
    fp.wronskian_residual = std::max(fp.wronskian_residual, std::abs(y.determinant() - 1.0));
  }
  fp.monodromy = ys.back();
  return fp;
}

struct DiscriminantSample {
  cplx lambda;
  cplx F;
  cplx F_prime;
  cplx c1_pi, c2_pi, s1_pi, s2_pi;
  Mat2 monodromy;
  double wronskian_residual = 0;  ///< over the quadrature nodes and pi
};

/// F'(lambda) integrand kernel from c(x), s(x) and the values at pi.
inline cplx fprime_kernel(const Mat2& y, const Mat2& ypi) {
  cplx c1 = y(0, 0), c2 = y(1, 0), s1 = y(0, 1), s2 = y(1, 1);
  cplx C1 = ypi(0, 0), C2 = ypi(1, 0), S1 = ypi(0, 1), S2 = ypi(1, 1);
  return S1 * (c1 * c1 + c2 * c2) + (S2 - C1) * (c1 * s1 + c2 * s2) - C2 * (s1 * s1 + s2 * s2);
}

/// F and F' (integral formula) at lambda. One sweep over a fiber grid sized
/// for |lambda|.
inline DiscriminantSample discriminant(const PotentialSpec& spec, cplx lambda,
                                       const Tolerances& tol = {}) {
  FiberGrid g = make_fiber_grid(spec, std::abs(lambda));
  std::vector<double> xs = g.x();
  xs.push_back(kPi);
  auto ys = propagate(spec, lambda, xs, tol);
  const Mat2& ypi = ys.back();
  DiscriminantSample d;
  d.lambda = lambda;
  d.monodromy = ypi;
  d.c1_pi = ypi(0, 0);
  d.c2_pi = ypi(1, 0);
  d.s1_pi = ypi(0, 1);
  d.s2_pi = ypi(1, 1);
  d.F = d.c1_pi + d.s2_pi;
  cplx fp = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    fp += g.w()[i] * fprime_kernel(ys[i], ypi);
    d.wronskian_residual = std::max(d.wronskian_residual, std::abs(ys[i].determinant() - 1.0));
  }
  d.wronskian_residual = std::max(d.wronskian_residual, std::abs(ypi.determinant() - 1.0));
  d.F_prime = fp;
  return d;
}

/// F alone (trace of the monodromy); the cheap path for contour sampling.
inline cplx discriminant_value(const PotentialSpec& spec, cplx lambda, const Tolerances& tol = {}) {
  return monodromy(spec, lambda, tol).trace();
}

inline cplx discriminant_derivative(const PotentialSpec& spec, cplx lambda,
                                    const Tolerances& tol = {}) {
  return discriminant(spec, lambda, tol).F_prime;
}

/// det(Y(pi) - e^{i pi t} I) = -e^{i pi t} (F - 2 cos pi t).
inline cplx characteristic_delta(const Mat2& ypi, cplx t) {
  cplx e = std::exp(kI * kPi * t);
  return (ypi - e * Mat2::Identity()).determinant();
}

/// Memo of discriminant samples keyed by the exact bits of lambda. Many
/// readers, one writer per miss; results never depend on hits.
class DiscriminantCache {
 public:
  explicit DiscriminantCache(const PotentialSpec& spec, Tolerances tol = {})
      : spec_(spec), tol_(tol) {}

  DiscriminantSample get(cplx lambda) {
    Key key{lambda.real(), lambda.imag()};
    {
      std::shared_lock lock(mu_);
      auto it = memo_.find(key);
      if (it != memo_.end()) {
        ++hits_;
        return it->second;
      }
    }
    DiscriminantSample d = discriminant(spec_, lambda, tol_);
    std::unique_lock lock(mu_);
    memo_.emplace(key, d);
    return d;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return memo_.size();
  }
  std::size_t hits() const { return hits_; }

 private:
  using Key = std::pair<double, double>;
  const PotentialSpec& spec_;
  Tolerances tol_;
  mutable std::shared_mutex mu_;
  std::map<Key, DiscriminantSample> memo_;
  std::atomic<std::size_t> hits_{0};
};

}  // namespace diracspec
