#pragma once

#include "diracspec/bloch.hpp"
#include "diracspec/contour.hpp"
#include "diracspec/eigensystem.hpp"
#include "diracspec/errors.hpp"
#include "diracspec/fundsol.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace diracspec {

struct Window {
  double re0, re1, im0, im1;
  bool contains(cplx z, double pad = 0) const {
    return z.real() >= re0 - pad && z.real() <= re1 + pad && z.imag() >= im0 - pad &&
           z.imag() <= im1 + pad;
  }
};

namespace detail {

inline int fprime_count(const PotentialSpec& spec, const Window& w, const Tolerances& tol) {
  auto g = [&](cplx z) { return discriminant(spec, z, tol).F_prime; };
  int initial = static_cast<int>(std::ceil(8 * (w.re1 - w.re0 + w.im1 - w.im0))) + 16;
  return winding_number(g, rectangle(w.re0, w.re1, w.im0, w.im1), initial, tol.contour_min_abs)
      .count;
}

/// Counts with internal cut lines nudged when they pass through a zero.
inline void critical_recurse(const PotentialSpec& spec, const Window& w, int count,
                             const Tolerances& tol, std::vector<cplx>& out, int depth) {
  if (count == 0) return;
  const double size = std::max(w.re1 - w.re0, w.im1 - w.im0);
  if (count == 1 || size < 1e-7 || depth > 40) {
    cplx mid((w.re0 + w.re1) / 2, (w.im0 + w.im1) / 2);
    if (count == 1) {
      auto nu = critical_point_near(spec, mid, tol, std::max(1e-6, 1e-2 * size), 2.0 * size);
      if (nu && w.contains(*nu, 1e-9)) {
        out.push_back(*nu);
        return;
      }
    } else {
      for (int k = 0; k < count; ++k) out.push_back(mid);
      return;
    }
  }
  // split along the longer side, nudging the cut off any zero of F'
  const bool vertical = (w.re1 - w.re0) >= (w.im1 - w.im0);
  for (double frac : {0.5, 0.4631, 0.5417, 0.4173, 0.5829}) {
    Window a = w, b = w;
    if (vertical) {
      double c = w.re0 + frac * (w.re1 - w.re0);
      a.re1 = c, b.re0 = c;
    } else {
      double c = w.im0 + frac * (w.im1 - w.im0);
      a.im1 = c, b.im0 = c;
    }
    try {
      int ca = fprime_count(spec, a, tol);
      int cb = count - ca;
      if (cb < 0) continue;
      critical_recurse(spec, a, ca, tol, out, depth + 1);
      critical_recurse(spec, b, cb, tol, out, depth + 1);
      return;
    } catch (const ContourError&) {
    }
  }
  throw ContourError("critical_points: subdivision keeps touching zeros of F'", 0.0);
}

}  // namespace detail

/// Zeros of F' in a rectangle, listed with multiplicity. When the outer
/// boundary passes through a zero the window is contracted slightly (zeros
/// on the boundary itself are not reported); ContourError if that fails.
inline std::vector<cplx> critical_points(const PotentialSpec& spec, Window w,
                                         const Tolerances& tol = {}) {
  if (!(w.re1 > w.re0 && w.im1 > w.im0)) throw ValidationError("critical_points: empty window");
  int total = -1;
  const double d = 1e-4 * std::max(w.re1 - w.re0, w.im1 - w.im0);
  for (int attempt = 0; attempt < 4 && total < 0; ++attempt) {
    try {
      total = detail::fprime_count(spec, w, tol);
    } catch (const ContourError&) {
      w = {w.re0 + d, w.re1 - d, w.im0 + d, w.im1 - d};
    }
  }
  if (total < 0) throw ContourError("critical_points: zero of F' on the window boundary", 0.0);
  // unit-width columns keep the winding counts cheap
  std::vector<cplx> out;
  int cols = std::max(1, static_cast<int>(std::ceil(w.re1 - w.re0)));
  int found = 0;
  std::vector<Window> pieces;
  for (int k = 0; k < cols; ++k)
    pieces.push_back({w.re0 + (w.re1 - w.re0) * k / cols, w.re0 + (w.re1 - w.re0) * (k + 1) / cols,
                      w.im0, w.im1});
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    int c = -1;
    for (int attempt = 0; attempt < 5 && c < 0; ++attempt) {
      try {
        c = k + 1 == pieces.size() ? total - found : detail::fprime_count(spec, pieces[k], tol);
      } catch (const ContourError&) {
        double shift = 0.0731 * (attempt + 1) * (pieces[k].re1 - pieces[k].re0);
        pieces[k].re1 += shift;
        pieces[k + 1].re0 += shift;
      }
    }
    if (c < 0) throw ContourError("critical_points: column cut keeps touching zeros of F'", 0.0);
    found += c;
    detail::critical_recurse(spec, pieces[k], c, tol, out, 0);
  }
  std::sort(out.begin(), out.end(), [](cplx a, cplx b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return out;
}

/// Map t into the fundamental strip (-1, 1].
inline cplx reduce_quasimomentum(cplx t) {
  double r = std::remainder(t.real(), 2.0);
  if (r <= -1.0) r += 2.0;
  return {r, t.imag()};
}

/// All t in (-1, 1] with 2 cos(pi t) = F(nu).
inline std::vector<cplx> exceptional_quasimomenta(const PotentialSpec& spec, cplx nu,
                                                  const Tolerances& tol = {}) {
  const cplx F = discriminant_value(spec, nu, tol);
  const cplx t = reduce_quasimomentum(std::acos(F / 2.0) / kPi);
  std::vector<cplx> out{t};
  cplx u = reduce_quasimomentum(-t);
  if (std::abs(u - t) > 1e-12) out.push_back(u);
  for (cplx& s : out) {
    // one Newton step on 2 cos(pi t) - F tightens the acos result
    cplx d = -2.0 * kPi * std::sin(kPi * s);
    if (std::abs(d) > 1e-6) s -= (2.0 * std::cos(kPi * s) - F) / d;
  }
  return out;
}

/// Least-squares fit of 1/|alpha| ~ |t - t0|^{-beta}.
struct ExponentFit {
  double beta = 0;
  double residual = 0;
  std::vector<double> direction_slopes;
  bool direction_dependent = false;
  std::vector<std::pair<cplx, cplx>> samples;  ///< (t, alpha)
};

inline std::vector<double> default_radii() {
  std::vector<double> r;
  for (int k = 0; k <= 9; ++k) r.push_back(1e-2 * std::pow(10.0, -k / 3.0));
  return r;
}

/// Generic exponent probe: `alpha_at(t)` returns alpha on the branch through t0.
inline ExponentFit fit_alpha_exponent(const std::function<cplx(cplx)>& alpha_at, cplx t0,
                                      const std::vector<double>& radii,
                                      const std::vector<double>& directions) {
  if (radii.size() < 2 || directions.empty())
    throw ValidationError("exponent fit needs at least two radii and one direction");
  ExponentFit fit;
  double worst = 0;
  for (double th : directions) {
    std::vector<double> xs, ys;
    for (double r : radii) {
      cplx t = t0 + r * std::exp(kI * th);
      cplx a;
      try {
        a = alpha_at(t);
      } catch (const Error& e) {
        throw ProbeFailure(std::string("exponent probe failed: ") + e.what(), t);
      }
      if (!(std::abs(a) > 0) || !std::isfinite(std::abs(a)))
        throw ProbeFailure("exponent probe: alpha vanished", t);
      fit.samples.emplace_back(t, a);
      xs.push_back(std::log(r));
      ys.push_back(-std::log(std::abs(a)));
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i] / n, my += ys[i] / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
      sxx += (xs[i] - mx) * (xs[i] - mx), sxy += (xs[i] - mx) * (ys[i] - my);
    double slope = sxy / sxx;
    double ss = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double e = ys[i] - (my + slope * (xs[i] - mx));
      ss += e * e;
    }
    worst = std::max(worst, std::sqrt(ss / n));
    fit.direction_slopes.push_back(-slope);
  }
  double sum = 0;
  for (double b : fit.direction_slopes) sum += b;
  fit.beta = sum / fit.direction_slopes.size();
  fit.residual = worst;
  auto [lo, hi] = std::minmax_element(fit.direction_slopes.begin(), fit.direction_slopes.end());
  fit.direction_dependent = *hi - *lo > 0.05;
  return fit;
}

inline bool is_integer_quasimomentum(cplx t, double eps = 1e-12) {
  cplx r = reduce_quasimomentum(t);
  return std::abs(r) < eps || std::abs(r - 1.0) < eps;
}

/// alpha at t on the eigenvalue branch passing through (t0, lambda0): the
/// roots near lambda0 come from a small disk; the one with the largest real
/// part (then imaginary part) is used so probes follow one sheet.
inline cplx alpha_near(const PotentialSpec& spec, cplx t, cplx t0, cplx lambda0,
                       double isolation, const Tolerances& tol = {}) {
  double rho = std::min(isolation, std::max(1e-3, 6.0 * std::sqrt(std::abs(t - t0))));
  auto roots = roots_in_disk(spec, t, lambda0, rho, tol);
  if (roots.empty()) throw ProbeFailure("no eigenvalue near lambda0 at probe", t);
  auto it = std::max_element(roots.begin(), roots.end(), [](const auto& a, const auto& b) {
    return a.lambda.real() != b.lambda.real() ? a.lambda.real() < b.lambda.real()
                                              : a.lambda.imag() < b.lambda.imag();
  });
  BlochEigenvalue e;
  e.t = t;
  e.lambda = it->lambda;
  e.residual = it->residual;
  // label only steers the phase reference; alpha's modulus does not depend on it
  return build_triple(spec, e, grid_for(spec, e.lambda), tol).alpha;
}

inline std::vector<double> default_directions(cplx t0) {
  if (is_integer_quasimomentum(t0)) return {0.0, kPi / 2};
  return {0.0, kPi / 2, kPi};
}

inline ExponentFit alpha_exponent(const PotentialSpec& spec, cplx t0, cplx lambda0,
                                  const std::vector<double>& radii = default_radii(),
                                  std::vector<double> directions = {},
                                  double isolation = 0.4, const Tolerances& tol = {}) {
  if (directions.empty()) directions = default_directions(t0);
  auto probe = [&](cplx t) { return alpha_near(spec, t, t0, lambda0, isolation, tol); };
  return fit_alpha_exponent(probe, t0, radii, directions);
}

/// Label-addressed form: lambda0 = lambda_{n,j}(t0), taken from the
/// degenerate-mode window at integer t0.
inline ExponentFit alpha_exponent(const PotentialSpec& spec, cplx t0, int n, int j,
                                  const std::vector<double>& radii = default_radii(),
                                  std::vector<double> directions = {},
                                  const Tolerances& tol = {}) {
  cplx lambda0;
  if (is_integer_quasimomentum(t0)) {
    SolveOptions o;
    o.tol = tol;
    o.degenerate_mode = true;
    lambda0 = solve_eigenvalue(spec, t0, n, j, o).lambda;
  } else {
    lambda0 = labeled_eigenvalues(spec, t0, {{n, j}}, tol).front().lambda;
  }
  return alpha_exponent(spec, t0, lambda0, radii, std::move(directions), 0.4, tol);
}

enum class SingularityKind { simple, spectral_singularity, ess_candidate, not_ess };

inline std::string to_string(SingularityKind k) {
  switch (k) {
    case SingularityKind::simple: return "simple";
    case SingularityKind::spectral_singularity: return "spectral_singularity";
    case SingularityKind::ess_candidate: return "ess_candidate";
    case SingularityKind::not_ess: return "not_ess";
  }
  return "unknown";
}

struct SingularityRecord {
  cplx t0;
  cplx lambda0;
  int m = 1;
  SingularityKind kind = SingularityKind::simple;
  std::optional<ExponentFit> exponent;
};

/// Multiplicity plus exponent evidence. Interior multiple eigenvalues are
/// spectral singularities and never essential; at t0 in {0, 1} the exponent
/// decides (beta < 1 integrable -> not_ess, otherwise ess_candidate).
inline SingularityRecord classify(const PotentialSpec& spec, cplx t0, cplx lambda0,
                                  const Tolerances& tol = {}, bool probe_exponent = true) {
  double res = std::abs(discriminant_value(spec, lambda0, tol) - bloch_target(t0));
  if (res > std::max(tol.root_residual, 1e-8))
    throw SolverError("classify: lambda0 is not an eigenvalue at t0 (residual " +
                      std::to_string(res) + ")");
  SingularityRecord rec;
  rec.t0 = t0;
  rec.lambda0 = lambda0;
  rec.m = multiplicity(spec, t0, lambda0, tol);
  if (rec.m == 1) return rec;
  const bool edge = is_integer_quasimomentum(t0);
  if (probe_exponent) rec.exponent = alpha_exponent(spec, t0, lambda0, default_radii(), {}, 0.4, tol);
  if (!edge) {
    rec.kind = SingularityKind::spectral_singularity;
  } else {
    rec.kind = rec.exponent && rec.exponent->beta < 1.0 ? SingularityKind::not_ess
                                                         : SingularityKind::ess_candidate;
  }
  return rec;
}

/// Every multiple Bloch eigenvalue in a lambda-window: critical points nu
/// of F and their quasimomenta.
inline std::vector<SingularityRecord> singularities_in_window(const PotentialSpec& spec,
                                                              const Window& w,
                                                              const Tolerances& tol = {},
                                                              bool probe_exponent = true) {
  std::vector<SingularityRecord> out;
  for (cplx nu : critical_points(spec, w, tol))
    for (cplx t : exceptional_quasimomenta(spec, nu, tol)) {
      // F - 2 cos(pi t) has a double root at nu exactly when F'(nu) = 0
      out.push_back(classify(spec, t, nu, tol, probe_exponent));
    }
  return out;
}

/// Parameter tuning for an interior real-t collision: bisection on
/// Im t_k(mu) where t_k is the quasimomentum of the critical point of F
/// near nu_guess for the potential family(mu).
struct TunedCollision {
  double mu;
  cplx nu;
  cplx t0;
};

inline TunedCollision tune_real_collision(const std::function<PotentialSpec(double)>& family,
                                          double mu_lo, double mu_hi, cplx nu_guess,
                                          const Tolerances& tol = {}, double mu_tol = 1e-13) {
  cplx nu = nu_guess;
  auto eval = [&](double mu, cplx& nu_out, cplx& t_out) {
    PotentialSpec s = family(mu);
    auto c = critical_point_near(s, nu, tol);
    if (!c) throw SolverError("tune_real_collision: lost the critical point");
    nu_out = *c;
    // the representative with Re t in [0, 1]
    cplx t = std::acos(discriminant_value(s, *c, tol) / 2.0) / kPi;
    if (t.real() < 0) t = -t;
    t_out = t;
    return t.imag();
  };
  cplx nl, tl, nh, th;
  double gl = eval(mu_lo, nl, tl);
  nu = nl;
  double gh = eval(mu_hi, nh, th);
  if (gl * gh > 0) throw SolverError("tune_real_collision: no sign change of Im t_k on bracket");
  cplx nm = nl, tm = tl;
  double mid = mu_lo;
  for (int it = 0; it < 200 && mu_hi - mu_lo > mu_tol; ++it) {
    mid = 0.5 * (mu_lo + mu_hi);
    double gm = eval(mid, nm, tm);
    nu = nm;
    if ((gm < 0) == (gl < 0)) mu_lo = mid, gl = gm;
    else mu_hi = mid;
  }
  return {mid, nm, {tm.real(), 0.0}};
}

}  // namespace diracspec
