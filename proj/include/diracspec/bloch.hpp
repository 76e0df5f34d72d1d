#pragma once

#include "diracspec/contour.hpp"
#include "diracspec/errors.hpp"
#include "diracspec/fundsol.hpp"
#include "diracspec/potential.hpp"
#include "diracspec/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

namespace diracspec {

/// lambda_{n,j}(t) with its label and diagnostics.
struct BlochEigenvalue {
  int n = 0;
  int j = 1;
  cplx t;
  cplx lambda;
  double residual = 0;  ///< |F(lambda) - 2 cos pi t|
  int multiplicity = 1;
  cplx center;
  cplx fprime;          ///< F'(lambda), integral formula
  Label label() const { return {n, j}; }
};

/// Admissible h and the sets D_h, U_h(a), D_h(0,1).
struct QuasimomentumDomain {
  double h;
  explicit QuasimomentumDomain(double h_) : h(h_) {
    if (!(h > 0.0 && h < 0.1))
      throw ValidationError("h must lie in the open interval (0, 1/10)");
  }
  bool in_D(cplx t) const {
    return std::abs(t.imag()) <= 2 * h && t.real() >= -h && t.real() <= 2 - h;
  }
  bool in_U(cplx t, double a) const { return std::abs(t - a) < h; }
  bool in_D01(cplx t) const { return in_D(t) && !in_U(t, 0) && !in_U(t, 1); }
};

/// G(lambda) = F(lambda) - 2 cos(pi t).
inline cplx bloch_target(cplx t) { return 2.0 * std::cos(kPi * t); }

struct NewtonResult {
  cplx lambda;
  double residual = INFINITY;
  cplx fprime;
  int iterations = 0;
  bool converged = false;
};

/// Newton on G from lambda0; derivative from the integral formula.
inline NewtonResult newton_root(const PotentialSpec& spec, cplx t, cplx lambda0,
                                const Tolerances& tol = {}, int max_iter = 60,
                                double max_step = 0.5) {
  const cplx target = bloch_target(t);
  NewtonResult r;
  cplx lambda = lambda0;
  double last_step = INFINITY;
  for (int it = 0; it <= max_iter; ++it) {
    DiscriminantSample d = discriminant(spec, lambda, tol);
    cplx g = d.F - target;
    r.lambda = lambda;
    r.residual = std::abs(g);
    r.fprime = d.F_prime;
    r.iterations = it;
    bool small_step = last_step < 1e-13 * (1.0 + std::abs(lambda));
    if (r.residual < tol.root_residual && (small_step || r.residual < 1e-3 * tol.root_residual)) {
      r.converged = true;
      return r;
    }
    if (it == max_iter || d.F_prime == 0.0) break;
    cplx step = g / d.F_prime;
    if (std::abs(step) > max_step) step *= max_step / std::abs(step);
    lambda -= step;
    last_step = std::abs(step);
  }
  r.converged = r.residual < tol.root_residual;
  return r;
}

/// Chord iteration with a frozen derivative (cheap: monodromy only), then
/// F' at the converged root from the integral formula. Falls back to Newton.
inline NewtonResult chord_root(const PotentialSpec& spec, cplx t, cplx lambda0, cplx fp0,
                               const Tolerances& tol = {}, double max_step = 0.5) {
  const cplx target = bloch_target(t);
  if (fp0 != 0.0) {
    cplx lambda = lambda0;
    double prev = INFINITY;
    for (int it = 0; it < 16; ++it) {
      cplx g = discriminant_value(spec, lambda, tol) - target;
      double a = std::abs(g);
      if (a < 1e-3 * tol.root_residual || (a < tol.root_residual && a > 0.5 * prev)) {
        DiscriminantSample d = discriminant(spec, lambda, tol);
        NewtonResult r;
        r.lambda = lambda;
        r.residual = std::abs(d.F - target);
        r.fprime = d.F_prime;
        r.iterations = it;
        r.converged = r.residual < tol.root_residual;
        if (r.converged) return r;
        break;
      }
      if (a > 2 * prev) break;  // diverging
      prev = a;
      cplx step = g / fp0;
      if (std::abs(step) > max_step) step *= max_step / std::abs(step);
      lambda -= step;
    }
  }
  return newton_root(spec, t, lambda0, tol, 30, max_step);
}

/// Largest disk radius keeping the zero-potential centers apart.
inline double disk_radius(cplx t) { return std::min(0.4, 0.9 * distance_to_integers(t)); }

inline int count_roots_in_disk(const PotentialSpec& spec, cplx t, cplx center, double radius,
                               const Tolerances& tol = {}) {
  const cplx target = bloch_target(t);
  auto g = [&](cplx z) { return discriminant_value(spec, z, tol) - target; };
  return winding_number(g, circle(center, radius), 16, tol.contour_min_abs).count;
}

/// All roots of G inside a disk holding at most two, via contour moments and
/// Newton polish. Throws LocalizationError for more than two.
inline std::vector<NewtonResult> roots_in_disk(const PotentialSpec& spec, cplx t, cplx center,
                                               double radius, const Tolerances& tol = {}) {
  int m = count_roots_in_disk(spec, t, center, radius, tol);
  if (m > 2) throw LocalizationError("more than two roots in disk; shrink the radius");
  if (m == 0) return {};
  const cplx target = bloch_target(t);
  auto gd = [&](cplx z) {
    DiscriminantSample d = discriminant(spec, z, tol);
    return std::pair<cplx, cplx>(d.F - target, d.F_prime);
  };
  auto s = circle_moments(gd, center, radius, 2, 64);
  auto guesses = roots_from_moments(s, m, center);
  std::vector<NewtonResult> out;
  for (cplx z : guesses) {
    NewtonResult r = newton_root(spec, t, z, tol, 60, 0.25 * radius);
    if (!r.converged) throw SolverError("Newton polish of a contour-moment root failed");
    out.push_back(r);
  }
  if (m == 2 && std::abs(out[0].lambda - out[1].lambda) < 1e-6 && std::abs(s[1]) > 0) {
    // double or nearly double: both polished onto one root; keep moment split
    for (int k = 0; k < 2; ++k)
      if (std::abs(guesses[k] - out[k].lambda) > 1e-4) out[k].lambda = guesses[k];
  }
  return out;
}

/// Critical point of F near lambda0 (secant on F').
/// Gives up (nullopt) once an iterate leaves the disk |lambda - lambda0| <= max_dist.
inline std::optional<cplx> critical_point_near(const PotentialSpec& spec, cplx lambda0,
                                               const Tolerances& tol = {}, double step = 1e-3,
                                               double max_dist = 1.0) {
  cplx a = lambda0, b = lambda0 + step;
  cplx fa = discriminant(spec, a, tol).F_prime, fb = discriminant(spec, b, tol).F_prime;
  for (int it = 0; it < 60; ++it) {
    if (fb == fa) break;
    cplx c = b - fb * (b - a) / (fb - fa);
    if (!(std::abs(c - lambda0) <= max_dist)) return std::nullopt;
    a = b, fa = fb;
    b = c, fb = discriminant(spec, b, tol).F_prime;
    if (std::abs(b - a) < 1e-14 * (1 + std::abs(b))) return b;
  }
  if (std::abs(fb) < tol.degenerate) return b;
  return std::nullopt;
}

/// Root order of G at lambda by the argument principle on two shrinking disks.
inline int multiplicity(const PotentialSpec& spec, cplx t, cplx lambda, const Tolerances& tol = {}) {
  double res = std::abs(discriminant_value(spec, lambda, tol) - bloch_target(t));
  if (res > std::max(tol.root_residual, 1e-8))
    throw SolverError("multiplicity: lambda is not a root (residual too large)");
  Tolerances loose = tol;
  loose.contour_min_abs = 1e-14;
  for (double r1 : {1e-2, 2.5e-3, 6e-4}) {
    int a = count_roots_in_disk(spec, t, lambda, r1, loose);
    int b = count_roots_in_disk(spec, t, lambda, r1 / 4, loose);
    if (a == b && a >= 1) {
      if (a == 2) {
        // cross-check: a double root sits on a critical point of F
        auto nu = critical_point_near(spec, lambda, tol);
        if (!nu || std::abs(*nu - lambda) > r1)
          throw SolverError("multiplicity 2 without a nearby critical point of F");
      }
      return a;
    }
  }
  throw SolverError("inconsistent root order across disk radii (degeneracy unresolved)");
}

/// Empirical constants of the asymptotic regime: every disk around 2n +- t
/// with |n| > N holds exactly one root for all probe t, and
/// |lambda - center| <= M / |n| there.
struct AsymptoticRegime {
  double h = 0.05;
  int N = 0;
  double M = 0;
  int n_checked = 0;
  std::vector<cplx> probes;

  double radius(int n, cplx t) const {
    double r = n == 0 ? INFINITY : M / std::abs(n);
    return std::min(r, disk_radius(t));
  }
};

/// Disk scan at one t: largest |n| <= n_check whose disk fails the
/// one-root test (-1 if none), plus roots of passing disks.
struct DiskScan {
  int last_failure = -1;
  std::map<Label, NewtonResult> roots;
};

inline DiskScan scan_disks(const PotentialSpec& spec, cplx t, int n_from, int n_to,
                           const Tolerances& tol, DiskScan scan = {}) {
  const double r0 = disk_radius(t);
  for (int a = n_from; a <= n_to; ++a) {
    for (int sgn : {1, -1}) {
      if (a == 0 && sgn == -1) continue;
      int n = sgn * a;
      for (int j : {1, 2}) {
        Label l{n, j};
        cplx c = center_of(l, t);
        double r = r0;
        int count = -1;
        for (int attempt = 0; attempt < 4 && count < 0; ++attempt) {
          try {
            count = count_roots_in_disk(spec, t, c, r, tol);
          } catch (const ContourError&) {
            r *= 0.93;
          }
        }
        if (count != 1) {
          scan.last_failure = std::max(scan.last_failure, a);
          continue;
        }
        NewtonResult nr = newton_root(spec, t, c, tol, 60, 0.25 * r);
        if (!nr.converged || std::abs(nr.lambda - c) > r) {
          auto rs = roots_in_disk(spec, t, c, r, tol);
          if (rs.size() != 1) {
            scan.last_failure = std::max(scan.last_failure, a);
            continue;
          }
          nr = rs[0];
        }
        scan.roots[l] = nr;
      }
    }
  }
  return scan;
}

inline std::vector<cplx> default_probes(double h) {
  return {cplx(0.25, 0), cplx(0.5, 0), cplx(0.75, 0), cplx(1.5, 0), cplx(0.5, 2 * h)};
}

/// Calibrates N(h) and M(h) over a probe set in D_h(0,1).
inline AsymptoticRegime calibrate_regime(const PotentialSpec& spec, double h,
                                         const Tolerances& tol = {},
                                         std::vector<cplx> probes = {}) {
  QuasimomentumDomain dom(h);
  AsymptoticRegime reg;
  reg.h = h;
  reg.probes = probes.empty() ? std::vector<cplx>{cplx(h, 0), cplx(0.5, 0), cplx(1 - h, 0),
                                                  cplx(1 + h, 0), cplx(0.5, 2 * h)}
                              : probes;
  for (cplx t : reg.probes)
    if (!dom.in_D(t) || distance_to_integers(t) < tol.integer_guard)
      throw ValidationError("calibration probe outside D_h or on an integer");
  int n_check = 16;
  for (;;) {
    int worst = -1;
    std::vector<DiskScan> scans;
    for (cplx t : reg.probes) {
      scans.push_back(scan_disks(spec, t, 0, n_check, tol));
      worst = std::max(worst, scans.back().last_failure);
    }
    if (worst <= n_check - 4 || n_check >= 512) {
      if (worst > n_check - 4) throw SolverError("asymptotic regime not reached up to |n| = 512");
      reg.N = std::max(worst, 0);
      reg.n_checked = n_check;
      double m = 0;
      for (std::size_t i = 0; i < scans.size(); ++i)
        for (const auto& [l, r] : scans[i].roots)
          if (std::abs(l.n) > reg.N)
            m = std::max(m, std::abs(l.n) * std::abs(r.lambda - center_of(l, reg.probes[i])));
      reg.M = 1.5 * m;
      return reg;
    }
    n_check *= 2;
  }
}

struct SolveOptions {
  Tolerances tol;
  bool degenerate_mode = false;
  const AsymptoticRegime* regime = nullptr;  ///< enables the M/|n| radius
  double r_min = 0.05;
};

inline void check_guard(cplx t, const SolveOptions& o) {
  if (!o.degenerate_mode && distance_to_integers(t) < o.tol.integer_guard)
    throw ValidationError("t lies in the guard disk around an integer; use degenerate mode");
}

/// lambda_{n,j}(t) from Newton at the center 2n +- t, confined to the
/// localization disk; argument-principle fallback inside the disk.
inline BlochEigenvalue solve_eigenvalue(const PotentialSpec& spec, cplx t, int n, int j,
                                        const SolveOptions& o = {}) {
  if (j != 1 && j != 2) throw ValidationError("branch tag j must be 1 or 2");
  check_guard(t, o);
  Label l{n, j};
  cplx c = center_of(l, t);
  double cap = disk_radius(t);
  double r = cap;
  if (o.regime && n != 0) r = std::min(cap, std::max(o.regime->M / std::abs(n), o.r_min));
  BlochEigenvalue e;
  e.n = n, e.j = j, e.t = t, e.center = c;
  if (o.degenerate_mode && distance_to_integers(t) < o.tol.integer_guard) {
    // coinciding centers: both roots of the pair disk, j = 1 takes the larger real part
    auto rs = roots_in_disk(spec, t, c, 0.4, o.tol);
    if (rs.empty()) throw LocalizationError("no root near the degenerate center");
    std::sort(rs.begin(), rs.end(), [](auto& a, auto& b) {
      return a.lambda.real() != b.lambda.real() ? a.lambda.real() > b.lambda.real()
                                                : a.lambda.imag() > b.lambda.imag();
    });
    const NewtonResult& pick = rs.size() == 2 ? rs[j - 1] : rs[0];
    e.lambda = pick.lambda;
    e.residual = pick.residual;
    e.fprime = pick.fprime;
    e.multiplicity = (rs.size() == 2 && std::abs(rs[0].lambda - rs[1].lambda) < 1e-6) ? 2 : 1;
    if (rs.size() == 1) e.multiplicity = multiplicity(spec, t, e.lambda, o.tol);
    return e;
  }
  NewtonResult nr = newton_root(spec, t, c, o.tol, 60, 0.25 * r);
  if (!(nr.converged && std::abs(nr.lambda - c) <= r)) {
    std::vector<NewtonResult> rs;
    try {
      rs = roots_in_disk(spec, t, c, r, o.tol);
    } catch (const ContourError&) {
      rs = roots_in_disk(spec, t, c, 0.93 * r, o.tol);
    }
    if (rs.empty()) {
      std::ostringstream msg;
      msg << "no root of F - 2cos(pi t) within " << r << " of 2n" << (j == 1 ? "+" : "-")
          << "t (n=" << n << ")";
      throw LocalizationError(msg.str());
    }
    std::sort(rs.begin(), rs.end(), [&](auto& a, auto& b) {
      return std::abs(a.lambda - c) < std::abs(b.lambda - c);
    });
    nr = rs[0];
  }
  e.lambda = nr.lambda;
  e.residual = nr.residual;
  e.fprime = nr.fprime;
  return e;
}

namespace detail {

/// Completes a stalled continuation at the target potential: isolated
/// branches by confined Newton, a nearly colliding pair by the roots in a
/// disk around it, matched to the current values by least displacement.
inline std::optional<std::vector<NewtonResult>> finish_with_clusters(const PotentialSpec& spec,
                                                                     cplx t,
                                                                     const std::vector<cplx>& lam,
                                                                     const Tolerances& tol) {
  const std::size_t L = lam.size();
  const double link = 0.1;
  std::vector<NewtonResult> out(L);
  std::vector<bool> done(L, false);
  auto nearest_other = [&](cplx z, std::size_t skip_a, std::size_t skip_b) {
    double d = INFINITY;
    for (std::size_t k = 0; k < L; ++k)
      if (k != skip_a && k != skip_b) d = std::min(d, std::abs(z - lam[k]));
    return d;
  };
  for (std::size_t i = 0; i < L; ++i) {
    if (done[i]) continue;
    std::vector<std::size_t> cl{i};
    for (std::size_t k = i + 1; k < L; ++k)
      if (std::abs(lam[k] - lam[i]) < link) cl.push_back(k);
    if (cl.size() > 2) return std::nullopt;
    if (cl.size() == 1) {
      const double sep = nearest_other(lam[i], i, i);
      out[i] = newton_root(spec, t, lam[i], tol, 25, 0.25 * sep);
      if (!out[i].converged || std::abs(out[i].lambda - lam[i]) >= 0.3 * sep) return std::nullopt;
      done[i] = true;
      continue;
    }
    const std::size_t a = cl[0], b = cl[1];
    const cplx c = 0.5 * (lam[a] + lam[b]);
    const double r = std::min(0.5, 0.5 * nearest_other(c, a, b));
    if (r <= std::abs(lam[a] - lam[b])) return std::nullopt;
    std::vector<NewtonResult> rs;
    try {
      if (count_roots_in_disk(spec, t, c, r, tol) != 2) return std::nullopt;
      rs = roots_in_disk(spec, t, c, r, tol);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (rs.size() != 2) return std::nullopt;
    const bool swap = std::abs(rs[0].lambda - lam[b]) + std::abs(rs[1].lambda - lam[a]) <
                      std::abs(rs[0].lambda - lam[a]) + std::abs(rs[1].lambda - lam[b]);
    out[a] = rs[swap ? 1 : 0];
    out[b] = rs[swap ? 0 : 1];
    done[a] = done[b] = true;
  }
  return out;
}

}  // namespace detail

/// Central labels by continuation from the zero potential along the complex
/// path s(tau) = tau + i beta tau (1 - tau) for Q_s = s Q. A stall caused by
/// two roots meeting at the target potential is finished by a cluster step.
inline std::map<Label, NewtonResult> homotopy_labels(const PotentialSpec& spec, cplx t, int nc,
                                                     const Tolerances& tol, double beta = 0.3) {
  std::vector<Label> labels;
  for (int n = -nc; n <= nc; ++n)
    for (int j : {1, 2}) labels.push_back({n, j});
  const std::size_t L = labels.size();
  std::vector<cplx> lam(L), prev(L);
  for (std::size_t i = 0; i < L; ++i) lam[i] = prev[i] = center_of(labels[i], t);
  std::vector<NewtonResult> last(L);
  double tau = 0, dtau = 0.05, prev_dtau = 0;
  while (tau < 1.0) {
    double tn = std::min(1.0, tau + dtau);
    cplx s(tn, beta * tn * (1 - tn));
    PotentialSpec ps = tn == 1.0 ? spec : spec.scaled(s);
    std::vector<cplx> pred(L);
    for (std::size_t i = 0; i < L; ++i)
      pred[i] = prev_dtau > 0 ? lam[i] + (lam[i] - prev[i]) * ((tn - tau) / prev_dtau) : lam[i];
    bool ok = true;
    std::vector<NewtonResult> res(L);
    for (std::size_t i = 0; i < L && ok; ++i) {
      double sep = INFINITY;
      for (std::size_t k = 0; k < L; ++k)
        if (k != i) sep = std::min(sep, std::abs(pred[i] - pred[k]));
      res[i] = newton_root(ps, t, pred[i], tol, 25, 0.25 * sep);
      ok = res[i].converged && std::abs(res[i].lambda - pred[i]) < 0.3 * sep;
    }
    if (ok) {
      for (std::size_t i = 0; i < L && ok; ++i)
        for (std::size_t k = i + 1; k < L && ok; ++k)
          ok = std::abs(res[i].lambda - res[k].lambda) > 1e-9;
    }
    if (!ok) {
      dtau *= 0.5;
      if (dtau < 1e-7) {
        auto fin = tau > 0.5 ? detail::finish_with_clusters(spec, t, lam, tol) : std::nullopt;
        if (!fin) throw SolverError("homotopy continuation stalled (labels collide)");
        last = *fin;
        break;
      }
      continue;
    }
    for (std::size_t i = 0; i < L; ++i) {
      prev[i] = lam[i];
      lam[i] = res[i].lambda;
    }
    last = res;
    prev_dtau = tn - tau;
    tau = tn;
    dtau = std::min(0.1, dtau * 1.5);
  }
  std::map<Label, NewtonResult> out;
  for (std::size_t i = 0; i < L; ++i) out[labels[i]] = last[i];
  return out;
}

inline BlochEigenvalue make_eigenvalue(Label l, cplx t, const NewtonResult& r) {
  BlochEigenvalue e;
  e.n = l.n, e.j = l.j, e.t = t, e.lambda = r.lambda, e.residual = r.residual;
  e.center = center_of(l, t);
  e.fprime = r.fprime;
  return e;
}

/// Labeled eigenvalues for |n| <= max(N, buffer) at a non-integer t.
/// Labels beyond the local failure level come from disk scans; the rest
/// from the homotopy. Returns the extended map (with two extra levels).
inline std::map<Label, NewtonResult> labeled_roots(const PotentialSpec& spec, cplx t, int N,
                                                   const Tolerances& tol, int* central = nullptr) {
  int top = N + 2;
  DiskScan scan = scan_disks(spec, t, 0, top, tol);
  while (scan.last_failure > top - 3) {
    int from = top + 1;
    top += 4;
    if (top > 4 * N + 64) throw SolverError("no asymptotic disks found near the window");
    scan = scan_disks(spec, t, from, top, tol, scan);
  }
  std::map<Label, NewtonResult> out;
  int nc = scan.last_failure;
  if (central) *central = nc;
  if (nc >= 0) {
    auto hom = homotopy_labels(spec, t, nc + 1, tol);
    for (const auto& [l, r] : hom) {
      if (std::abs(l.n) == nc + 1) {
        auto it = scan.roots.find(l);
        if (it != scan.roots.end() && std::abs(it->second.lambda - r.lambda) > 1e-8)
          throw SolverError("homotopy labels disagree with the asymptotic labels");
      }
      out[l] = r;
    }
  }
  for (const auto& [l, r] : scan.roots)
    if (std::abs(l.n) > nc + 1 || nc < 0) out[l] = r;
  return out;
}

/// Winding count of G over a rectangle. Small outward nudges on contour hits.
inline int count_in_rectangle(const PotentialSpec& spec, cplx t, double x0, double x1, double y0,
                              double y1, const Tolerances& tol) {
  const cplx target = bloch_target(t);
  auto g = [&](cplx z) { return discriminant_value(spec, z, tol) - target; };
  for (int attempt = 0; attempt < 5; ++attempt) {
    try {
      int initial = static_cast<int>(std::ceil(8 * (x1 - x0 + y1 - y0))) + 16;
      return winding_number(g, rectangle(x0, x1, y0, y1), initial, tol.contour_min_abs).count;
    } catch (const ContourError&) {
      x0 -= 0.0137, x1 += 0.0113, y0 -= 0.0171, y1 += 0.0191;
    }
  }
  throw ContourError("rectangle keeps touching the spectrum", 0.0);
}

/// All lambda_{n,j}(t), |n| <= N, both branches; verified complete against
/// the argument-principle count over a rectangle.
inline std::vector<BlochEigenvalue> spectrum_window(const PotentialSpec& spec, cplx t, int N,
                                                    const SolveOptions& o = {}) {
  if (N < 0) throw ValidationError("N must be nonnegative");
  check_guard(t, o);
  std::map<Label, NewtonResult> ext;
  bool degenerate = distance_to_integers(t) < o.tol.integer_guard;
  if (degenerate) {
    // label at a nearby point off the axis, then resolve each pair at t
    const double eps = 0.02;
    cplx ts = t + cplx(0, eps);
    auto near = labeled_roots(spec, ts, N, o.tol);
    std::map<Label, cplx> pred;
    for (auto& [l, r] : near) pred[l] = r.lambda;
    std::map<Label, bool> done;
    for (auto& [l, r] : near) {
      if (done[l]) continue;
      // partner with the same center at integer t
      Label p = l.j == 1 ? Label{l.n + static_cast<int>(std::lround(t.real())), 2}
                         : Label{l.n - static_cast<int>(std::lround(t.real())), 1};
      auto it = pred.find(p);
      if (it == pred.end()) {
        ext[l] = newton_root(spec, t, r.lambda, o.tol);
        done[l] = true;
        continue;
      }
      cplx mid = 0.5 * (r.lambda + it->second);
      double rad = std::clamp(2.0 * std::abs(r.lambda - it->second), 0.05, 0.4);
      auto rs = roots_in_disk(spec, t, mid, rad, o.tol);
      if (rs.size() != 2) throw SolverError("degenerate pair could not be isolated");
      bool swap = std::abs(rs[0].lambda - r.lambda) + std::abs(rs[1].lambda - it->second) >
                  std::abs(rs[1].lambda - r.lambda) + std::abs(rs[0].lambda - it->second);
      ext[l] = rs[swap ? 1 : 0];
      ext[p] = rs[swap ? 0 : 1];
      done[l] = done[p] = true;
    }
  } else {
    ext = labeled_roots(spec, t, N, o.tol);
  }
  std::vector<BlochEigenvalue> out;
  for (int n = -N; n <= N; ++n)
    for (int j : {1, 2}) {
      auto it = ext.find({n, j});
      if (it == ext.end()) throw CompletenessError("label missing from the enumeration", 2 * (2 * N + 1), static_cast<int>(out.size()));
      out.push_back(make_eigenvalue({n, j}, t, it->second));
    }
  for (auto& e : out) {
    int m = 0;
    for (auto& f : out)
      if (std::abs(f.lambda - e.lambda) < 1e-6) ++m;
    e.multiplicity = m;
  }
  // completeness
  double lo = INFINITY, hi = -INFINITY, ymax = 0;
  for (auto& e : out) {
    lo = std::min(lo, e.lambda.real());
    hi = std::max(hi, e.lambda.real());
    ymax = std::max(ymax, std::abs(e.lambda.imag()));
  }
  lo -= 0.3, hi += 0.3;
  auto clear_of = [&](double x) {
    for (auto& [l, r] : ext)
      if (std::abs(r.lambda.real() - x) < 0.1) return false;
    return true;
  };
  for (int k = 0; k < 40 && !clear_of(lo); ++k) lo -= 0.05;
  for (int k = 0; k < 40 && !clear_of(hi); ++k) hi += 0.05;
  double y = ymax + 0.75;
  int expected = 0;
  for (auto& [l, r] : ext)
    if (r.lambda.real() > lo && r.lambda.real() < hi && std::abs(r.lambda.imag()) < y) ++expected;
  int window_inside = 0;
  for (auto& e : out)
    if (e.lambda.real() > lo && e.lambda.real() < hi) ++window_inside;
  int counted = count_in_rectangle(spec, t, lo, hi, -y, y, o.tol);
  if (counted != expected || window_inside != static_cast<int>(out.size()))
    throw CompletenessError("argument-principle count differs from the enumerated roots",
                            counted, expected);
  return out;
}

/// Labeled eigenvalues for an arbitrary set of labels at non-integer t.
inline std::vector<BlochEigenvalue> labeled_eigenvalues(const PotentialSpec& spec, cplx t,
                                                        const std::vector<Label>& labels,
                                                        const Tolerances& tol = {}) {
  int N = 0;
  for (auto l : labels) N = std::max(N, std::abs(l.n));
  SolveOptions o;
  o.tol = tol;
  check_guard(t, o);
  auto ext = labeled_roots(spec, t, N, tol);
  std::vector<BlochEigenvalue> out;
  for (auto l : labels) out.push_back(make_eigenvalue(l, t, ext.at(l)));
  return out;
}

struct TrackOptions {
  double min_step = 1e-8;       ///< smallest t-step before declaring a collision
  double gap_resolution = 1e-9; ///< two tracked roots closer than this collide
};

/// Predictor-corrector continuation of several labeled branches along a
/// sampled t-path. Euler predictor dlambda/dt = -2 pi sin(pi t) / F'(lambda),
/// Newton corrector confined to a fraction of the distance to the nearest
/// other branch, step halving on failure. out[k][i] is branch i at path[k].
inline std::vector<std::vector<BlochEigenvalue>> track_labels(
    const PotentialSpec& spec, const std::vector<cplx>& path,
    const std::vector<BlochEigenvalue>& initial, const Tolerances& tol = {},
    const TrackOptions& topt = {}) {
  const std::size_t L = initial.size();
  std::vector<std::vector<BlochEigenvalue>> out;
  if (path.empty()) return out;
  std::vector<cplx> lam(L), fp(L);
  for (std::size_t i = 0; i < L; ++i) {
    lam[i] = initial[i].lambda;
    fp[i] = initial[i].fprime;
    if (fp[i] == 0.0) fp[i] = discriminant(spec, lam[i], tol).F_prime;
  }
  auto snapshot = [&](cplx t, const std::vector<NewtonResult>* res) {
    std::vector<BlochEigenvalue> row(L);
    for (std::size_t i = 0; i < L; ++i) {
      row[i] = initial[i];
      row[i].t = t;
      row[i].lambda = lam[i];
      row[i].fprime = fp[i];
      row[i].center = center_of(initial[i].label(), t);
      if (res) row[i].residual = (*res)[i].residual;
    }
    return row;
  };
  out.push_back(snapshot(path[0], nullptr));
  cplx tcur = path[0];
  for (std::size_t k = 1; k < path.size(); ++k) {
    const cplx ta = tcur, tb = path[k];
    const double seg = std::abs(tb - ta);
    double u = 0, du = 1;
    std::vector<NewtonResult> res(L);
    while (u < 1) {
      double un = std::min(1.0, u + du);
      cplx tn = ta + (tb - ta) * un;
      cplx dt = tn - tcur;
      cplx dg = 2.0 * kPi * std::sin(kPi * tcur);
      std::vector<cplx> pred(L);
      for (std::size_t i = 0; i < L; ++i)
        pred[i] = fp[i] != 0.0 ? lam[i] - dt * dg / fp[i] : lam[i];
      bool ok = true;
      std::size_t bad = 0;
      for (std::size_t i = 0; i < L && ok; ++i) {
        double sep = INFINITY;
        for (std::size_t m = 0; m < L; ++m)
          if (m != i)
            sep = std::min({sep, std::abs(pred[i] - pred[m]), std::abs(lam[i] - lam[m])});
        sep = std::min(sep, 1.0);
        res[i] = chord_root(spec, tn, pred[i], fp[i], tol, 0.25 * sep);
        double moved = std::abs(res[i].lambda - lam[i]);
        double miss = std::abs(res[i].lambda - pred[i]);
        // step bound relative to the branch gap, and curvature control
        ok = res[i].converged && moved <= 0.25 * sep &&
             miss <= std::max(0.2 * moved, 1e-11 * (1.0 + std::abs(lam[i])));
        bad = i;
      }
      for (std::size_t i = 0; i < L && ok; ++i)
        for (std::size_t m = i + 1; m < L && ok; ++m)
          if (std::abs(res[i].lambda - res[m].lambda) < topt.gap_resolution) ok = false, bad = i;
      if (!ok) {
        du *= 0.5;
        if (du * seg < topt.min_step) {
          std::ostringstream msg;
          msg << "branches collide near t = " << tcur << " (label n=" << initial[bad].n
              << ", j=" << initial[bad].j << ")";
          throw CollisionError(msg.str(), tcur, tcur + (tb - ta) * (2 * du));
        }
        continue;
      }
      for (std::size_t i = 0; i < L; ++i) {
        lam[i] = res[i].lambda;
        fp[i] = res[i].fprime;
      }
      tcur = tn;
      u = un;
      du = std::min(1.0, 2 * du);
    }
    out.push_back(snapshot(path[k], &res));
  }
  return out;
}

/// Continuation of one label; its neighbors |m - n| <= 1 are tracked along
/// so that a collision with any of them is detected.
inline std::vector<BlochEigenvalue> track_branch(const PotentialSpec& spec,
                                                 const std::vector<cplx>& path, int n, int j,
                                                 const Tolerances& tol = {},
                                                 const TrackOptions& topt = {}) {
  if (path.empty()) return {};
  std::vector<Label> labels{{n, j}};
  for (int m = n - 1; m <= n + 1; ++m)
    for (int jj : {1, 2})
      if (!(m == n && jj == j)) labels.push_back({m, jj});
  auto init = labeled_eigenvalues(spec, path[0], labels, tol);
  auto rows = track_labels(spec, path, init, tol, topt);
  std::vector<BlochEigenvalue> out;
  for (auto& r : rows) out.push_back(r[0]);
  return out;
}

}  // namespace diracspec
