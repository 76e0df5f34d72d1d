#pragma once

#include "diracspec/bloch.hpp"
#include "diracspec/errors.hpp"
#include "diracspec/fundsol.hpp"
#include "diracspec/quadrature.hpp"
#include "diracspec/types.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <vector>

namespace diracspec {

/// 2-vector valued function of x (only [0, pi] is used by the fiber operators).
using VecFn = std::function<Vec2(double)>;

/// Zero-potential mode (1, (-1)^j i) e^{i((-1)^{j-1} 2n + t) x}.
inline Vec2 reference_mode(Label l, cplx t, double x) {
  double sgn = l.j == 1 ? 1.0 : -1.0;
  cplx k = sgn * 2.0 * l.n + t;
  cplx e = std::exp(kI * k * x);
  return Vec2(e, (l.j == 1 ? -kI : kI) * e);
}

/// Normalized eigenfunction and adjoint eigenfunction of L_t at one simple
/// eigenvalue. Psi = psi_c c + psi_s s, Psi* = conj(star_c c + star_s s),
/// both unit in L2[0, pi]; samples live on `grid`.
struct EigenTriple {
  BlochEigenvalue eig;
  FiberGrid grid;
  std::vector<Vec2> psi, psi_star;
  cplx alpha;              ///< s1 F' / (|Phi+| |Phi-|) times the phase factors
  cplx alpha_quadrature;   ///< (Psi, Psi*) by quadrature
  cplx phase_reference;    ///< (Psi, reference mode), real positive
  cplx phase_reference_star;
  cplx psi_c, psi_s, star_c, star_s;
  double norm_plus = 0, norm_minus = 0;
  cplx s1_pi, fprime;
};

/// Phase u with |u| = 1 making (u v, ref) real positive; falls back to the
/// first nonzero sample when v is orthogonal to the reference.
inline cplx phase_fix(const FiberGrid& g, const std::vector<Vec2>& v,
                      const std::vector<Vec2>& ref) {
  cplx ip = inner(g, v, ref);
  double scale = norm(g, v) * norm(g, ref);
  if (std::abs(ip) > 1e-10 * scale) return std::conj(ip) / std::abs(ip);
  for (const auto& s : v)
    for (int k = 0; k < 2; ++k)
      if (std::abs(s(k)) > 1e-8) return std::conj(s(k)) / std::abs(s(k));
  return 1.0;
}

inline void check_condition7(cplx fprime, cplx s1, cplx lambda, const Tolerances& tol) {
  if (std::abs(fprime) <= tol.degenerate)
    throw DegenerateEigenvalueError("F'(lambda) vanishes: multiple eigenvalue, see singularities",
                                    lambda);
  if (std::abs(s1) <= tol.degenerate)
    throw DegenerateEigenvalueError("s1(pi, lambda) vanishes: Phi degenerates", lambda);
}

/// Builds the triple for a known eigenvalue on a fiber grid. `extra` points
/// (sorted, in [0, pi]) get Y(x) returned through `y_extra` for callers that
/// need eigenfunction values elsewhere in the same sweep.
inline EigenTriple build_triple(const PotentialSpec& spec, const BlochEigenvalue& e,
                                const FiberGrid& g, const Tolerances& tol = {},
                                const std::vector<double>* extra = nullptr,
                                std::vector<Mat2>* y_extra = nullptr) {
  const cplx lambda = e.lambda, t = e.t;
  std::vector<double> xs = g.x();
  std::vector<std::size_t> order;
  std::vector<Mat2> ys;
  if (extra && !extra->empty()) {
    std::vector<double> all = g.x();
    all.insert(all.end(), extra->begin(), extra->end());
    all.push_back(kPi);
    order.resize(all.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return all[a] < all[b]; });
    std::vector<double> sorted(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) sorted[i] = all[order[i]];
    auto ysorted = propagate(spec, lambda, sorted, tol);
    ys.resize(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) ys[order[i]] = ysorted[i];
    y_extra->assign(ys.begin() + g.size(), ys.begin() + g.size() + extra->size());
    ys.erase(ys.begin() + g.size(), ys.begin() + g.size() + extra->size());
  } else {
    xs.push_back(kPi);
    ys = propagate(spec, lambda, xs, tol);
  }
  const Mat2 ypi = ys.back();
  EigenTriple tr;
  tr.eig = e;
  tr.grid = g;
  cplx fp = 0;
  for (std::size_t i = 0; i < g.size(); ++i) fp += g.w()[i] * fprime_kernel(ys[i], ypi);
  const cplx c1 = ypi(0, 0), s1 = ypi(0, 1);
  tr.s1_pi = s1;
  tr.fprime = fp;
  tr.eig.fprime = fp;
  check_condition7(fp, s1, lambda, tol);
  const cplx ep = std::exp(kI * kPi * t), em = std::exp(-kI * kPi * t);
  std::vector<Vec2> phip(g.size()), phim(g.size()), ref(g.size()), refs(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec2 c = ys[i].col(0), s = ys[i].col(1);
    phip[i] = s1 * c + (ep - c1) * s;
    phim[i] = s1 * c + (em - c1) * s;
    ref[i] = reference_mode(e.label(), t, g.x()[i]);
    refs[i] = reference_mode(e.label(), std::conj(t), g.x()[i]);
  }
  tr.norm_plus = norm(g, phip);
  tr.norm_minus = norm(g, phim);
  if (tr.norm_plus < 1e-14 || tr.norm_minus < 1e-14)
    throw SolverError("normalization failure: eigenfunction norm below 1e-14");
  tr.psi.resize(g.size());
  tr.psi_star.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    tr.psi[i] = phip[i] / tr.norm_plus;
    tr.psi_star[i] = phim[i].conjugate() / tr.norm_minus;
  }
  cplx u1 = phase_fix(g, tr.psi, ref), u2 = phase_fix(g, tr.psi_star, refs);
  for (auto& v : tr.psi) v *= u1;
  for (auto& v : tr.psi_star) v *= u2;
  tr.phase_reference = inner(g, tr.psi, ref);
  tr.phase_reference_star = inner(g, tr.psi_star, refs);
  tr.psi_c = u1 * s1 / tr.norm_plus;
  tr.psi_s = u1 * (ep - c1) / tr.norm_plus;
  tr.star_c = std::conj(u2) * s1 / tr.norm_minus;
  tr.star_s = std::conj(u2) * (em - c1) / tr.norm_minus;
  tr.alpha = u1 * std::conj(u2) * s1 * fp / (tr.norm_plus * tr.norm_minus);
  tr.alpha_quadrature = inner(g, tr.psi, tr.psi_star);
  return tr;
}

/// Split x into (cell k, offset r in [0, pi)).
inline std::pair<long, double> lift(double x) {
  long k = static_cast<long>(std::floor(x / kPi));
  double r = x - kPi * k;
  if (r >= kPi) r -= kPi, ++k;
  if (r < 0) r = 0;
  return {k, r};
}

/// Psi (star = false) or Psi* at arbitrary real x through quasi-periodicity.
inline std::vector<Vec2> evaluate_triple(const PotentialSpec& spec, const EigenTriple& tr,
                                         const std::vector<double>& xs, bool star = false,
                                         const Tolerances& tol = {}) {
  std::vector<std::pair<long, double>> cells(xs.size());
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) cells[i] = lift(xs[i]);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return cells[a].second < cells[b].second; });
  std::vector<double> rs(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) rs[i] = cells[order[i]].second;
  auto ys = propagate(spec, tr.eig.lambda, rs, tol);
  std::vector<Vec2> out(xs.size());
  const cplx t = tr.eig.t;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::size_t idx = order[i];
    const Mat2& y = ys[i];
    long k = cells[idx].first;
    if (!star) {
      out[idx] = std::exp(kI * kPi * t * double(k)) * (tr.psi_c * y.col(0) + tr.psi_s * y.col(1));
    } else {
      Vec2 v = tr.star_c * y.col(0) + tr.star_s * y.col(1);
      out[idx] = std::exp(kI * kPi * std::conj(t) * double(k)) * v.conjugate();
    }
  }
  return out;
}

/// Phi_t = s1 c + (e^{i pi t} - c1) s at sorted points of [0, pi].
inline std::vector<Vec2> eigenfunction_phi(const PotentialSpec& spec, cplx t, cplx lambda,
                                           const std::vector<double>& xs,
                                           const Tolerances& tol = {}) {
  DiscriminantSample d = discriminant(spec, lambda, tol);
  check_condition7(d.F_prime, d.s1_pi, lambda, tol);
  auto ys = propagate(spec, lambda, xs, tol);
  const cplx ep = std::exp(kI * kPi * t);
  std::vector<Vec2> out;
  for (const auto& y : ys) out.push_back(d.s1_pi * y.col(0) + (ep - d.c1_pi) * y.col(1));
  return out;
}

/// lambda_{n,j}(t): localized Newton first, full labeling when that fails.
inline BlochEigenvalue labeled_eigenvalue(const PotentialSpec& spec, cplx t, int n, int j,
                                          const Tolerances& tol = {}) {
  return labeled_eigenvalues(spec, t, {{n, j}}, tol).front();
}

inline FiberGrid grid_for(const PotentialSpec& spec, cplx lambda) {
  return make_fiber_grid(spec, std::abs(lambda));
}

inline EigenTriple normalized_pair(const PotentialSpec& spec, cplx t, int n, int j,
                                   const Tolerances& tol = {}) {
  BlochEigenvalue e = labeled_eigenvalue(spec, t, n, j, tol);
  return build_triple(spec, e, grid_for(spec, e.lambda), tol);
}

/// Independent Psi*: eigenfunction of the adjoint fiber L_{conj t}(conj Q)
/// at conj(lambda), normalized and phase-fixed the same way.
inline std::vector<Vec2> adjoint_eigenfunction(const PotentialSpec& spec, const EigenTriple& tr,
                                               const Tolerances& tol = {}) {
  PotentialSpec adj = adjoint_potential(spec);
  const cplx tb = std::conj(tr.eig.t), lb = std::conj(tr.eig.lambda);
  std::vector<double> xs = tr.grid.x();
  xs.push_back(kPi);
  auto ys = propagate(adj, lb, xs, tol);
  const Mat2 ypi = ys.back();
  const cplx e = std::exp(kI * kPi * tb);
  std::vector<Vec2> phi(tr.grid.size()), refs(tr.grid.size());
  for (std::size_t i = 0; i < tr.grid.size(); ++i) {
    phi[i] = ypi(0, 1) * ys[i].col(0) + (e - ypi(0, 0)) * ys[i].col(1);
    refs[i] = reference_mode(tr.eig.label(), tb, tr.grid.x()[i]);
  }
  double nm = norm(tr.grid, phi);
  for (auto& v : phi) v /= nm;
  cplx u = phase_fix(tr.grid, phi, refs);
  for (auto& v : phi) v *= u;
  return phi;
}

inline cplx alpha(const PotentialSpec& spec, cplx t, int n, int j, const Tolerances& tol = {}) {
  return normalized_pair(spec, t, n, j, tol).alpha;
}

/// y = (L_t - lambda)^{-1} f at sorted points of [0, pi]: the inhomogeneous
/// system y' = A y - J f integrated with DOP853 together with Y, then the
/// boundary condition y(pi) = e^{i pi t} y(0) fixes the homogeneous part.
inline std::vector<Vec2> resolvent_apply(const PotentialSpec& spec, cplx t, cplx lambda,
                                         const VecFn& f, const std::vector<double>& xs,
                                         const Tolerances& tol = {},
                                         const std::vector<double>& breaks = {}) {
  using State = Eigen::Matrix<cplx, 2, 3>;
  IntegratorOptions opt;
  opt.atol = tol.integrator_abs;
  opt.rtol = tol.integrator_rel;
  const bool pw = spec.kind() == PotentialSpec::Kind::piecewise;
  double mid = 0;  // piecewise coefficients come from the current segment
  auto rhs = [&](double x, const State& s) -> State {
    double xe = pw ? mid : x;
    Mat2 a = system_matrix(lambda, spec.p(xe), spec.q(xe));
    State d;
    d.leftCols<2>() = a * s.leftCols<2>();
    Vec2 fx = f(x);
    d.col(2) = a * s.col(2) + Vec2(-fx(1), fx(0));  // -J f
    return d;
  };
  // stop at every breakpoint (and kink of f) so the integrator never steps across a jump
  std::vector<double> stops = spec.breakpoints();
  stops.insert(stops.end(), xs.begin(), xs.end());
  for (double x : breaks)
    if (x > 0 && x < kPi) stops.push_back(x);
  std::sort(stops.begin(), stops.end());
  State s = State::Zero();
  s(0, 0) = s(1, 1) = 1.0;
  double pos = 0, h = 0;
  std::vector<State> at;
  std::size_t next = 0;
  for (double x : stops) {
    if (x > pos) {
      mid = 0.5 * (pos + x);
      dop853_integrate(rhs, pos, x, s, h, opt);
      pos = x;
    }
    while (next < xs.size() && xs[next] <= pos) {
      at.push_back(s);
      ++next;
    }
  }
  if (pos < kPi) {
    mid = 0.5 * (pos + kPi);
    dop853_integrate(rhs, pos, kPi, s, h, opt);
  }
  const Mat2 ypi = s.leftCols<2>();
  const cplx e = std::exp(kI * kPi * t);
  Mat2 m = ypi - e * Mat2::Identity();
  double delta = std::abs(m.determinant());
  if (delta < tol.near_singular)
    throw NearSingularError("lambda is (numerically) an eigenvalue of L_t", delta);
  Vec2 a = -m.partialPivLu().solve(Vec2(s.col(2)));
  std::vector<Vec2> out;
  for (const auto& st : at) out.push_back(st.leftCols<2>() * a + st.col(2));
  return out;
}

struct ProjectionOptions {
  int initial_nodes = 256;
  int max_nodes = 4096;
  Tolerances tol;
  std::vector<double> breaks;  ///< kinks of f in (0, pi), used as panel edges
};

/// Riesz projection P f = (2 pi i)^{-1} oint (lambda - L_t)^{-1} f dlambda
/// over a counter-clockwise circle, at sorted points xs of [0, pi]. Only the
/// part of the resolvent that is not entire in lambda contributes:
/// P f(x) = (2 pi i)^{-1} oint Y(x) (Y(pi) - e I)^{-1} Y(pi) K(pi) dlambda,
/// K(pi) = int_0^pi Y^{-1} (-J f). Trapezoid nodes double until the change
/// drops below the projection tolerance.
inline std::vector<Vec2> total_projection(const PotentialSpec& spec, cplx t, cplx center,
                                          double radius, const VecFn& f,
                                          const std::vector<double>& xs,
                                          const ProjectionOptions& po = {}) {
  const Tolerances& tol = po.tol;
  FiberGrid g = make_fiber_grid(spec, std::abs(center) + radius, 16, 1.0, po.breaks);
  std::vector<Vec2> mjf(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec2 fx = f(g.x()[i]);
    mjf[i] = Vec2(-fx(1), fx(0));
  }
  std::vector<double> all = g.x();
  all.insert(all.end(), xs.begin(), xs.end());
  all.push_back(kPi);
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return all[a] < all[b]; });
  std::vector<double> sorted(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) sorted[i] = all[order[i]];
  const cplx e = std::exp(kI * kPi * t);
  double min_delta = INFINITY;

  auto node_term = [&](double theta) {
    cplx z = center + radius * std::exp(kI * theta);
    auto ysorted = propagate(spec, z, sorted, tol);
    std::vector<Mat2> ys(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) ys[order[i]] = ysorted[i];
    const Mat2& ypi = ys.back();
    Vec2 k = Vec2::Zero();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Mat2& y = ys[i];
      Mat2 inv;
      inv << y(1, 1), -y(0, 1), -y(1, 0), y(0, 0);
      k += g.w()[i] * (inv * mjf[i]);
    }
    Mat2 m = ypi - e * Mat2::Identity();
    min_delta = std::min(min_delta, std::abs(m.determinant()));
    Vec2 a = m.partialPivLu().solve(ypi * k);
    cplx wgt = std::exp(kI * theta);  // (1/2 pi i) dz = (r/K) e^{i theta}
    std::vector<Vec2> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = wgt * (ys[g.size() + i] * a);
    return out;
  };

  auto accumulate = [&](int nodes, int start, int stride, std::vector<Vec2>& sum) {
    for (int k = start; k < nodes; k += stride) {
      auto term = node_term(2.0 * kPi * k / nodes);
      for (std::size_t i = 0; i < xs.size(); ++i) sum[i] += term[i];
    }
  };
  int nodes = std::max(4, po.initial_nodes);
  std::vector<Vec2> sum(xs.size(), Vec2::Zero());
  accumulate(nodes, 0, 1, sum);
  auto scaled = [&](int n) {
    std::vector<Vec2> r(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) r[i] = sum[i] * (radius / n);
    return r;
  };
  std::vector<Vec2> cur = scaled(nodes);
  for (;;) {
    if (min_delta < tol.near_singular)
      throw ContourError("projection contour touches the spectrum", min_delta);
    if (nodes * 2 > po.max_nodes) break;
    accumulate(nodes * 2, 1, 2, sum);
    nodes *= 2;
    std::vector<Vec2> nxt = scaled(nodes);
    double change = 0, size = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      change = std::max(change, (nxt[i] - cur[i]).norm());
      size = std::max(size, nxt[i].norm());
    }
    cur = std::move(nxt);
    if (change <= tol.projection_quad * std::max(1.0, size)) return cur;
  }
  throw QuadratureError("projection trapezoid did not converge", 0.0);
}

/// Rank-one projection alpha^{-1} (f, Psi*) Psi on the triple's grid.
inline std::vector<Vec2> rank_one_projection(const EigenTriple& tr, const std::vector<Vec2>& f) {
  cplx a = inner(tr.grid, f, tr.psi_star) / tr.alpha;
  std::vector<Vec2> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = a * tr.psi[i];
  return out;
}

}  // namespace diracspec
