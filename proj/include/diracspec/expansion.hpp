#pragma once

#include "diracspec/bloch.hpp"
#include "diracspec/eigensystem.hpp"
#include "diracspec/errors.hpp"
#include "diracspec/parallel.hpp"
#include "diracspec/quadrature.hpp"
#include "diracspec/singularities.hpp"
#include "diracspec/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace diracspec {

/// Compactly supported continuous test function amplitude * profile(x),
/// profile vanishing outside (a, b).
struct TestFunction {
  enum class Kind { raised_cosine, gaussian_bump, hat };
  Kind kind = Kind::raised_cosine;
  double a = 0.5, b = 2.5;
  Vec2 amplitude = Vec2(1.0, 0.0);

  static TestFunction make(Kind k, double a, double b, Vec2 amp = Vec2(1.0, 0.0)) {
    if (!(std::isfinite(a) && std::isfinite(b) && b > a))
      throw ValidationError("test function support must be a finite interval a < b");
    if (!amp.allFinite()) throw ValidationError("test function amplitude must be finite");
    return {k, a, b, amp};
  }
  static TestFunction raised_cosine(double a, double b, Vec2 amp = Vec2(1.0, 0.0)) {
    return make(Kind::raised_cosine, a, b, amp);
  }
  static TestFunction gaussian_bump(double a, double b, Vec2 amp = Vec2(1.0, 0.0)) {
    return make(Kind::gaussian_bump, a, b, amp);
  }
  static TestFunction hat(double a, double b, Vec2 amp = Vec2(1.0, 0.0)) {
    return make(Kind::hat, a, b, amp);
  }

  double profile(double x) const {
    if (x <= a || x >= b) return 0.0;
    const double s = (2 * x - a - b) / (b - a);
    switch (kind) {
      case Kind::raised_cosine: return 0.5 * (1 + std::cos(kPi * s));
      case Kind::gaussian_bump: return std::exp(1.0 - 1.0 / (1.0 - s * s));
      case Kind::hat: return 1.0 - std::abs(s);
    }
    return 0.0;
  }
  Vec2 operator()(double x) const { return amplitude * profile(x); }
  /// Longest quadrature panel that resolves the profile.
  double max_panel() const { return (b - a) / (kind == Kind::gaussian_bump ? 48 : 8); }
  /// Points where the profile is not smooth.
  std::vector<double> kinks() const {
    if (kind == Kind::hat) return {a, 0.5 * (a + b), b};
    return {a, b};
  }
  bool is_zero() const { return amplitude.isZero(0.0); }
};

inline std::string to_string(TestFunction::Kind k) {
  switch (k) {
    case TestFunction::Kind::raised_cosine: return "raised_cosine";
    case TestFunction::Kind::gaussian_bump: return "gaussian_bump";
    case TestFunction::Kind::hat: return "hat";
  }
  return "unknown";
}

inline TestFunction::Kind test_function_kind(const std::string& s) {
  if (s == "raised_cosine") return TestFunction::Kind::raised_cosine;
  if (s == "gaussian_bump") return TestFunction::Kind::gaussian_bump;
  if (s == "hat") return TestFunction::Kind::hat;
  throw ValidationError("unknown test function '" + s + "'");
}

/// f_t(x) = sum_k f(x + pi k) e^{-i pi k t}; finite by compact support.
inline Vec2 periodize(const TestFunction& f, cplx t, double x) {
  Vec2 s = Vec2::Zero();
  const long k0 = static_cast<long>(std::ceil((f.a - x) / kPi));
  const long k1 = static_cast<long>(std::floor((f.b - x) / kPi));
  for (long k = k0; k <= k1; ++k)
    s += f(x + kPi * k) * std::exp(-kI * kPi * static_cast<double>(k) * t);
  return s;
}

/// Kinks of f_t in [0, pi).
inline std::vector<double> fiber_kinks(const TestFunction& f) {
  std::vector<double> br;
  for (double x : f.kinks()) br.push_back(lift(x).second);
  return br;
}

/// Fiber grid with panel edges at the kinks of f_t as well.
inline FiberGrid fiber_grid_for(const PotentialSpec& spec, const TestFunction& f,
                                double lambda_abs) {
  const double refine = std::max(1.0, 10.0 / oscillation_rate(spec, lambda_abs) / f.max_panel());
  return make_fiber_grid(spec, lambda_abs, 16, refine, fiber_kinks(f));
}

/// (g, Psi*) / alpha for a fiber function g on [0, pi].
inline cplx fiber_coefficient(const PotentialSpec& spec, const VecFn& g, cplx t, int n, int j,
                              const std::vector<double>& breaks = {}, const Tolerances& tol = {}) {
  BlochEigenvalue e = labeled_eigenvalue(spec, t, n, j, tol);
  EigenTriple tr = build_triple(spec, e, make_fiber_grid(spec, std::abs(e.lambda), 16, 1.0, breaks), tol);
  std::vector<Vec2> gv(tr.grid.size());
  for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = g(tr.grid.x()[i]);
  return inner(tr.grid, gv, tr.psi_star) / tr.alpha;
}

/// a_{n,j}(t) = (f_t, Psi*) / alpha.
inline cplx coefficient(const PotentialSpec& spec, const TestFunction& f, cplx t, int n, int j,
                        const Tolerances& tol = {}) {
  BlochEigenvalue e = labeled_eigenvalue(spec, t, n, j, tol);
  EigenTriple tr = build_triple(spec, e, fiber_grid_for(spec, f, std::abs(e.lambda)), tol);
  std::vector<Vec2> ft(tr.grid.size());
  for (std::size_t i = 0; i < ft.size(); ++i) ft[i] = periodize(f, t, tr.grid.x()[i]);
  return inner(tr.grid, ft, tr.psi_star) / tr.alpha;
}

/// Evaluation points with quadrature weights for L2 errors on [a, b].
struct EvalGrid {
  std::vector<double> x, w;

  static EvalGrid uniform(double a, double b, int m) {
    if (!(b > a) || m < 2) throw ValidationError("grid needs b > a and at least 2 points");
    EvalGrid g;
    const double dx = (b - a) / (m - 1);
    for (int i = 0; i < m; ++i) {
      g.x.push_back(a + dx * i);
      g.w.push_back(i == 0 || i == m - 1 ? 0.5 * dx : dx);
    }
    return g;
  }
  static EvalGrid gauss(double a, double b, int panels, int q = 16) {
    if (!(b > a) || panels < 1) throw ValidationError("grid needs b > a and panels >= 1");
    Rule r = composite(a, b, panels, q);
    return {r.x, r.w};
  }
};

/// Gauss grid on [a, b] with about three wavelengths of the fastest mode per panel.
inline EvalGrid default_eval_grid(const PotentialSpec& spec, double a, double b, int n_max) {
  const double rate = oscillation_rate(spec, 2.0 * n_max + 3);
  return EvalGrid::gauss(a, b, std::max(1, static_cast<int>(std::ceil((b - a) * rate / 20))));
}

/// Points lifted into [0, pi): x = r + pi k.
struct LiftedPoints {
  std::vector<double> r;           ///< sorted distinct offsets
  std::vector<std::size_t> index;  ///< x_i -> position in r
  std::vector<long> cell;          ///< x_i -> k
};

inline LiftedPoints lift_points(const std::vector<double>& xs) {
  LiftedPoints lp;
  std::vector<double> rs;
  for (double x : xs) {
    auto [k, r] = lift(x);
    lp.cell.push_back(k);
    rs.push_back(r);
  }
  lp.r = rs;
  std::sort(lp.r.begin(), lp.r.end());
  lp.r.erase(std::unique(lp.r.begin(), lp.r.end()), lp.r.end());
  for (double r : rs)
    lp.index.push_back(std::lower_bound(lp.r.begin(), lp.r.end(), r) - lp.r.begin());
  return lp;
}

/// u(x_i) from values on the offsets, using u(r + pi k) = e^{i pi t k} u(r).
inline std::vector<Vec2> unlift(const LiftedPoints& lp, cplx t, const std::vector<Vec2>& on_r) {
  std::vector<Vec2> out(lp.index.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Vec2 v = on_r[lp.index[i]];
    out[i] = lp.cell[i] == 0 ? v : std::exp(kI * kPi * t * double(lp.cell[i])) * v;
  }
  return out;
}

enum class ContourPiece { band01_lo, band01_hi, band12_lo, band12_hi, center0, center1, arc0, arc1 };

inline std::string to_string(ContourPiece p) {
  switch (p) {
    case ContourPiece::band01_lo: return "[h,1/2]";
    case ContourPiece::band01_hi: return "[1/2,1-h]";
    case ContourPiece::band12_lo: return "[1+h,3/2]";
    case ContourPiece::band12_hi: return "[3/2,2-h]";
    case ContourPiece::center0: return "[-h,h]";
    case ContourPiece::center1: return "[1-h,1+h]";
    case ContourPiece::arc0: return "gamma(0,h)";
    case ContourPiece::arc1: return "gamma(1,h)";
  }
  return "unknown";
}

/// One quadrature node of a t-integral; w includes dt.
struct TNode {
  cplx t;
  cplx w;
};

inline std::vector<TNode> gauss_nodes(const std::vector<double>& edges, int q) {
  std::vector<TNode> out;
  const Rule& r = gauss_legendre(q);
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const double a = edges[p], b = edges[p + 1], m = 0.5 * (a + b), hl = 0.5 * (b - a);
    for (std::size_t i = 0; i < r.x.size(); ++i) out.push_back({m + hl * r.x[i], hl * r.w[i]});
  }
  return out;
}

/// Panel edges on [c_lo + h, c_hi - h]: geometric (ratio 3/2) toward both integer ends,
/// dyadic toward each interior exceptional point.
inline std::vector<double> band_edges(double h, double c_lo, double c_hi,
                                      const std::vector<double>& singular) {
  const double lo = c_lo + h, hi = c_hi - h, mid = 0.5 * (c_lo + c_hi);
  std::vector<double> e{lo, mid, hi};
  for (double d = 1.5 * h; d < mid - c_lo; d *= 1.5) e.push_back(c_lo + d), e.push_back(c_hi - d);
  std::sort(e.begin(), e.end());
  for (double s : singular) {
    if (!(s > lo && s < hi)) continue;
    auto it = std::lower_bound(e.begin(), e.end(), s);
    const double left = *(it - 1), right = *it;
    std::vector<double> add{s};
    for (int k = 1; k <= 40; ++k) {
      add.push_back(s - (s - left) * std::ldexp(1.0, -k));
      add.push_back(s + (right - s) * std::ldexp(1.0, -k));
    }
    e.insert(e.end(), add.begin(), add.end());
    std::sort(e.begin(), e.end());
  }
  e.erase(std::unique(e.begin(), e.end()), e.end());
  return e;
}

/// Panel edges of one half of a band: the half adjacent to its nearest integer.
inline std::vector<double> half_band_edges(ContourPiece p, double h, const std::vector<double>& singular) {
  const bool low_band = p == ContourPiece::band01_lo || p == ContourPiece::band01_hi;
  const double c_lo = low_band ? 0.0 : 1.0, mid = c_lo + 0.5;
  const bool first = p == ContourPiece::band01_lo || p == ContourPiece::band12_lo;
  std::vector<double> out;
  for (double e : band_edges(h, c_lo, c_lo + 1, singular))
    if (first ? e <= mid : e >= mid) out.push_back(e);
  return out;
}

/// Nodes on one side of an interval center c, ordered from c + side h
/// inward; geometric panels down to delta, whose remainder is folded into
/// the innermost weight (one-sided limit of a bounded integrand).
inline std::vector<TNode> center_side_nodes(double c, int side, double h, int q, double guard) {
  int levels = std::max(1, static_cast<int>(std::floor(std::log2(h / (2 * guard)))));
  levels = std::min(levels, 40);
  std::vector<TNode> out;
  const Rule& r = gauss_legendre(q);
  for (int k = 0; k < levels; ++k) {
    const double a = h * std::ldexp(1.0, -(k + 1)), b = h * std::ldexp(1.0, -k);
    const double m = 0.5 * (a + b), hl = 0.5 * (b - a);
    for (int i = static_cast<int>(r.x.size()) - 1; i >= 0; --i)
      out.push_back({c + side * (m + hl * r.x[i]), hl * r.w[i]});
  }
  out.back().w += h * std::ldexp(1.0, -levels);
  return out;
}

/// Upper semicircle around c traversed from c - h to c + h.
inline std::vector<TNode> arc_nodes(double c, double h, int q) {
  std::vector<TNode> out;
  for (const TNode& n : gauss_nodes({0.0, kPi / 2, kPi}, q)) {
    const double th = n.t.real();
    const cplx e = std::exp(kI * th);
    out.push_back({c + h * e, -n.w * kI * h * e});
  }
  return out;
}

/// Labels grouped for the total-projection route.
struct LabelGroup {
  std::vector<Label> labels;
  cplx lambda0;   ///< common eigenvalue at the interval center
  double radius;  ///< isolating circle around lambda0
};

/// Integration contour data: the asymptotic regime, exceptional points in
/// B(h), and the partition of low labels at t = 0 and t = 1 into K (not
/// essential, integrated one by one) and T (essential candidates, grouped).
struct ExpansionContour {
  double h = 0.05;
  int n_max = 0;
  AsymptoticRegime regime;
  std::vector<double> exceptional;  ///< real t_k in B(h)
  std::vector<Label> K0, K1;
  std::vector<LabelGroup> T0, T1;
  std::vector<SingularityRecord> records;  ///< multiple eigenvalues at t = 0, 1
  int N_h() const { return regime.N; }
};

/// Truncation level of a label: |n| near t = 0; near t = 1 the level of the
/// center 2m + 1, i.e. m >= 0 ? m : -m - 1. Each half band takes the rule of
/// its nearest integer, so a partial sum depends on t only.
inline int level0(Label l) { return std::abs(l.n); }
inline int level1(Label l) {
  int m = l.j == 1 ? l.n : l.n - 1;
  return m >= 0 ? m : -m - 1;
}
/// Near t = 2, where (n, j) continues the label (n + 1, 1) or (n - 1, 2) at t - 2.
inline int level2(Label l) { return std::abs(l.j == 1 ? l.n + 1 : l.n - 1); }

namespace detail {

inline void partition_center(const PotentialSpec& spec, double c, const std::vector<Label>& labels,
                             const std::vector<BlochEigenvalue>& window, const Tolerances& tol,
                             std::vector<Label>& K, std::vector<LabelGroup>& T,
                             std::vector<SingularityRecord>& records) {
  std::map<Label, cplx> lam;
  for (const auto& e : window) lam[e.label()] = e.lambda;
  std::vector<bool> used(labels.size(), false);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (used[i]) continue;
    std::vector<Label> cluster{labels[i]};
    used[i] = true;
    for (std::size_t k = i + 1; k < labels.size(); ++k)
      if (!used[k] && std::abs(lam.at(labels[k]) - lam.at(labels[i])) < 1e-6) {
        cluster.push_back(labels[k]);
        used[k] = true;
      }
    if (cluster.size() == 1) {
      K.push_back(labels[i]);
      continue;
    }
    const cplx l0 = lam.at(labels[i]);
    SingularityRecord rec = classify(spec, c, l0, tol);
    records.push_back(rec);
    if (rec.kind != SingularityKind::ess_candidate) {
      K.insert(K.end(), cluster.begin(), cluster.end());
      continue;
    }
    double gap = 1.0;
    for (const auto& e : window)
      if (std::abs(e.lambda - l0) >= 1e-6) gap = std::min(gap, std::abs(e.lambda - l0));
    T.push_back({cluster, l0, 0.45 * gap});
  }
}

}  // namespace detail

/// Builds l(h) data. Throws ValidationError when an exceptional point lies
/// on a semicircle (the message lists nearby admissible h).
inline ExpansionContour build_contour(const PotentialSpec& spec, double h, int n_max,
                                      const Tolerances& tol = {}) {
  QuasimomentumDomain dom(h);
  ExpansionContour c;
  c.h = h;
  c.n_max = n_max;
  c.regime = calibrate_regime(spec, h, tol);
  if (n_max < c.N_h())
    throw ValidationError("n_max = " + std::to_string(n_max) + " is below N(h) = " +
                          std::to_string(c.N_h()));
  // exceptional quasimomenta from critical points covering the tracked window
  const double xr = 2.0 * n_max + 4.0;
  const double yr = spec.sup_norm() + 0.5;
  std::vector<cplx> tks;
  for (cplx nu : critical_points(spec, {-xr, xr, -yr, yr}, tol))
    for (cplx tk : exceptional_quasimomenta(spec, nu, tol)) tks.push_back(tk);
  auto hits_arc = [&](double hh) {
    for (cplx tk : tks)
      for (double ctr : {0.0, 1.0, -1.0})
        if (tk.imag() >= -1e-12 && std::abs(std::abs(tk - ctr) - hh) < 1e-9) return true;
    return false;
  };
  if (hits_arc(h)) {
    std::string alt;
    for (double f : {0.9, 1.1, 0.8, 1.2})
      if (h * f < 0.1 && !hits_arc(h * f)) alt += " " + std::to_string(h * f);
    throw ValidationError("an exceptional quasimomentum lies on a semicircle of radius h; try h =" +
                          alt);
  }
  for (cplx tk : tks) {
    if (std::abs(tk.imag()) > 1e-9) continue;
    double r = tk.real() < -h ? tk.real() + 2.0 : tk.real();
    if ((r > h && r < 1 - h) || (r > 1 + h && r < 2 - h)) c.exceptional.push_back(r);
  }
  std::sort(c.exceptional.begin(), c.exceptional.end());
  c.exceptional.erase(std::unique(c.exceptional.begin(), c.exceptional.end(),
                                  [](double a, double b) { return std::abs(a - b) < 1e-10; }),
                      c.exceptional.end());

  SolveOptions deg;
  deg.tol = tol;
  deg.degenerate_mode = true;
  const int Nh = c.N_h();
  std::vector<Label> l0, l1;
  for (int n = -Nh; n <= Nh; ++n) l0.push_back({n, 1}), l0.push_back({n, 2});
  for (int n = -Nh - 1; n <= Nh; ++n) l1.push_back({n, 1});
  for (int n = -Nh; n <= Nh + 1; ++n) l1.push_back({n, 2});
  auto w0 = spectrum_window(spec, 0.0, Nh + 1, deg);
  auto w1 = spectrum_window(spec, 1.0, Nh + 2, deg);
  detail::partition_center(spec, 0.0, l0, w0, tol, c.K0, c.T0, c.records);
  detail::partition_center(spec, 1.0, l1, w1, tol, c.K1, c.T1, c.records);
  return c;
}

enum class Sum { band, k0, k1, pair0, pair1, ess0, ess1, arc0, arc1 };

inline std::string to_string(Sum s) {
  switch (s) {
    case Sum::band: return "band";
    case Sum::k0: return "K0";
    case Sum::k1: return "K1";
    case Sum::pair0: return "pairs0";
    case Sum::pair1: return "pairs1";
    case Sum::ess0: return "T0";
    case Sum::ess1: return "T1";
    case Sum::arc0: return "arc0";
    case Sum::arc1: return "arc1";
  }
  return "unknown";
}

/// One integral of Eq. (73) (or of the semicircle route), sampled on the
/// evaluation grid. Pairs and groups carry all their labels.
struct TermIntegral {
  Sum sum = Sum::band;
  ContourPiece piece = ContourPiece::band01_lo;
  std::vector<Label> labels;
  int level = 0;
  std::vector<Vec2> values;
  double change = NAN;  ///< L2 change under the last node doubling
  bool failed = false;
  std::string error;
};

enum class Route { real_axis, semicircle };

struct ExpansionOptions {
  int nodes_per_panel = 4;   ///< Gauss nodes per panel at the first level
  int max_levels = 4;        ///< node doublings allowed
  double term_tol = 1e-8;    ///< L2 change per integral that ends the doubling
  Route route = Route::real_axis;
  double pair_radius = 0.5;
  int contour_nodes = 8;     ///< initial trapezoid nodes for projections
  unsigned workers = 1;
  Tolerances tol;
};

struct ExpansionReport {
  double h = 0;
  int n_max = 0;
  int N_h = 0;
  Route route = Route::real_axis;
  int nodes_per_panel = 0;  ///< level of the reported integrals
  std::vector<double> x, w;
  std::vector<Vec2> f, frec;
  double rel_error = 0;
  double f_norm = 0;
  std::vector<TermIntegral> terms;
  std::vector<std::pair<int, double>> trace_n;      ///< (N', error)
  std::vector<std::pair<int, double>> trace_nodes;  ///< (nodes per panel, error)
  std::vector<double> trace_change;  ///< largest integral change per doubling
  std::vector<double> exceptional;
  std::vector<SingularityRecord> records;
  std::vector<std::string> unconverged;
  std::vector<std::string> failed;
};

inline std::string describe(const TermIntegral& t) {
  std::string s = to_string(t.sum) + " " + to_string(t.piece) + " {";
  for (std::size_t i = 0; i < t.labels.size(); ++i)
    s += (i ? ";" : "") + std::to_string(t.labels[i].n) + "," + std::to_string(t.labels[i].j);
  return s + "}";
}

namespace detail {

/// a_{n,j}(t) Psi_{n,j,t} at lifted points for each given eigenvalue,
/// sharing one fiber grid.
inline std::vector<std::vector<Vec2>> single_terms_at(const PotentialSpec& spec,
                                                      const TestFunction& f, cplx t,
                                                      const std::vector<BlochEigenvalue>& eigs,
                                                      const LiftedPoints& lp,
                                                      const Tolerances& tol) {
  std::vector<std::vector<Vec2>> out;
  if (f.is_zero()) {
    out.assign(eigs.size(), std::vector<Vec2>(lp.index.size(), Vec2::Zero()));
    return out;
  }
  double lmax = 0;
  for (const auto& e : eigs) lmax = std::max(lmax, std::abs(e.lambda));
  FiberGrid g = fiber_grid_for(spec, f, lmax);
  std::vector<Vec2> ft(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) ft[i] = periodize(f, t, g.x()[i]);
  std::vector<Mat2> ys;
  for (const auto& e : eigs) {
    EigenTriple tr = build_triple(spec, e, g, tol, &lp.r, &ys);
    const cplx a = inner(g, ft, tr.psi_star) / tr.alpha;
    std::vector<Vec2> v(lp.r.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = a * (tr.psi_c * ys[i].col(0) + tr.psi_s * ys[i].col(1));
    out.push_back(unlift(lp, t, v));
  }
  return out;
}

/// Sum of a Psi over the eigenvalues inside one circle, by total projection;
/// the circle must hold exactly `expected` eigenvalues.
inline std::vector<Vec2> group_term_at(const PotentialSpec& spec, const TestFunction& f, cplx t,
                                       cplx center, double radius, int expected,
                                       const LiftedPoints& lp, const ExpansionOptions& o) {
  if (f.is_zero()) return std::vector<Vec2>(lp.index.size(), Vec2::Zero());
  int count = -1;
  try {
    count = count_roots_in_disk(spec, t, center, radius, o.tol);
  } catch (const ContourError&) {
    throw IsolationError("group circle touches the spectrum");
  }
  if (count != expected)
    throw IsolationError("group circle holds " + std::to_string(count) + " eigenvalues, expected " +
                         std::to_string(expected));
  VecFn ft = [&](double x) -> Vec2 { return periodize(f, t, x); };
  ProjectionOptions po;
  po.initial_nodes = o.contour_nodes;
  po.tol = o.tol;
  po.breaks = fiber_kinks(f);
  return unlift(lp, t, total_projection(spec, t, center, radius, ft, lp.r, po));
}

struct TermTable {
  std::vector<TermIntegral> terms;
  std::map<std::tuple<int, int, std::vector<Label>>, std::size_t> index;

  std::size_t add(Sum s, ContourPiece p, std::vector<Label> labels, int level, std::size_t npts) {
    auto key = std::make_tuple(static_cast<int>(s), static_cast<int>(p), labels);
    auto it = index.find(key);
    if (it != index.end()) return it->second;
    TermIntegral t;
    t.sum = s, t.piece = p, t.labels = std::move(labels), t.level = level;
    t.values.assign(npts, Vec2::Zero());
    terms.push_back(std::move(t));
    index[key] = terms.size() - 1;
    return terms.size() - 1;
  }
};

/// Work unit: contributions (term index, weighted samples) or a failure
/// that marks a list of terms.
struct JobResult {
  std::vector<std::pair<std::size_t, std::vector<Vec2>>> parts;
  std::vector<std::size_t> failed;
  std::string error;
};

}  // namespace detail

/// All integrals at one quadrature level (q Gauss nodes per panel; 2q on
/// pair intervals and semicircle quarters). Terms named in `frozen` are
/// listed but not computed (values left at zero).
inline std::vector<TermIntegral> compute_terms(const PotentialSpec& spec, const TestFunction& f,
                                               const ExpansionContour& c,
                                               const std::vector<double>& xs, int q,
                                               const ExpansionOptions& o,
                                               const std::set<std::string>* frozen = nullptr) {
  using detail::JobResult;
  const double h = c.h;
  const int N = c.n_max, Nh = c.N_h();
  const LiftedPoints lp = lift_points(xs);
  const std::size_t npts = xs.size();
  detail::TermTable table;
  std::vector<std::function<JobResult()>> jobs;
  auto active = [&](std::size_t id) { return !frozen || !frozen->count(describe(table.terms[id])); };

  // labels up to truncation level N under a level rule
  auto labels_upto = [&](int (*lvl)(Label)) {
    std::vector<Label> ls;
    for (int n = -N - 1; n <= N + 1; ++n)
      for (int j : {1, 2})
        if (lvl({n, j}) <= N) ls.push_back({n, j});
    return ls;
  };

  // singles at independent nodes, labeled afresh at each node
  auto add_singles = [&](Sum s, ContourPiece p, const std::vector<TNode>& nodes,
                         int (*lvl)(Label)) {
    std::vector<Label> labels;
    std::vector<std::size_t> ids;
    int top = 0;
    for (auto l : labels_upto(lvl)) {
      const std::size_t id = table.add(s, p, {l}, lvl(l), npts);
      if (!active(id)) continue;
      labels.push_back(l);
      ids.push_back(id);
      top = std::max(top, std::abs(l.n));
    }
    if (labels.empty()) return;
    for (const TNode& nd : nodes)
      jobs.push_back([&, nd, labels, ids, top]() {
        JobResult r;
        try {
          auto ext = labeled_roots(spec, nd.t, top, o.tol);
          std::vector<BlochEigenvalue> eigs;
          for (auto l : labels) eigs.push_back(make_eigenvalue(l, nd.t, ext.at(l)));
          auto vals = detail::single_terms_at(spec, f, nd.t, eigs, lp, o.tol);
          for (std::size_t i = 0; i < ids.size(); ++i) {
            for (auto& v : vals[i]) v *= nd.w;
            r.parts.emplace_back(ids[i], std::move(vals[i]));
          }
        } catch (const Error& e) {
          r.failed = ids;
          r.error = e.what();
        }
        return r;
      });
  };

  // singles near an integer center, continued inward from c +- h
  auto add_center_singles = [&](Sum s, ContourPiece p, double ctr, const std::vector<Label>& Kall,
                                int (*lvl)(Label)) {
    std::vector<Label> K;
    std::vector<std::size_t> ids;
    for (auto l : Kall) {
      const std::size_t id = table.add(s, p, {l}, lvl(l), npts);
      if (active(id)) K.push_back(l), ids.push_back(id);
    }
    if (K.empty()) return;
    std::vector<Label> track;
    for (int n = -Nh - 3; n <= Nh + 3; ++n)
      for (int j : {1, 2})
        if (lvl({n, j}) <= Nh + 1) track.push_back({n, j});
    for (int side : {1, -1}) {
      const auto nodes = center_side_nodes(ctr, side, h, q, o.tol.integer_guard);
      jobs.push_back([&, side, nodes, ids, track, K, ctr]() {
        JobResult r;
        try {
          std::vector<cplx> path{cplx(ctr + side * h)};
          for (const auto& nd : nodes) path.push_back(nd.t);
          auto init = labeled_eigenvalues(spec, path[0], track, o.tol);
          auto rows = track_labels(spec, path, init, o.tol);
          std::vector<std::size_t> pos;
          for (auto l : K)
            pos.push_back(std::find(track.begin(), track.end(), l) - track.begin());
          std::vector<std::vector<Vec2>> acc(K.size(), std::vector<Vec2>(npts, Vec2::Zero()));
          for (std::size_t k = 0; k < nodes.size(); ++k) {
            std::vector<BlochEigenvalue> eigs;
            for (auto i : pos) eigs.push_back(rows[k + 1][i]);
            auto vals = detail::single_terms_at(spec, f, nodes[k].t, eigs, lp, o.tol);
            for (std::size_t i = 0; i < K.size(); ++i)
              for (std::size_t x = 0; x < npts; ++x) acc[i][x] += nodes[k].w * vals[i][x];
          }
          for (std::size_t i = 0; i < K.size(); ++i) r.parts.emplace_back(ids[i], std::move(acc[i]));
        } catch (const Error& e) {
          r.failed = ids;
          r.error = e.what();
        }
        return r;
      });
    }
  };

  struct Group {
    std::size_t id;
    cplx center;
    double radius;
    int expected;
  };
  // groups integrated through total projections on [ctr - h, ctr + h]
  auto add_groups = [&](double ctr, std::vector<Group> groups) {
    std::erase_if(groups, [&](const Group& g) { return !active(g.id); });
    if (groups.empty()) return;
    const auto nodes = gauss_nodes({ctr - h, ctr + h}, 2 * q);
    for (const TNode& nd : nodes)
      jobs.push_back([&, nd, groups]() {
        JobResult r;
        for (const auto& g : groups) {
          try {
            auto v = detail::group_term_at(spec, f, nd.t, g.center, g.radius, g.expected, lp, o);
            for (auto& x : v) x *= nd.w;
            r.parts.emplace_back(g.id, std::move(v));
          } catch (const Error& e) {
            r.failed.push_back(g.id);
            r.error = e.what();
          }
        }
        return r;
      });
  };

  for (auto [p, lvl] : {std::pair{ContourPiece::band01_lo, &level0}, std::pair{ContourPiece::band01_hi, &level1},
                        std::pair{ContourPiece::band12_lo, &level1}, std::pair{ContourPiece::band12_hi, &level2}})
    add_singles(Sum::band, p, gauss_nodes(half_band_edges(p, h, c.exceptional), q), lvl);
  if (o.route == Route::semicircle) {
    add_singles(Sum::arc0, ContourPiece::arc0, arc_nodes(0.0, h, 2 * q), level0);
    add_singles(Sum::arc1, ContourPiece::arc1, arc_nodes(1.0, h, 2 * q), level1);
  } else {
    add_center_singles(Sum::k0, ContourPiece::center0, 0.0, c.K0, level0);
    add_center_singles(Sum::k1, ContourPiece::center1, 1.0, c.K1, level1);
    std::vector<Group> g0, g1, t0, t1;
    for (int a = Nh + 1; a <= N; ++a)
      for (int n : {a, -a})
        g0.push_back({table.add(Sum::pair0, ContourPiece::center0, {{n, 1}, {n, 2}}, a, npts),
                      cplx(2.0 * n), o.pair_radius, 2});
    for (int m = -N - 1; m <= N; ++m) {
      if (m >= -Nh - 1 && m <= Nh) continue;
      g1.push_back({table.add(Sum::pair1, ContourPiece::center1, {{m, 1}, {m + 1, 2}},
                              m >= 0 ? m : -m - 1, npts),
                    cplx(2.0 * m + 1), o.pair_radius, 2});
    }
    for (const auto& grp : c.T0) {
      int lv = 0;
      for (auto l : grp.labels) lv = std::max(lv, level0(l));
      t0.push_back({table.add(Sum::ess0, ContourPiece::center0, grp.labels, lv, npts), grp.lambda0,
                    grp.radius, static_cast<int>(grp.labels.size())});
    }
    for (const auto& grp : c.T1) {
      int lv = 0;
      for (auto l : grp.labels) lv = std::max(lv, level1(l));
      t1.push_back({table.add(Sum::ess1, ContourPiece::center1, grp.labels, lv, npts), grp.lambda0,
                    grp.radius, static_cast<int>(grp.labels.size())});
    }
    add_groups(0.0, g0);
    add_groups(1.0, g1);
    add_groups(0.0, t0);
    add_groups(1.0, t1);
  }

  auto results = parallel_map<JobResult>(jobs.size(), o.workers, [&](std::size_t i) { return jobs[i](); });
  for (auto& r : results) {
    for (auto& [id, v] : r.parts)
      for (std::size_t x = 0; x < npts; ++x) table.terms[id].values[x] += v[x];
    for (auto id : r.failed) {
      table.terms[id].failed = true;
      if (table.terms[id].error.empty()) table.terms[id].error = r.error;
    }
  }
  // fixed order of the seven sums, then labels
  std::stable_sort(table.terms.begin(), table.terms.end(), [](const auto& a, const auto& b) {
    return std::tie(a.sum, a.piece, a.level, a.labels) < std::tie(b.sum, b.piece, b.level, b.labels);
  });
  return table.terms;
}

inline double l2_norm(const std::vector<double>& w, const std::vector<Vec2>& v) {
  double s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) s += w[i] * v[i].squaredNorm();
  return std::sqrt(s);
}

/// (1/2) sum of the integrals whose level is at most n.
inline std::vector<Vec2> assemble(const std::vector<TermIntegral>& terms, std::size_t npts, int n) {
  std::vector<Vec2> out(npts, Vec2::Zero());
  for (const auto& t : terms)
    if (!t.failed && t.level <= n)
      for (std::size_t i = 0; i < npts; ++i) out[i] += 0.5 * t.values[i];
  return out;
}

inline double relative_error(const std::vector<double>& w, const std::vector<Vec2>& f,
                             const std::vector<Vec2>& g) {
  std::vector<Vec2> d(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) d[i] = f[i] - g[i];
  const double nf = l2_norm(w, f), nd = l2_norm(w, d);
  return nf > 0 ? nd / nf : nd;
}

/// Reconstruction of f from its spectral expansion. Quadrature levels
/// double until every integral moves by less than term_tol in L2 (or
/// max_levels is reached, in which case the offending terms are listed);
/// an integral is frozen once its own change is below term_tol.
inline ExpansionReport expand_reconstruct(const PotentialSpec& spec, const TestFunction& f,
                                          double h, int n_max, const EvalGrid& grid,
                                          const ExpansionOptions& o = {}) {
  ExpansionContour c = build_contour(spec, h, n_max, o.tol);
  ExpansionReport rep;
  rep.h = h, rep.n_max = n_max, rep.N_h = c.N_h(), rep.route = o.route;
  rep.x = grid.x, rep.w = grid.w;
  rep.exceptional = c.exceptional;
  rep.records = c.records;
  for (double x : grid.x) rep.f.push_back(f(x));
  rep.f_norm = l2_norm(grid.w, rep.f);
  const std::size_t npts = grid.x.size();

  std::vector<TermIntegral> prev;
  std::set<std::string> frozen;
  int q = o.nodes_per_panel;
  for (int level = 0; level <= o.max_levels; ++level, q *= 2) {
    auto terms = compute_terms(spec, f, c, grid.x, q, o, &frozen);
    for (std::size_t k = 0; k < terms.size() && level > 0; ++k)
      if (frozen.count(describe(terms[k]))) terms[k] = prev[k];
    auto rec = assemble(terms, npts, n_max);
    rep.trace_nodes.emplace_back(q, relative_error(grid.w, rep.f, rec));
    bool done = level > 0;
    if (level > 0) {
      double worst = 0;
      for (std::size_t k = 0; k < terms.size(); ++k) {
        if (frozen.count(describe(terms[k]))) continue;
        std::vector<Vec2> d(npts);
        for (std::size_t i = 0; i < npts; ++i) d[i] = terms[k].values[i] - prev[k].values[i];
        terms[k].change = l2_norm(grid.w, d);
        if (!terms[k].failed && !(terms[k].change < o.term_tol)) done = false;
        if (!terms[k].failed) worst = std::max(worst, terms[k].change);
      }
      rep.trace_change.push_back(worst);
      // converged integrals are not refined further
      for (const auto& t : terms)
        if (t.change < o.term_tol) frozen.insert(describe(t));
    }
    prev = std::move(terms);
    rep.nodes_per_panel = q;
    if (done) break;
  }
  rep.terms = std::move(prev);
  for (const auto& t : rep.terms) {
    if (t.failed) rep.failed.push_back(describe(t) + ": " + t.error);
    else if (!(t.change < o.term_tol)) rep.unconverged.push_back(describe(t));
  }
  rep.frec = assemble(rep.terms, npts, n_max);
  rep.rel_error = relative_error(grid.w, rep.f, rep.frec);
  std::vector<int> ns;
  for (int n = n_max; n >= std::max(1, rep.N_h); n /= 2) ns.push_back(n);
  std::reverse(ns.begin(), ns.end());
  for (int n : ns) rep.trace_n.emplace_back(n, relative_error(grid.w, rep.f, assemble(rep.terms, npts, n)));
  return rep;
}

/// Integral of a_{n,j} Psi_{n,j} over one contour piece at the given level.
inline std::vector<Vec2> term_integral(const PotentialSpec& spec, const TestFunction& f, int n,
                                       int j, ContourPiece piece, double h, const std::vector<double>& xs,
                                       int q = 8, const Tolerances& tol = {}) {
  QuasimomentumDomain dom(h);
  const LiftedPoints lp = lift_points(xs);
  std::vector<Vec2> acc(xs.size(), Vec2::Zero());
  auto add = [&](const TNode& nd, const BlochEigenvalue& e) {
    auto v = detail::single_terms_at(spec, f, nd.t, {e}, lp, tol);
    for (std::size_t i = 0; i < xs.size(); ++i) acc[i] += nd.w * v[0][i];
  };
  std::vector<TNode> nodes;
  switch (piece) {
    case ContourPiece::band01_lo:
    case ContourPiece::band01_hi:
    case ContourPiece::band12_lo:
    case ContourPiece::band12_hi: nodes = gauss_nodes(half_band_edges(piece, h, {}), q); break;
    case ContourPiece::arc0: nodes = arc_nodes(0.0, h, 2 * q); break;
    case ContourPiece::arc1: nodes = arc_nodes(1.0, h, 2 * q); break;
    case ContourPiece::center0:
    case ContourPiece::center1: {
      const double ctr = piece == ContourPiece::center0 ? 0.0 : 1.0;
      std::vector<Label> track;
      for (int m = n - 1; m <= n + 1; ++m) track.push_back({m, 1}), track.push_back({m, 2});
      for (int side : {1, -1}) {
        auto sn = center_side_nodes(ctr, side, h, q, tol.integer_guard);
        std::vector<cplx> path{cplx(ctr + side * h)};
        for (const auto& nd : sn) path.push_back(nd.t);
        auto rows = track_labels(spec, path, labeled_eigenvalues(spec, path[0], track, tol), tol);
        const std::size_t pos = std::find(track.begin(), track.end(), Label{n, j}) - track.begin();
        for (std::size_t k = 0; k < sn.size(); ++k) add(sn[k], rows[k + 1][pos]);
      }
      return acc;
    }
  }
  // a branch is followed continuously along the piece
  std::vector<cplx> path;
  for (const auto& nd : nodes) path.push_back(nd.t);
  auto e = track_branch(spec, path, n, j, tol);
  for (std::size_t k = 0; k < nodes.size(); ++k) add(nodes[k], e[k]);
  return acc;
}

/// Integral over [c - h, c + h] of the summed a Psi of a label group,
/// through total projections on a circle isolating the group.
inline std::vector<Vec2> paired_term_integral(const PotentialSpec& spec, const TestFunction& f,
                                              const std::vector<Label>& group, double ctr,
                                              double h, const std::vector<double>& xs, int q = 8,
                                              const ExpansionOptions& o = {}) {
  QuasimomentumDomain dom(h);
  if (group.empty()) throw ValidationError("empty label group");
  cplx center = 0;
  for (auto l : group) center += center_of(l, ctr);
  center /= static_cast<double>(group.size());
  const LiftedPoints lp = lift_points(xs);
  std::vector<Vec2> acc(xs.size(), Vec2::Zero());
  for (const TNode& nd : gauss_nodes({ctr - h, ctr + h}, 2 * q)) {
    auto v = detail::group_term_at(spec, f, nd.t, center, o.pair_radius,
                                   static_cast<int>(group.size()), lp, o);
    for (std::size_t i = 0; i < xs.size(); ++i) acc[i] += nd.w * v[i];
  }
  return acc;
}

/// Pointwise group integrand at one t (for boundedness probes).
inline std::vector<Vec2> paired_integrand(const PotentialSpec& spec, const TestFunction& f,
                                          const std::vector<Label>& group, cplx t, double ctr,
                                          const std::vector<double>& xs,
                                          const ExpansionOptions& o = {}) {
  cplx center = 0;
  for (auto l : group) center += center_of(l, ctr);
  center /= static_cast<double>(group.size());
  return detail::group_term_at(spec, f, t, center, o.pair_radius, static_cast<int>(group.size()),
                               lift_points(xs), o);
}

}  // namespace diracspec
