#include "diracspec/expansion.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace diracspec;

namespace {

const TestFunction kBump = TestFunction::raised_cosine(0.5, 2.5, Vec2(1.0, cplx(0.0, 0.5)));

double max_diff(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).norm());
  return m;
}

double max_abs(const std::vector<Vec2>& a) {
  double m = 0;
  for (const auto& v : a) m = std::max(m, v.norm());
  return m;
}

// Zero potential: the (n, j) mode is u e^{i w x}, u = (1, -i) or (1, i),
// w = 2n + t or -2n + t, so a(t) Psi(x) = (2 pi)^{-1} u (f, u e^{i w y})_R e^{i w x}.
// Integrating e^{i t d} over t gives E(d); the y-integral is done by Simpson.
template <class E>
std::vector<Vec2> zero_potential_term(const TestFunction& f, int n, int j, E kernel,
                                      const std::vector<double>& xs) {
  const Vec2 u = j == 1 ? Vec2(1.0, -kI) : Vec2(1.0, kI);
  const double s = j == 1 ? 1.0 : -1.0;
  const int m = 6000;
  const double dy = (f.b - f.a) / m;
  std::vector<Vec2> out;
  for (double x : xs) {
    cplx acc = 0;
    for (int i = 0; i <= m; ++i) {
      const double y = f.a + dy * i, d = x - y;
      const double wy = (i == 0 || i == m) ? 1 : (i % 2 ? 4 : 2);
      acc += wy * u.dot(f(y)) * std::exp(kI * s * 2.0 * double(n) * d) * kernel(d);
    }
    out.push_back(u * (acc * dy / 3.0) / (2 * kPi));
  }
  return out;
}

auto interval_kernel(double t0, double t1) {
  return [=](double d) -> cplx {
    if (std::abs(d) < 1e-12) return t1 - t0;
    return (std::exp(kI * t1 * d) - std::exp(kI * t0 * d)) / (kI * d);
  };
}

std::vector<double> probe_x() { return {0.2, 0.9, 1.7, 2.4, 3.3, 4.6, 7.1}; }

}  // namespace

TEST(Expansion, TestFunctionsVanishOutsideSupport) {
  for (auto k : {TestFunction::Kind::raised_cosine, TestFunction::Kind::gaussian_bump,
                 TestFunction::Kind::hat}) {
    auto f = TestFunction::make(k, 1.0, 2.0);
    EXPECT_EQ(f(1.0).norm(), 0.0);
    EXPECT_EQ(f(2.0).norm(), 0.0);
    EXPECT_EQ(f(0.3).norm(), 0.0);
    EXPECT_LT(f(1.0 + 1e-6).norm(), 1e-5);
    EXPECT_NEAR(f(1.5).norm(), 1.0, 1e-14);
    EXPECT_EQ(test_function_kind(to_string(k)), k);
  }
  EXPECT_THROW(TestFunction::hat(2.0, 1.0), ValidationError);
}

TEST(Expansion, PeriodizationExamples) {
  auto inside = TestFunction::hat(0.5, 2.5);
  for (double x : {0.1, 1.0, 2.2, 3.0})
    EXPECT_LT((periodize(inside, cplx(0.37, 0.1), x) - inside(x)).norm(), 1e-15);

  auto shifted = TestFunction::raised_cosine(kPi + 0.2, 2 * kPi - 0.2);
  for (double x : {0.3, 1.5, 2.9}) {
    Vec2 want = shifted(x + kPi) * std::exp(-kI * kPi * 0.5);
    EXPECT_LT((periodize(shifted, 0.5, x) - want).norm(), 1e-15);
  }

  auto wide = TestFunction::gaussian_bump(-1.0, 7.5, Vec2(1.0, 2.0));
  for (double x : {0.0, 0.8, 2.0, 3.1})
    for (cplx t : {cplx(0.3, 0.0), cplx(1.2, -0.05)}) {
      EXPECT_LT((periodize(wide, t, x) - periodize(wide, t + 2.0, x)).norm(), 1e-13);
      Vec2 shifted_sum = periodize(wide, t, x + kPi);
      EXPECT_LT((shifted_sum - std::exp(kI * kPi * t) * periodize(wide, t, x)).norm(), 1e-13);
    }
}

TEST(Expansion, ZeroPotentialModeCoefficientsAreBiorthogonal) {
  const double t = 0.3;
  VecFn mode = [&](double x) -> Vec2 {
    return Vec2(1.0, -kI) * std::exp(kI * (4.0 + t) * x) / std::sqrt(2 * kPi);
  };
  for (int n = -3; n <= 3; ++n)
    for (int j : {1, 2}) {
      cplx a = fiber_coefficient(fixtures::zero(), mode, t, n, j);
      cplx want = (n == 2 && j == 1) ? 1.0 : 0.0;
      EXPECT_LT(std::abs(a - want), 1e-10) << n << "," << j;
    }
}

TEST(Expansion, ZeroPotentialCoefficientMatchesExplicitIntegral) {
  auto f = TestFunction::gaussian_bump(0.4, 2.6, Vec2(1.0, cplx(0.3, -0.2)));
  const double t = 0.35;
  for (int n : {-2, 0, 1, 4})
    for (int j : {1, 2}) {
      const Vec2 u = j == 1 ? Vec2(1.0, -kI) : Vec2(1.0, kI);
      const double w = (j == 1 ? 2.0 * n : -2.0 * n) + t;
      const int m = 8000;
      const double dy = (f.b - f.a) / m;
      cplx acc = 0;
      for (int i = 0; i <= m; ++i) {
        const double y = f.a + dy * i;
        const double wy = (i == 0 || i == m) ? 1 : (i % 2 ? 4 : 2);
        acc += wy * u.dot(f(y)) * std::exp(-kI * w * y);
      }
      cplx want = acc * dy / 3.0 / std::sqrt(2 * kPi);
      EXPECT_LT(std::abs(coefficient(fixtures::zero(), f, t, n, j) - want), 1e-10);
    }
}

TEST(Expansion, FiberTailDecays) {
  const auto spec = fixtures::piecewise();
  auto f = TestFunction::hat(0.5, 2.5);
  const cplx t = 0.4;
  const int top = 96;
  auto ext = labeled_roots(spec, t, top, {});
  std::map<int, double> mass;
  for (int n = -top; n <= top; ++n)
    for (int j : {1, 2}) {
      auto e = make_eigenvalue({n, j}, t, ext.at({n, j}));
      auto g = fiber_grid_for(spec, f, std::abs(e.lambda));
      auto tr = build_triple(spec, e, g, {});
      std::vector<Vec2> ft(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) ft[i] = periodize(f, t, g.x()[i]);
      mass[std::abs(n)] += std::norm(inner(g, ft, tr.psi_star) / tr.alpha);
    }
  auto tail = [&](int N) {
    double s = 0;
    for (auto [n, v] : mass)
      if (n > N) s += v;
    return s;
  };
  EXPECT_GT(tail(8), 10 * tail(32));
}

TEST(Expansion, FiberCompleteness) {
  const auto spec = fixtures::piecewise().scaled(0.1);
  const cplx t = 0.3;
  const int N = 40;
  auto grid = EvalGrid::gauss(0.0, kPi, 60);
  auto ext = labeled_roots(spec, t, N, {});
  std::vector<BlochEigenvalue> eigs;
  for (int n = -N; n <= N; ++n)
    for (int j : {1, 2}) eigs.push_back(make_eigenvalue({n, j}, t, ext.at({n, j})));
  auto vals = detail::single_terms_at(spec, kBump, t, eigs, lift_points(grid.x), {});
  std::vector<Vec2> sum(grid.x.size(), Vec2::Zero()), ft;
  for (const auto& v : vals)
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
  for (double x : grid.x) ft.push_back(periodize(kBump, t, x));
  const double r = relative_error(grid.w, ft, sum);
  EXPECT_LT(r * r, 1e-3);
}

TEST(Expansion, ContourPieces) {
  auto e = band_edges(0.05, 0, 1, {});
  EXPECT_DOUBLE_EQ(e.front(), 0.05);
  EXPECT_DOUBLE_EQ(e.back(), 0.95);
  auto e2 = band_edges(0.05, 1, 2, {0.4, 1.37});
  EXPECT_DOUBLE_EQ(e2.front(), 1.05);
  EXPECT_DOUBLE_EQ(e2.back(), 1.95);
  EXPECT_TRUE(std::binary_search(e2.begin(), e2.end(), 1.37));
  auto lo = half_band_edges(ContourPiece::band12_lo, 0.05, {1.37});
  auto hi = half_band_edges(ContourPiece::band12_hi, 0.05, {1.37});
  EXPECT_DOUBLE_EQ(lo.back(), 1.5);
  EXPECT_DOUBLE_EQ(hi.front(), 1.5);
  EXPECT_EQ(lo.size() + hi.size(), e2.size() + 1);
  EXPECT_EQ(level2({0, 1}), 1);
  EXPECT_EQ(level2({1, 2}), 0);

  for (double c : {0.0, 1.0}) {
    cplx len = 0, moment = 0;
    for (const auto& nd : arc_nodes(c, 0.05, 8)) {
      EXPECT_GE(nd.t.imag(), 0.0);
      EXPECT_NEAR(std::abs(nd.t - c), 0.05, 1e-15);
      len += nd.w;
      moment += nd.w * (nd.t - c) * (nd.t - c);
    }
    EXPECT_LT(std::abs(len - 0.1), 1e-14);
    EXPECT_LT(std::abs(moment - 2 * std::pow(0.05, 3) / 3), 1e-15);
    for (int side : {1, -1}) {
      double w = 0;
      for (const auto& nd : center_side_nodes(c, side, 0.05, 4, 1e-6)) {
        w += nd.w.real();
        EXPECT_GT(side * (nd.t.real() - c), 1e-6);
      }
      EXPECT_NEAR(w, 0.05, 1e-15);
    }
  }
}

TEST(Expansion, ZeroPotentialContour) {
  auto c = build_contour(fixtures::zero(), 0.05, 8);
  EXPECT_TRUE(c.exceptional.empty());
  EXPECT_TRUE(c.T0.empty());
  EXPECT_TRUE(c.T1.empty());
  EXPECT_EQ(c.K0.size(), 2u * (2 * c.N_h() + 1));
  EXPECT_EQ(c.K1.size(), 2u * (2 * c.N_h() + 2));
  for (const auto& r : c.records) EXPECT_EQ(r.kind, SingularityKind::not_ess);
  EXPECT_THROW(build_contour(fixtures::zero(), 0.1, 8), ValidationError);
  EXPECT_THROW(build_contour(fixtures::zero(), 0.0, 8), ValidationError);
}

TEST(Expansion, PiecewiseContourIsDeterministic) {
  auto a = build_contour(fixtures::piecewise(), 0.05, 8);
  auto b = build_contour(fixtures::piecewise(), 0.05, 8);
  EXPECT_EQ(a.exceptional, b.exceptional);
  EXPECT_EQ(a.K0, b.K0);
  EXPECT_EQ(a.K1, b.K1);
  for (double t : a.exceptional)
    EXPECT_TRUE((t > 0.05 && t < 0.95) || (t > 1.05 && t < 1.95));
}

TEST(Expansion, ZeroPotentialBandTermMatchesClosedForm) {
  const auto xs = probe_x();
  for (auto [n, j] : {std::pair{2, 1}, std::pair{-1, 2}, std::pair{0, 1}}) {
    for (auto [p, t0, t1] : {std::tuple{ContourPiece::band01_lo, 0.05, 0.5},
                             std::tuple{ContourPiece::band01_hi, 0.5, 0.95},
                             std::tuple{ContourPiece::band12_lo, 1.05, 1.5},
                             std::tuple{ContourPiece::band12_hi, 1.5, 1.95}}) {
      auto got = term_integral(fixtures::zero(), kBump, n, j, p, 0.05, xs);
      auto want = zero_potential_term(kBump, n, j, interval_kernel(t0, t1), xs);
      EXPECT_LT(max_diff(got, want), 1e-9) << n << "," << j << " " << to_string(p);
    }
  }
}

TEST(Expansion, ZeroPotentialArcTermMatchesClosedForm) {
  // the integrand is entire in t, so the arc equals the chord [-h, h] (or [1-h, 1+h])
  const auto xs = probe_x();
  for (auto [n, j] : {std::pair{1, 1}, std::pair{1, 2}}) {
    auto got = term_integral(fixtures::zero(), kBump, n, j, ContourPiece::arc0, 0.05, xs);
    auto want = zero_potential_term(kBump, n, j, interval_kernel(-0.05, 0.05), xs);
    EXPECT_LT(max_diff(got, want), 1e-9);
    auto got1 = term_integral(fixtures::zero(), kBump, n, j, ContourPiece::arc1, 0.05, xs);
    auto want1 = zero_potential_term(kBump, n, j, interval_kernel(0.95, 1.05), xs);
    EXPECT_LT(max_diff(got1, want1), 1e-9);
  }
}

TEST(Expansion, ZeroPotentialPairMatchesClosedForm) {
  const auto xs = probe_x();
  auto got = paired_term_integral(fixtures::zero(), kBump, {{3, 1}, {3, 2}}, 0.0, 0.05, xs);
  auto a = zero_potential_term(kBump, 3, 1, interval_kernel(-0.05, 0.05), xs);
  auto b = zero_potential_term(kBump, 3, 2, interval_kernel(-0.05, 0.05), xs);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  EXPECT_LT(max_diff(got, a), 1e-9);

  // away from t = 0 the projection equals the naive two-term sum
  auto lp = lift_points(xs);
  const cplx t = 0.03;
  auto proj = paired_integrand(fixtures::zero(), kBump, {{3, 1}, {3, 2}}, t, 0.0, xs);
  auto eigs = labeled_eigenvalues(fixtures::zero(), t, {{3, 1}, {3, 2}});
  auto singles = detail::single_terms_at(fixtures::zero(), kBump, t, eigs, lp, {});
  for (std::size_t i = 0; i < xs.size(); ++i) singles[0][i] += singles[1][i];
  EXPECT_LT(max_diff(proj, singles[0]), 1e-9);
}

TEST(Expansion, PairingEquivalenceAtNondegenerateCenter) {
  const auto spec = fixtures::piecewise();
  auto e = spectrum_window(spec, 0.0, 4, {Tolerances{}, true});
  cplx l31 = 0, l32 = 0;
  for (const auto& v : e) {
    if (v.label() == Label{3, 1}) l31 = v.lambda;
    if (v.label() == Label{3, 2}) l32 = v.lambda;
  }
  ASSERT_GT(std::abs(l31 - l32), 1e-3);

  const auto xs = probe_x();
  auto paired = paired_term_integral(spec, kBump, {{3, 1}, {3, 2}}, 0.0, 0.05, xs);
  auto s1 = term_integral(spec, kBump, 3, 1, ContourPiece::center0, 0.05, xs);
  auto s2 = term_integral(spec, kBump, 3, 2, ContourPiece::center0, 0.05, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) s1[i] += s2[i];
  EXPECT_LT(max_diff(paired, s1), 1e-8);
}

TEST(Expansion, PairedIntegrandBoundedThroughCollision) {
  // constant potential: lambda_{0,1}(1) = lambda_{1,2}(1) = sqrt(1 + p0^2 + q0^2)
  const auto spec = fixtures::constant();
  const cplx l0 = std::sqrt(1.0 + fixtures::kP0 * fixtures::kP0 + fixtures::kQ0 * fixtures::kQ0);
  EXPECT_EQ(count_roots_in_disk(spec, 1.0, l0, 0.3), 2);
  const auto xs = probe_x();
  auto sup_on = [&](int m) {
    double s = 0;
    for (int i = 0; i <= m; ++i) {
      const double t = 0.95 + 0.1 * i / m;
      s = std::max(s, max_abs(paired_integrand(spec, kBump, {{0, 1}, {1, 2}}, t, 1.0, xs)));
    }
    return s;
  };
  const double s10 = sup_on(10), s40 = sup_on(40);
  EXPECT_TRUE(std::isfinite(s10));
  EXPECT_LT(s10, 10.0);
  EXPECT_LT(std::abs(s40 - s10), 0.05 * s10);
}

TEST(Expansion, ZeroFunctionGivesZero) {
  TestFunction zero = TestFunction::raised_cosine(0.5, 2.5, Vec2::Zero());
  const auto xs = probe_x();
  EXPECT_EQ(max_abs(term_integral(fixtures::piecewise(), zero, 1, 1, ContourPiece::band01_lo,
                                  0.05, xs, 2)),
            0.0);
  EXPECT_EQ(max_abs(paired_term_integral(fixtures::piecewise(), zero, {{4, 1}, {4, 2}}, 0.0, 0.05,
                                         xs, 2)),
            0.0);
  auto rep = expand_reconstruct(fixtures::zero(), zero, 0.05, 4, EvalGrid::uniform(0, 3, 31));
  EXPECT_EQ(rep.rel_error, 0.0);
  EXPECT_EQ(max_abs(rep.frec), 0.0);
}

TEST(Expansion, ZeroPotentialReconstruction) {
  const auto spec = fixtures::zero();
  auto grid = default_eval_grid(spec, 0.0, 3.0, 8);
  ExpansionOptions o;
  o.nodes_per_panel = 1;
  auto rep = expand_reconstruct(spec, kBump, 0.05, 8, grid, o);
  EXPECT_TRUE(rep.failed.empty());
  EXPECT_TRUE(rep.unconverged.empty());
  EXPECT_LT(rep.rel_error, 5e-3);
  for (std::size_t i = 1; i < rep.trace_n.size(); ++i)
    EXPECT_LT(rep.trace_n[i].second, rep.trace_n[i - 1].second);
  for (std::size_t i = 1; i < rep.trace_change.size(); ++i)
    EXPECT_LT(rep.trace_change[i], rep.trace_change[i - 1]);
  EXPECT_DOUBLE_EQ(rep.rel_error, relative_error(rep.w, rep.f, rep.frec));
}

TEST(Expansion, SemicircleRouteAgreesWithIntervalRoute) {
  const auto spec = fixtures::zero();
  auto grid = default_eval_grid(spec, 0.0, 3.0, 4);
  ExpansionOptions o;
  auto a = expand_reconstruct(spec, kBump, 0.05, 4, grid, o);
  o.route = Route::semicircle;
  auto b = expand_reconstruct(spec, kBump, 0.05, 4, grid, o);
  EXPECT_LT(relative_error(grid.w, a.frec, b.frec), 1e-7);
}

TEST(Expansion, ZeroPotentialPartialSumsIndependentOfH) {
  // the truncation rule depends on t only, so moving h deforms the contour
  // without changing the terms of a partial sum
  auto grid = default_eval_grid(fixtures::zero(), 0.0, 3.0, 4);
  ExpansionOptions o;
  o.max_levels = 2;
  auto a = expand_reconstruct(fixtures::zero(), kBump, 0.04, 4, grid, o);
  auto b = expand_reconstruct(fixtures::zero(), kBump, 0.07, 4, grid, o);
  ASSERT_EQ(a.trace_n.size(), b.trace_n.size());
  for (std::size_t k = 0; k < a.trace_n.size(); ++k)
    EXPECT_NEAR(a.trace_n[k].second, b.trace_n[k].second, 1e-8) << "N = " << a.trace_n[k].first;
  std::vector<Vec2> d(a.frec.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.frec[i] - b.frec[i];
  EXPECT_LT(l2_norm(grid.w, d), 1e-7);
}
