#include "diracspec/singularities.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace diracspec;

namespace {

const cplx kS = fixtures::kP0 * fixtures::kP0 + fixtures::kQ0 * fixtures::kQ0;

void expect_same_set(std::vector<cplx> got, std::vector<cplx> want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (cplx w : want) {
    auto it = std::min_element(got.begin(), got.end(),
                               [&](cplx a, cplx b) { return std::abs(a - w) < std::abs(b - w); });
    EXPECT_LT(std::abs(*it - w), tol) << "missing " << w;
    got.erase(it);
  }
}

}  // namespace

TEST(Singularities, CriticalPointsZero) {
  auto nu = critical_points(fixtures::zero(), {-5, 5, -1, 1});
  std::vector<cplx> want;
  for (int k = -4; k <= 4; ++k) want.push_back(double(k));
  expect_same_set(nu, want, 1e-10);
}

TEST(Singularities, CriticalPointsConstant) {
  // F' = -2 pi sin(pi w) lambda / w with w^2 = lambda^2 - p0^2 - q0^2
  auto nu = critical_points(fixtures::constant(), {-5, 5, -1, 1});
  std::vector<cplx> want{0.0};
  for (int k = 1; k <= 5; ++k) {
    want.push_back(std::sqrt(double(k * k) + kS));
    want.push_back(-std::sqrt(double(k * k) + kS));
  }
  expect_same_set(nu, want, 1e-8);
}

TEST(Singularities, CriticalPointsPiecewiseMatchCount) {
  const auto spec = fixtures::piecewise();
  // lambda = 0 is a critical point on the left edge, so the window is contracted
  auto g = [&](cplx z) { return discriminant(spec, z).F_prime; };
  EXPECT_LT(std::abs(g(0.0)), 1e-12);
  auto nu = critical_points(spec, {0, 10, -0.5, 0.5});
  int count = winding_number(g, rectangle(5e-4, 10 - 5e-4, -0.4995, 0.4995), 400, 1e-10).count;
  EXPECT_EQ(static_cast<int>(nu.size()), count);
  EXPECT_GE(count, 9);
  for (cplx z : nu) EXPECT_LT(std::abs(discriminant(spec, z).F_prime), 1e-8);
}

TEST(Singularities, ExceptionalQuasimomenta) {
  auto t4 = exceptional_quasimomenta(fixtures::zero(), 4.0);
  ASSERT_EQ(t4.size(), 1u);
  EXPECT_LT(std::abs(t4[0]), 1e-7);
  auto t3 = exceptional_quasimomenta(fixtures::zero(), 3.0);
  ASSERT_EQ(t3.size(), 1u);
  EXPECT_LT(std::abs(t3[0] - 1.0), 1e-7);
  auto tc = exceptional_quasimomenta(fixtures::constant(), std::sqrt(1.0 + kS));
  EXPECT_LT(std::abs(tc[0] - 1.0), 1e-7);

  const auto spec = fixtures::piecewise();
  cplx nu = *critical_point_near(spec, 4.0);
  const cplx F = discriminant_value(spec, nu);
  auto ts = exceptional_quasimomenta(spec, nu);
  EXPECT_EQ(ts.size(), 2u);
  for (cplx t : ts) {
    EXPECT_LT(std::abs(F - 2.0 * std::cos(kPi * t)), 1e-12);
    EXPECT_GT(t.real(), -1.0);
    EXPECT_LE(t.real(), 1.0);
  }
}

TEST(Singularities, ZeroPotentialDoublePointIsNotEssential) {
  auto rec = classify(fixtures::zero(), 0.0, 2.0);
  EXPECT_EQ(rec.m, 2);
  EXPECT_EQ(rec.kind, SingularityKind::not_ess);
  ASSERT_TRUE(rec.exponent.has_value());
  EXPECT_NEAR(rec.exponent->beta, 0.0, 0.02);

  auto fit = alpha_exponent(fixtures::zero(), 0.0, 1, 1);
  EXPECT_NEAR(fit.beta, 0.0, 0.02);
  EXPECT_EQ(fit.direction_slopes.size(), 2u);
}

TEST(Singularities, ConstantAntiperiodicCollision) {
  const cplx lambda0 = std::sqrt(1.0 + kS);
  auto rec = classify(fixtures::constant(), 1.0, lambda0);
  EXPECT_EQ(rec.m, 2);
  ASSERT_TRUE(rec.exponent.has_value());
  EXPECT_NE(rec.kind, SingularityKind::simple);
  EXPECT_NE(rec.kind, SingularityKind::spectral_singularity);
}

TEST(Singularities, SimpleEigenvalue) {
  auto e = solve_eigenvalue(fixtures::piecewise(), 0.3, 2, 1);
  auto rec = classify(fixtures::piecewise(), 0.3, e.lambda);
  EXPECT_EQ(rec.m, 1);
  EXPECT_EQ(rec.kind, SingularityKind::simple);
  EXPECT_THROW(classify(fixtures::piecewise(), 0.3, e.lambda + 0.01), SolverError);
}

TEST(Singularities, TunedInteriorCollisionSquareRootBlowUp) {
  auto tuned = tune_real_collision(fixtures::collision_family, 0.03, 0.1, 0.0);
  EXPECT_GT(tuned.t0.real(), 0.1);
  EXPECT_LT(tuned.t0.real(), 0.9);
  const auto spec = fixtures::collision_family(tuned.mu);
  EXPECT_LT(std::abs(discriminant(spec, tuned.nu).F_prime), 1e-8);
  auto rec = classify(spec, tuned.t0, tuned.nu);
  EXPECT_EQ(rec.m, 2);
  EXPECT_EQ(rec.kind, SingularityKind::spectral_singularity);
  ASSERT_TRUE(rec.exponent.has_value());
  ASSERT_GE(rec.exponent->direction_slopes.size(), 2u);
  for (double b : rec.exponent->direction_slopes) EXPECT_NEAR(b, 0.5, 0.1);
  EXPECT_LT(rec.exponent->beta, 1.0);
}

TEST(Singularities, CubicSurrogateExponent) {
  // F(lambda) = 2 cos(pi t0) + (lambda - l0)^3: a triple root at t0; alpha
  // is modeled as F'(lambda) times a smooth nonvanishing factor.
  const cplx t0 = 0.4, l0(1.3, 0.2);
  auto probe = [&](cplx t) {
    cplx d = 2.0 * std::cos(kPi * t) - 2.0 * std::cos(kPi * t0);
    cplx lam = l0 + std::pow(d, 1.0 / 3.0);
    cplx fp = 3.0 * (lam - l0) * (lam - l0);
    return fp * (1.0 + 0.3 * lam);
  };
  auto fit = fit_alpha_exponent(probe, t0, default_radii(), {0.0, kPi / 2, kPi});
  EXPECT_NEAR(fit.beta, 2.0 / 3.0, 0.05);
  EXPECT_FALSE(fit.direction_dependent);
}

TEST(Singularities, ProbeFailureCarriesT) {
  auto bad = [](cplx t) -> cplx {
    if (std::abs(t - 0.5) < 2e-3) throw DegenerateEigenvalueError("probe", 0.0);
    return 1.0;
  };
  try {
    fit_alpha_exponent(bad, 0.5, default_radii(), {0.0});
    FAIL() << "expected ProbeFailure";
  } catch (const ProbeFailure& e) {
    EXPECT_LT(std::abs(e.t() - 0.5), 2e-3);
  }
  EXPECT_THROW(fit_alpha_exponent(bad, 0.5, {1e-2}, {0.0}), ValidationError);
}

TEST(Singularities, Deterministic) {
  auto a = classify(fixtures::zero(), 0.0, 2.0);
  auto b = classify(fixtures::zero(), 0.0, 2.0);
  EXPECT_EQ(a.exponent->beta, b.exponent->beta);
  EXPECT_EQ(a.kind, b.kind);
}
