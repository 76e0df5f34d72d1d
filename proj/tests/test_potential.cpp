#include "diracspec/potential.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace diracspec;

TEST(Potential, ZeroIsZero) {
  EXPECT_EQ(eval_potential(fixtures::zero(), 1.0), Mat2::Zero());
}

TEST(Potential, ConstantByConstruction) {
  Mat2 m = eval_potential(fixtures::constant(), 2.2);
  EXPECT_EQ(m(0, 0), cplx(0.3, 0));
  EXPECT_EQ(m(0, 1), cplx(0, 0.4));
  EXPECT_EQ(m(1, 0), cplx(0, 0.4));
  EXPECT_EQ(m(1, 1), cplx(-0.3, 0));
}

TEST(Potential, PiecewiseLookup) {
  auto pc = fixtures::piecewise();
  Mat2 m = eval_potential(pc, kPi / 4);
  EXPECT_EQ(m(0, 0), cplx(0.5, 0));
  EXPECT_EQ(m(0, 1), cplx(0.1, 0));
  EXPECT_EQ(m(1, 1), cplx(-0.5, 0));
  // [a, b) convention at the jump
  EXPECT_EQ(pc.p(kPi / 2), cplx(-0.5, 0.2));
  EXPECT_EQ(pc.p(std::nextafter(kPi / 2, 0.0)), cplx(0.5, 0));
}

TEST(Potential, TraceFreeSymmetric) {
  for (const auto& s : {fixtures::piecewise(), fixtures::smooth(), fixtures::constant()}) {
    for (double x : {0.0, 0.3, 1.7, 3.0, -2.0, 11.0}) {
      Mat2 m = s.eval(x);
      EXPECT_LT(std::abs(m.trace()), 1e-15);
      EXPECT_EQ(m(0, 1), m(1, 0));
    }
  }
}

TEST(Potential, Periodic) {
  for (const auto& s : {fixtures::piecewise(), fixtures::smooth()}) {
    for (double x : {0.1, 0.9, 2.5}) {
      EXPECT_LT((s.eval(x + kPi) - s.eval(x)).norm(), 1e-13);
      EXPECT_LT((s.eval(x - 3 * kPi) - s.eval(x)).norm(), 1e-12);
    }
  }
}

TEST(Potential, Validation) {
  EXPECT_THROW(PotentialSpec::piecewise({{{0, 1}, {2, 3}, 0.0, 0.0}, {{1, 2}, {1, 1}, 0.0, 0.0}}),
               ValidationError);  // overlap
  EXPECT_THROW(PotentialSpec::piecewise({{{0, 1}, {1, 3}, 0.0, 0.0}, {{1, 2}, {1, 1}, 0.0, 0.0}}),
               ValidationError);  // gap
  EXPECT_THROW(PotentialSpec::piecewise({{{0, 1}, {1, 2}, 0.0, 0.0}}), ValidationError);
  EXPECT_THROW(PotentialSpec::piecewise({}), ValidationError);
  EXPECT_THROW(PotentialSpec::piecewise({{{0, 1}, {1, 0}, 0.0, 0.0}}), ValidationError);
  // equal fractions with different denominators are accepted
  EXPECT_NO_THROW(PotentialSpec::piecewise({{{0, 1}, {2, 4}, 0.0, 0.0}, {{1, 2}, {3, 3}, 0.0, 0.0}}));
}

TEST(Potential, AdjointConjugates) {
  EXPECT_TRUE(adjoint_potential(fixtures::zero()).is_zero());
  auto c = adjoint_potential(fixtures::constant());
  EXPECT_EQ(c.p(1.0), cplx(0.3, 0));
  EXPECT_EQ(c.q(1.0), cplx(0, -0.4));

  auto f = PotentialSpec::fourier({}, {{1, cplx(2, 1)}});
  auto fa = adjoint_potential(f);
  ASSERT_EQ(fa.fourier_q().size(), 1u);
  EXPECT_EQ(fa.fourier_q()[0].k, -1);
  EXPECT_EQ(fa.fourier_q()[0].c, cplx(2, -1));

  for (const auto& s : {fixtures::piecewise(), fixtures::smooth()}) {
    auto a = s.adjoint();
    auto aa = a.adjoint();
    for (double x : {0.2, 1.1, 2.9}) {
      EXPECT_LT((a.eval(x) - s.eval(x).conjugate()).norm(), 1e-14);
      EXPECT_LT((aa.eval(x) - s.eval(x)).norm(), 1e-14);
    }
  }
}

TEST(Potential, RealSpecIsSelfAdjointCompanion) {
  auto s = PotentialSpec::piecewise({{{0, 1}, {1, 3}, 0.4, -0.2}, {{1, 3}, {1, 1}, -0.1, 0.3}});
  for (double x : {0.5, 2.0}) EXPECT_EQ(s.adjoint().eval(x), s.eval(x));
}

TEST(Potential, TotalVariation) {
  EXPECT_EQ(total_variation(fixtures::zero()), 0.0);
  EXPECT_EQ(total_variation(fixtures::constant()), 0.0);
  double expected = 2.0 * std::abs(cplx(1.0, -0.2));
  EXPECT_NEAR(total_variation(fixtures::piecewise(), Component::p), expected, 1e-15);
  EXPECT_NEAR(total_variation(fixtures::piecewise()), expected, 1e-15);
  EXPECT_NEAR(expected, 2.0396, 1e-4);
  // a cos(2x) has variation 4|a| over one period
  auto f = PotentialSpec::fourier({{1, 0.15}, {-1, 0.15}}, {});
  EXPECT_NEAR(total_variation(f, Component::p), 4 * 0.3, 1e-5);
}
