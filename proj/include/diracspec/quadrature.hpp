#pragma once

#include <algorithm>
#include "diracspec/potential.hpp"
#include "diracspec/types.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <vector>

namespace diracspec {

struct Rule {
  std::vector<double> x, w;
  std::size_t size() const { return x.size(); }
};

/// n-point Gauss-Legendre rule on [-1, 1] (Newton on P_n, cached per n).
inline const Rule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, Rule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1, p2 = 0;
      for (int k = 1; k <= n; ++k) {
        double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * k - 1.0) * z * p2 - (k - 1.0) * p3) / k;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    r.x[i] = -z;
    r.x[n - 1 - i] = z;
    r.w[i] = r.w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
  return cache.emplace(n, std::move(r)).first->second;
}

/// Appends the n-point rule mapped to [a, b].
inline void append_panel(Rule& out, double a, double b, int n) {
  const Rule& g = gauss_legendre(n);
  double c = 0.5 * (a + b), hl = 0.5 * (b - a);
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.x.push_back(c + hl * g.x[i]);
    out.w.push_back(hl * g.w[i]);
  }
}

/// Composite rule on [a, b] with `panels` equal panels of n points.
inline Rule composite(double a, double b, int panels, int n = 16) {
  Rule r;
  for (int k = 0; k < panels; ++k)
    append_panel(r, a + (b - a) * k / panels, a + (b - a) * (k + 1) / panels, n);
  return r;
}

/// Composite Gauss-Legendre grid on [0, pi] whose panels never straddle a
/// jump of the potential. `freq` bounds the oscillation rate of the integrands
/// (about 2|lambda| for bilinear forms in c, s).
struct FiberGrid {
  Rule rule;
  std::vector<double> panel_edges;
  int points_per_panel = 16;

  std::size_t size() const { return rule.size(); }
  const std::vector<double>& x() const { return rule.x; }
  const std::vector<double>& w() const { return rule.w; }
};

inline double oscillation_rate(const PotentialSpec& spec, double lambda_abs) {
  int kmax = 0;
  for (const auto& t : spec.fourier_p()) kmax = std::max(kmax, std::abs(t.k));
  for (const auto& t : spec.fourier_q()) kmax = std::max(kmax, std::abs(t.k));
  return 2.0 * (lambda_abs + spec.sup_norm()) + 2.0 * kmax + 4.0;
}

/// `extra_breaks` adds panel edges in (0, pi), e.g. kinks of a test function.
inline FiberGrid make_fiber_grid(const PotentialSpec& spec, double lambda_abs,
                                 int points_per_panel = 16, double refine = 1.0,
                                 const std::vector<double>& extra_breaks = {}) {
  FiberGrid g;
  g.points_per_panel = points_per_panel;
  const double max_len = 10.0 / (oscillation_rate(spec, lambda_abs) * refine);
  auto br = spec.breakpoints();
  for (double x : extra_breaks)
    if (x > 1e-12 && x < kPi - 1e-12) br.push_back(x);
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end(), [](double u, double v) { return v - u < 1e-12; }),
           br.end());
  g.panel_edges.push_back(0.0);
  for (std::size_t i = 0; i + 1 < br.size(); ++i) {
    double a = br[i], b = br[i + 1];
    int m = std::max(1, static_cast<int>(std::ceil((b - a) / max_len)));
    for (int k = 0; k < m; ++k) {
      double lo = a + (b - a) * k / m, hi = (k + 1 == m) ? b : a + (b - a) * (k + 1) / m;
      append_panel(g.rule, lo, hi, points_per_panel);
      g.panel_edges.push_back(hi);
    }
  }
  return g;
}

/// L2[0, pi] inner product (u, v) = sum w u . conj(v) on a fiber grid.
inline cplx inner(const FiberGrid& g, const std::vector<Vec2>& u, const std::vector<Vec2>& v) {
  cplx s = 0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g.w()[i] * v[i].dot(u[i]);  // Eigen dot conjugates its left operand
  return s;
}

inline double norm(const FiberGrid& g, const std::vector<Vec2>& u) {
  double s = 0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g.w()[i] * u[i].squaredNorm();
  return std::sqrt(s);
}

}  // namespace diracspec
