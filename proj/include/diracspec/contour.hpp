#pragma once

#include "diracspec/errors.hpp"
#include "diracspec/types.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace diracspec {

/// Closed curve z(s), s in [0, 1), traversed counter-clockwise.
using ClosedCurve = std::function<cplx(double)>;

inline ClosedCurve circle(cplx center, double radius) {
  return [=](double s) { return center + radius * std::exp(kI * (2.0 * kPi * s)); };
}

/// Axis-aligned rectangle [x0, x1] x [y0, y1], parameterized by arc length.
inline ClosedCurve rectangle(double x0, double x1, double y0, double y1) {
  const double w = x1 - x0, hgt = y1 - y0, per = 2 * (w + hgt);
  return [=](double s) {
    double d = s * per;
    if (d < w) return cplx(x0 + d, y0);
    d -= w;
    if (d < hgt) return cplx(x1, y0 + d);
    d -= hgt;
    if (d < w) return cplx(x1 - d, y1);
    d -= w;
    return cplx(x0, y1 - d);
  };
}

struct Winding {
  int count = 0;
  double min_abs = 0;
  std::size_t samples = 0;
};

/// Argument principle: winding number of g along `curve`. Samples are refined
/// until consecutive values differ by less than half their modulus, so the
/// phase increment between samples is unambiguous. Throws ContourError if
/// |g| drops below `min_abs` on the curve.
template <class G>
Winding winding_number(G&& g, const ClosedCurve& curve, int initial, double min_abs,
                       std::size_t budget = 200000) {
  struct Node {
    double s;
    cplx v;
  };
  std::vector<Node> stack;
  Winding w;
  w.min_abs = INFINITY;
  auto eval = [&](double s) {
    cplx v = g(curve(s));
    ++w.samples;
    double a = std::abs(v);
    if (!std::isfinite(a)) throw ContourError("non-finite value on contour", 0.0);
    w.min_abs = std::min(w.min_abs, a);
    if (a < min_abs) throw ContourError("function vanishes on contour", a);
    return v;
  };
  double total = 0;
  Node first{0.0, eval(0.0)};
  Node left = first;
  for (int k = 1; k <= initial; ++k) {
    double s = static_cast<double>(k) / initial;
    Node right = k == initial ? Node{1.0, first.v} : Node{s, eval(s)};
    stack.push_back(right);
    while (!stack.empty()) {
      Node r = stack.back();
      cplx ratio = r.v / left.v;
      bool fine = std::abs(r.v - left.v) < 0.5 * std::min(std::abs(r.v), std::abs(left.v));
      if (fine || r.s - left.s < 1e-12) {
        if (!fine && std::abs(std::arg(ratio)) > kPi / 2)
          throw ContourError("contour sampling could not resolve phase", w.min_abs);
        total += std::arg(ratio);
        left = r;
        stack.pop_back();
      } else {
        if (w.samples > budget) throw ContourError("contour sampling budget exhausted", w.min_abs);
        double sm = 0.5 * (left.s + r.s);
        stack.push_back(Node{sm, eval(sm)});
      }
    }
  }
  double turns = total / (2 * kPi);
  w.count = static_cast<int>(std::lround(turns));
  if (std::abs(turns - w.count) > 1e-3)
    throw ContourError("winding number not close to an integer", w.min_abs);
  return w;
}

/// Shifted power sums s_p = sum over roots r of (r - center)^p, p = 0..pmax,
/// for the zeros of g inside a circle (trapezoid rule on z^p g'/g).
/// `gd` returns the pair (g, g') at z.
template <class GD>
std::vector<cplx> circle_moments(GD&& gd, cplx center, double radius, int pmax, int nodes) {
  std::vector<cplx> s(pmax + 1, 0.0);
  for (int k = 0; k < nodes; ++k) {
    cplx e = std::exp(kI * (2.0 * kPi * k / nodes));
    auto [g, dg] = gd(center + radius * e);
    // (1/2 pi i) oint u^p g'/g dz, dz = i r e dtheta, u = r e
    cplx base = dg / g * radius * e / double(nodes);
    cplx up = 1.0;
    for (int p = 0; p <= pmax; ++p) {
      s[p] += base * up;
      up *= radius * e;
    }
  }
  return s;
}

/// Roots (one or two) from shifted power sums, returned in absolute position.
inline std::vector<cplx> roots_from_moments(const std::vector<cplx>& s, int count, cplx center) {
  if (count == 1) return {center + s[1]};
  if (count == 2) {
    cplx sum = s[1], prod = 0.5 * (s[1] * s[1] - s[2]);
    cplx disc = std::sqrt(sum * sum - 4.0 * prod);
    return {center + 0.5 * (sum + disc), center + 0.5 * (sum - disc)};
  }
  return {};
}

}  // namespace diracspec
