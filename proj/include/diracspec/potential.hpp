#pragma once

#include "diracspec/errors.hpp"
#include "diracspec/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace diracspec {

/// Interval endpoint stored as num/den times pi, so piece boundaries compare exactly.
struct PiFraction {
  long num = 0;
  long den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  double radians() const { return value() * kPi; }
  friend bool operator==(const PiFraction& a, const PiFraction& b) {
    return a.num * b.den == b.num * a.den;
  }
  friend bool operator<(const PiFraction& a, const PiFraction& b) {
    return a.num * b.den < b.num * a.den;
  }
};

struct FourierTerm {
  int k = 0;  ///< harmonic index of e^{2ikx}
  cplx c{};
};

/// Constant piece on [a*pi, b*pi).
struct Piece {
  PiFraction a, b;
  cplx p{}, q{};
};

/// Complex pi-periodic potential Q = [[p, q], [q, -p]]. Immutable once built;
/// the factories validate.
class PotentialSpec {
 public:
  enum class Kind { fourier, piecewise };

  static PotentialSpec fourier(std::vector<FourierTerm> p, std::vector<FourierTerm> q) {
    PotentialSpec s;
    s.kind_ = Kind::fourier;
    s.fp_ = merge(std::move(p));
    s.fq_ = merge(std::move(q));
    return s;
  }

  static PotentialSpec piecewise(std::vector<Piece> pieces) {
    if (pieces.empty()) throw ValidationError("piecewise potential needs at least one piece");
    for (const auto& pc : pieces) {
      if (pc.a.den <= 0 || pc.b.den <= 0)
        throw ValidationError("piece endpoint denominators must be positive");
      if (!(pc.a < pc.b)) throw ValidationError("piece with empty or reversed interval");
      if (!std::isfinite(pc.p.real()) || !std::isfinite(pc.p.imag()) ||
          !std::isfinite(pc.q.real()) || !std::isfinite(pc.q.imag()))
        throw ValidationError("piece values must be finite");
    }
    std::sort(pieces.begin(), pieces.end(),
              [](const Piece& x, const Piece& y) { return x.a < y.a; });
    if (!(pieces.front().a == PiFraction{0, 1}))
      throw ValidationError("pieces must start at 0");
    if (!(pieces.back().b == PiFraction{1, 1}))
      throw ValidationError("pieces must end at pi");
    for (std::size_t i = 1; i < pieces.size(); ++i) {
      if (pieces[i].a < pieces[i - 1].b) throw ValidationError("overlapping pieces");
      if (pieces[i - 1].b < pieces[i].a) throw ValidationError("gap between pieces");
    }
    PotentialSpec s;
    s.kind_ = Kind::piecewise;
    s.pieces_ = std::move(pieces);
    return s;
  }

  static PotentialSpec zero() { return constant(0.0, 0.0); }

  static PotentialSpec constant(cplx p, cplx q) {
    return piecewise({Piece{{0, 1}, {1, 1}, p, q}});
  }

  Kind kind() const { return kind_; }
  const std::vector<Piece>& pieces() const { return pieces_; }
  const std::vector<FourierTerm>& fourier_p() const { return fp_; }
  const std::vector<FourierTerm>& fourier_q() const { return fq_; }

  /// Index of the piece containing x in [0, pi).
  std::size_t piece_index(double x) const {
    double u = reduce(x) / kPi;
    for (std::size_t i = 0; i + 1 < pieces_.size(); ++i)
      if (u < pieces_[i].b.value()) return i;
    return pieces_.size() - 1;
  }

  cplx p(double x) const {
    if (kind_ == Kind::piecewise) return pieces_[piece_index(x)].p;
    return series(fp_, reduce(x));
  }

  cplx q(double x) const {
    if (kind_ == Kind::piecewise) return pieces_[piece_index(x)].q;
    return series(fq_, reduce(x));
  }

  Mat2 eval(double x) const {
    cplx pv = p(x), qv = q(x);
    Mat2 m;
    m << pv, qv, qv, -pv;
    return m;
  }

  /// Jump locations in [0, pi], always including both ends.
  std::vector<double> breakpoints() const {
    std::vector<double> b{0.0};
    if (kind_ == Kind::piecewise)
      for (std::size_t i = 0; i + 1 < pieces_.size(); ++i) b.push_back(pieces_[i].b.radians());
    b.push_back(kPi);
    return b;
  }

  /// Largest |p|, |q| (Fourier: sum of coefficient moduli).
  double sup_norm() const {
    double m = 0;
    if (kind_ == Kind::piecewise) {
      for (const auto& pc : pieces_) m = std::max({m, std::abs(pc.p), std::abs(pc.q)});
    } else {
      double sp = 0, sq = 0;
      for (const auto& t : fp_) sp += std::abs(t.c);
      for (const auto& t : fq_) sq += std::abs(t.c);
      m = std::max(sp, sq);
    }
    return m;
  }

  PotentialSpec scaled(cplx s) const {
    PotentialSpec r = *this;
    for (auto& pc : r.pieces_) pc.p *= s, pc.q *= s;
    for (auto& t : r.fp_) t.c *= s;
    for (auto& t : r.fq_) t.c *= s;
    return r;
  }

  /// Entrywise complex conjugate potential.
  PotentialSpec adjoint() const {
    PotentialSpec r = *this;
    for (auto& pc : r.pieces_) pc.p = std::conj(pc.p), pc.q = std::conj(pc.q);
    auto flip = [](std::vector<FourierTerm>& v) {
      for (auto& t : v) t.k = -t.k, t.c = std::conj(t.c);
      std::sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.k < b.k; });
    };
    flip(r.fp_);
    flip(r.fq_);
    return r;
  }

  bool is_zero() const {
    if (kind_ == Kind::piecewise)
      return std::all_of(pieces_.begin(), pieces_.end(),
                         [](const Piece& pc) { return pc.p == 0.0 && pc.q == 0.0; });
    return fp_.empty() && fq_.empty();
  }

  static double reduce(double x) {
    double r = std::fmod(x, kPi);
    if (r < 0) r += kPi;
    if (r >= kPi) r = 0;
    return r;
  }

 private:
  static std::vector<FourierTerm> merge(std::vector<FourierTerm> v) {
    std::sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.k < b.k; });
    std::vector<FourierTerm> out;
    for (const auto& t : v) {
      if (!std::isfinite(t.c.real()) || !std::isfinite(t.c.imag()))
        throw ValidationError("Fourier coefficients must be finite");
      if (!out.empty() && out.back().k == t.k)
        out.back().c += t.c;
      else
        out.push_back(t);
    }
    std::erase_if(out, [](const FourierTerm& t) { return t.c == 0.0; });
    return out;
  }

  static cplx series(const std::vector<FourierTerm>& v, double x) {
    cplx s = 0;
    for (const auto& t : v) s += t.c * std::exp(cplx(0, 2.0 * t.k * x));
    return s;
  }

  Kind kind_ = Kind::piecewise;
  std::vector<Piece> pieces_;
  std::vector<FourierTerm> fp_, fq_;
};

inline Mat2 eval_potential(const PotentialSpec& s, double x) { return s.eval(x); }

inline PotentialSpec adjoint_potential(const PotentialSpec& s) { return s.adjoint(); }

enum class Component { p, q, both };

/// Total variation over one period. Exact jump sum (with wrap-around) for
/// piecewise specs; for Fourier specs the integral of |f'| by dense sampling.
inline double total_variation(const PotentialSpec& s, Component c = Component::both) {
  auto one = [&](bool want_p) {
    double tv = 0;
    if (s.kind() == PotentialSpec::Kind::piecewise) {
      const auto& pcs = s.pieces();
      for (std::size_t i = 0; i < pcs.size(); ++i) {
        const auto& a = pcs[i];
        const auto& b = pcs[(i + 1) % pcs.size()];
        tv += std::abs(want_p ? b.p - a.p : b.q - a.q);
      }
    } else {
      const auto& terms = want_p ? s.fourier_p() : s.fourier_q();
      int kmax = 0;
      for (const auto& t : terms) kmax = std::max(kmax, std::abs(t.k));
      const int m = 512 * std::max(1, kmax);
      auto f = [&](double x) {
        cplx v = 0;
        for (const auto& t : terms) v += t.c * std::exp(cplx(0, 2.0 * t.k * x));
        return v;
      };
      cplx prev = f(0);
      for (int i = 1; i <= m; ++i) {
        cplx cur = f(kPi * i / m);
        tv += std::abs(cur - prev);
        prev = cur;
      }
    }
    return tv;
  };
  switch (c) {
    case Component::p: return one(true);
    case Component::q: return one(false);
    case Component::both: return one(true) + one(false);
  }
  return 0;
}

}  // namespace diracspec
