#pragma once

#include "diracspec/bloch.hpp"
#include "diracspec/errors.hpp"
#include "diracspec/expansion.hpp"
#include "diracspec/potential.hpp"
#include "diracspec/singularities.hpp"
#include "diracspec/types.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace diracspec::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ---- scalars -------------------------------------------------------------

inline json to_json(cplx c) { return json::array({c.real(), c.imag()}); }

/// Accepts a number, [re, im] or {"re": .., "im": ..}.
inline cplx cplx_from_json(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  if (j.is_object() && j.contains("re"))
    return {j.at("re").get<double>(), j.value("im", 0.0)};
  throw ValidationError("expected a complex number, got " + j.dump());
}

inline json to_json(const Vec2& v) { return json::array({to_json(v(0)), to_json(v(1))}); }

inline Vec2 vec2_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ValidationError("expected a 2-vector, got " + j.dump());
  return Vec2(cplx_from_json(j[0]), cplx_from_json(j[1]));
}

inline std::vector<Vec2> vec2s_from_json(const json& j) {
  std::vector<Vec2> out;
  for (const auto& e : j) out.push_back(vec2_from_json(e));
  return out;
}

inline json to_json(const std::vector<Vec2>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(to_json(x));
  return a;
}

inline json to_json(Label l) { return json::array({l.n, l.j}); }

inline Label label_from_json(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

// ---- potential -----------------------------------------------------------

/// The standard fixtures: zero, constant (p = 0.3, q = 0.4i) and piecewise
/// (p = 0.5 | -0.5 + 0.2i split at pi/2, q = 0.1).
inline PotentialSpec named_potential(const std::string& name) {
  if (name == "zero" || name == "Z") return PotentialSpec::zero();
  if (name == "constant" || name == "C") return PotentialSpec::constant(0.3, cplx(0.0, 0.4));
  if (name == "piecewise" || name == "PC")
    return PotentialSpec::piecewise({{{0, 1}, {1, 2}, 0.5, 0.1}, {{1, 2}, {1, 1}, cplx(-0.5, 0.2), 0.1}});
  throw ValidationError("unknown fixture '" + name + "' (expected zero, constant or piecewise)");
}

inline json to_json(const PotentialSpec& s) {
  json j;
  if (s.kind() == PotentialSpec::Kind::piecewise) {
    j["kind"] = "piecewise";
    j["pieces"] = json::array();
    for (const auto& pc : s.pieces())
      j["pieces"].push_back({{"a", {pc.a.num, pc.a.den}},
                             {"b", {pc.b.num, pc.b.den}},
                             {"p", to_json(pc.p)},
                             {"q", to_json(pc.q)}});
  } else {
    j["kind"] = "fourier";
    auto terms = [](const std::vector<FourierTerm>& v) {
      json a = json::array();
      for (const auto& t : v) a.push_back({{"k", t.k}, {"c", to_json(t.c)}});
      return a;
    };
    j["p"] = terms(s.fourier_p());
    j["q"] = terms(s.fourier_q());
  }
  return j;
}

/// {"fixture": name, "scale": s} or an explicit piecewise / fourier spec.
/// Piece endpoints are fractions of pi given as [num, den].
inline PotentialSpec potential_from_json(const json& j) {
  try {
    PotentialSpec s;
    if (j.contains("fixture")) {
      s = named_potential(j.at("fixture").get<std::string>());
    } else {
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "piecewise" || kind == "piecewise_constant") {
        std::vector<Piece> pieces;
        for (const auto& pc : j.at("pieces"))
          pieces.push_back({{pc.at("a").at(0).get<long>(), pc.at("a").at(1).get<long>()},
                            {pc.at("b").at(0).get<long>(), pc.at("b").at(1).get<long>()},
                            cplx_from_json(pc.at("p")),
                            cplx_from_json(pc.at("q"))});
        s = PotentialSpec::piecewise(std::move(pieces));
      } else if (kind == "fourier") {
        auto terms = [&](const char* key) {
          std::vector<FourierTerm> v;
          if (j.contains(key))
            for (const auto& t : j.at(key)) v.push_back({t.at("k").get<int>(), cplx_from_json(t.at("c"))});
          return v;
        };
        s = PotentialSpec::fourier(terms("p"), terms("q"));
      } else {
        throw ValidationError("potential kind must be piecewise or fourier");
      }
    }
    if (j.contains("scale")) s = s.scaled(cplx_from_json(j.at("scale")));
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed potential: ") + e.what());
  }
}

// ---- tolerances ----------------------------------------------------------

inline json to_json(const Tolerances& t) {
  return {{"integrator_abs", t.integrator_abs}, {"integrator_rel", t.integrator_rel},
          {"root_residual", t.root_residual},   {"contour_min_abs", t.contour_min_abs},
          {"degenerate", t.degenerate},         {"integer_guard", t.integer_guard},
          {"projection_quad", t.projection_quad}, {"term_quad", t.term_quad},
          {"near_singular", t.near_singular}};
}

/// Overrides fields of `base` present in j; all must be positive.
inline Tolerances tolerances_from_json(const json& j, Tolerances base = {}) {
  auto read = [&](const char* key, double& slot) {
    if (!j.contains(key)) return;
    double v = j.at(key).get<double>();
    if (!(v > 0 && std::isfinite(v)))
      throw ValidationError(std::string("tolerance ") + key + " must be positive");
    slot = v;
  };
  read("integrator_abs", base.integrator_abs);
  read("integrator_rel", base.integrator_rel);
  read("root_residual", base.root_residual);
  read("contour_min_abs", base.contour_min_abs);
  read("degenerate", base.degenerate);
  read("integer_guard", base.integer_guard);
  read("projection_quad", base.projection_quad);
  read("term_quad", base.term_quad);
  read("near_singular", base.near_singular);
  return base;
}

// ---- test functions ------------------------------------------------------

inline json to_json(const TestFunction& f) {
  return {{"kind", to_string(f.kind)}, {"support", {f.a, f.b}}, {"amplitude", to_json(f.amplitude)}};
}

inline TestFunction test_function_from_json(const json& j) {
  try {
    Vec2 amp = j.contains("amplitude") ? vec2_from_json(j.at("amplitude")) : Vec2(1.0, 0.0);
    return TestFunction::make(test_function_kind(j.value("kind", std::string("raised_cosine"))),
                              j.at("support").at(0).get<double>(),
                              j.at("support").at(1).get<double>(), amp);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed test function: ") + e.what());
  }
}

// ---- records -------------------------------------------------------------

inline json to_json(const BlochEigenvalue& e) {
  return {{"n", e.n},           {"j", e.j},
          {"t", to_json(e.t)},  {"lambda", to_json(e.lambda)},
          {"residual", e.residual}, {"multiplicity", e.multiplicity},
          {"center", to_json(e.center)}, {"fprime", to_json(e.fprime)}};
}

inline BlochEigenvalue eigenvalue_from_json(const json& j) {
  BlochEigenvalue e;
  e.n = j.at("n");
  e.j = j.at("j");
  e.t = cplx_from_json(j.at("t"));
  e.lambda = cplx_from_json(j.at("lambda"));
  e.residual = j.at("residual");
  e.multiplicity = j.at("multiplicity");
  e.center = cplx_from_json(j.at("center"));
  e.fprime = cplx_from_json(j.at("fprime"));
  return e;
}

inline SingularityKind singularity_kind(const std::string& s) {
  for (auto k : {SingularityKind::simple, SingularityKind::spectral_singularity,
                 SingularityKind::ess_candidate, SingularityKind::not_ess})
    if (to_string(k) == s) return k;
  throw ValidationError("unknown singularity kind '" + s + "'");
}

inline json to_json(const ExponentFit& f) {
  json samples = json::array();
  for (const auto& [t, a] : f.samples) samples.push_back({to_json(t), to_json(a)});
  return {{"beta", f.beta},
          {"residual", f.residual},
          {"direction_slopes", f.direction_slopes},
          {"direction_dependent", f.direction_dependent},
          {"samples", samples}};
}

inline ExponentFit exponent_from_json(const json& j) {
  ExponentFit f;
  f.beta = j.at("beta");
  f.residual = j.at("residual");
  f.direction_slopes = j.at("direction_slopes").get<std::vector<double>>();
  f.direction_dependent = j.at("direction_dependent");
  for (const auto& s : j.at("samples"))
    f.samples.emplace_back(cplx_from_json(s.at(0)), cplx_from_json(s.at(1)));
  return f;
}

inline json to_json(const SingularityRecord& r) {
  json j = {{"t0", to_json(r.t0)},
            {"lambda0", to_json(r.lambda0)},
            {"m", r.m},
            {"kind", to_string(r.kind)},
            {"exponent", nullptr}};
  if (r.exponent) j["exponent"] = to_json(*r.exponent);
  return j;
}

inline SingularityRecord singularity_from_json(const json& j) {
  SingularityRecord r;
  r.t0 = cplx_from_json(j.at("t0"));
  r.lambda0 = cplx_from_json(j.at("lambda0"));
  r.m = j.at("m");
  r.kind = singularity_kind(j.at("kind"));
  if (!j.at("exponent").is_null()) r.exponent = exponent_from_json(j.at("exponent"));
  return r;
}

inline Sum sum_from_string(const std::string& s) {
  for (auto k : {Sum::band, Sum::k0, Sum::k1, Sum::pair0, Sum::pair1, Sum::ess0, Sum::ess1,
                 Sum::arc0, Sum::arc1})
    if (to_string(k) == s) return k;
  throw ValidationError("unknown sum '" + s + "'");
}

inline ContourPiece piece_from_string(const std::string& s) {
  for (auto p : {ContourPiece::band01_lo, ContourPiece::band01_hi, ContourPiece::band12_lo,
                 ContourPiece::band12_hi, ContourPiece::center0,
                 ContourPiece::center1, ContourPiece::arc0, ContourPiece::arc1})
    if (to_string(p) == s) return p;
  throw ValidationError("unknown contour piece '" + s + "'");
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_from(const json& j) { return j.is_null() ? NAN : j.get<double>(); }

/// Report as JSON. Per-term samples are included on request (they dominate
/// the size); their L2 norms always are.
inline json to_json(const ExpansionReport& r, bool term_values = false) {
  json terms = json::array();
  for (const auto& t : r.terms) {
    json labels = json::array();
    for (auto l : t.labels) labels.push_back(to_json(l));
    json e = {{"sum", to_string(t.sum)},
              {"piece", to_string(t.piece)},
              {"labels", labels},
              {"level", t.level},
              {"l2_norm", l2_norm(r.w, t.values)},
              {"change", number_or_null(t.change)},
              {"failed", t.failed},
              {"error", t.error}};
    if (term_values) e["values"] = to_json(t.values);
    terms.push_back(e);
  }
  json tn = json::array(), tq = json::array(), recs = json::array();
  for (auto [n, e] : r.trace_n) tn.push_back({{"N", n}, {"error", e}});
  for (std::size_t i = 0; i < r.trace_nodes.size(); ++i)
    tq.push_back({{"nodes_per_panel", r.trace_nodes[i].first},
                  {"error", r.trace_nodes[i].second},
                  {"max_change", i ? json(r.trace_change[i - 1]) : json(nullptr)}});
  for (const auto& s : r.records) recs.push_back(to_json(s));
  return {{"h", r.h},
          {"n_max", r.n_max},
          {"N_h", r.N_h},
          {"route", r.route == Route::semicircle ? "semicircle" : "real_axis"},
          {"nodes_per_panel", r.nodes_per_panel},
          {"rel_error", r.rel_error},
          {"f_norm", r.f_norm},
          {"x", r.x},
          {"w", r.w},
          {"f", to_json(r.f)},
          {"frec", to_json(r.frec)},
          {"terms", terms},
          {"trace_n", tn},
          {"trace_nodes", tq},
          {"exceptional", r.exceptional},
          {"center_records", recs},
          {"unconverged", r.unconverged},
          {"failed", r.failed}};
}

inline ExpansionReport report_from_json(const json& j) {
  ExpansionReport r;
  r.h = j.at("h");
  r.n_max = j.at("n_max");
  r.N_h = j.at("N_h");
  r.route = j.at("route") == "semicircle" ? Route::semicircle : Route::real_axis;
  r.nodes_per_panel = j.at("nodes_per_panel");
  r.rel_error = j.at("rel_error");
  r.f_norm = j.at("f_norm");
  r.x = j.at("x").get<std::vector<double>>();
  r.w = j.at("w").get<std::vector<double>>();
  r.f = vec2s_from_json(j.at("f"));
  r.frec = vec2s_from_json(j.at("frec"));
  for (const auto& e : j.at("terms")) {
    TermIntegral t;
    t.sum = sum_from_string(e.at("sum"));
    t.piece = piece_from_string(e.at("piece"));
    for (const auto& l : e.at("labels")) t.labels.push_back(label_from_json(l));
    t.level = e.at("level");
    t.change = number_from(e.at("change"));
    t.failed = e.at("failed");
    t.error = e.at("error");
    if (e.contains("values")) t.values = vec2s_from_json(e.at("values"));
    r.terms.push_back(std::move(t));
  }
  for (const auto& e : j.at("trace_n")) r.trace_n.emplace_back(e.at("N"), e.at("error"));
  for (const auto& e : j.at("trace_nodes")) {
    r.trace_nodes.emplace_back(e.at("nodes_per_panel"), e.at("error"));
    if (!e.at("max_change").is_null()) r.trace_change.push_back(e.at("max_change"));
  }
  r.exceptional = j.at("exceptional").get<std::vector<double>>();
  for (const auto& e : j.at("center_records")) r.records.push_back(singularity_from_json(e));
  r.unconverged = j.at("unconverged").get<std::vector<std::string>>();
  r.failed = j.at("failed").get<std::vector<std::string>>();
  return r;
}

// ---- argument strings ----------------------------------------------------

inline std::vector<double> split_numbers(const std::string& s, char sep, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("cannot parse " + what + " '" + s + "'");
    }
  }
  return out;
}

struct Range {
  double a = 0, b = 0;
  int count = 0;
  double im = 0;
};

/// "a:b:n" or "a:b:n:im" (imaginary offset for complex grids).
inline Range parse_range(const std::string& s, bool allow_im = false) {
  auto v = split_numbers(s, ':', "grid");
  if (v.size() != 3 && !(allow_im && v.size() == 4))
    throw ValidationError("grid '" + s + "' must look like a:b:n" + (allow_im ? "[:im]" : ""));
  if (v[2] < 1 || v[2] != std::floor(v[2])) throw ValidationError("grid count must be a positive integer");
  if (v[2] > 1 && !(v[1] > v[0])) throw ValidationError("grid needs a < b");
  return {v[0], v[1], static_cast<int>(v[2]), v.size() == 4 ? v[3] : 0.0};
}

inline std::vector<double> range_points(const Range& r) {
  std::vector<double> x;
  for (int i = 0; i < r.count; ++i)
    x.push_back(r.count == 1 ? r.a : r.a + (r.b - r.a) * i / (r.count - 1));
  return x;
}

/// "re" or "re,im".
inline cplx parse_complex(const std::string& s) {
  auto v = split_numbers(s, ',', "complex number");
  if (v.empty() || v.size() > 2) throw ValidationError("complex number '" + s + "' must be re or re,im");
  return {v[0], v.size() == 2 ? v[1] : 0.0};
}

inline Window parse_window(const std::string& s) {
  auto v = split_numbers(s, ':', "window");
  if (v.size() != 4 || !(v[1] > v[0]) || !(v[3] > v[2]))
    throw ValidationError("window '" + s + "' must look like re0:re1:im0:im1 with re0 < re1, im0 < im1");
  return {v[0], v[1], v[2], v[3]};
}

// ---- files ---------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json_file(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Writes through a temporary file in the same directory, then renames.
inline void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into '" + path + "'");
  }
}

/// Error document emitted on failure.
inline json error_json(const std::string& kind, const std::string& message, int exit_code) {
  return {{"schema_version", kSchemaVersion},
          {"status", "error"},
          {"error", {{"kind", kind}, {"message", message}, {"exit_code", exit_code}}}};
}

}  // namespace diracspec::io
