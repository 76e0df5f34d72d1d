// Command-line front end. Settings are resolved as built-in defaults, then
// DIRACSPEC_* environment variables (tolerances), then the JSON config file,
// then command-line flags.

#include "diracspec/bloch.hpp"
#include "diracspec/eigensystem.hpp"
#include "diracspec/expansion.hpp"
#include "diracspec/fundsol.hpp"
#include "diracspec/io.hpp"
#include "diracspec/parallel.hpp"
#include "diracspec/singularities.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

using namespace diracspec;
using io::json;

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumeric = 3, kIo = 4 };

struct Common {
  std::string config_path, output, format;
  std::optional<std::string> fixture;
  std::optional<double> scale, integrator_tol, root_tol, quad_tol;
  std::optional<unsigned> workers;
};

struct Settings {
  json cfg = json::object();
  PotentialSpec spec = PotentialSpec::zero();
  Tolerances tol;
  unsigned workers = 1;
  std::string output, format;
};

json section(const Settings& s, const char* name) {
  return s.cfg.contains(name) ? s.cfg.at(name) : json::object();
}

template <class T>
T pick(const std::optional<T>& flag, const json& sec, const char* key, T fallback) {
  if (flag) return *flag;
  if (sec.contains(key)) return sec.at(key).get<T>();
  return fallback;
}

Settings resolve(const Common& c) {
  Settings s;
  if (!c.config_path.empty()) s.cfg = io::read_json_file(c.config_path);
  if (!s.cfg.is_object()) throw ValidationError("config must be a JSON object");
  if (s.cfg.contains("schema_version") && s.cfg.at("schema_version") != io::kSchemaVersion)
    throw ValidationError("unsupported config schema_version");
  json pot = s.cfg.value("potential", json{{"fixture", "zero"}});
  if (c.fixture) pot = json{{"fixture", *c.fixture}};
  if (c.scale) pot["scale"] = *c.scale;
  s.spec = io::potential_from_json(pot);
  s.tol = Tolerances::from_environment();
  if (s.cfg.contains("tolerances")) s.tol = io::tolerances_from_json(s.cfg.at("tolerances"), s.tol);
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw ValidationError(std::string(name) + " must be positive");
    return v;
  };
  if (c.integrator_tol) s.tol.integrator_abs = s.tol.integrator_rel = positive(*c.integrator_tol, "--integrator-tol");
  if (c.root_tol) s.tol.root_residual = positive(*c.root_tol, "--root-tol");
  if (c.quad_tol) s.tol.projection_quad = positive(*c.quad_tol, "--quad-tol");
  json out = section(s, "output");
  s.output = !c.output.empty() ? c.output : out.value("path", std::string());
  s.format = !c.format.empty() ? c.format : out.value("format", std::string());
  s.workers = pick(c.workers, s.cfg, "workers", 1u);
  if (s.workers == 0) s.workers = default_workers();
  return s;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    std::cout.flush();
  } else {
    io::atomic_write(path, text);
  }
}

json envelope(const Settings& s, const std::string& command) {
  return {{"schema_version", io::kSchemaVersion},
          {"status", "ok"},
          {"command", command},
          {"potential", io::to_json(s.spec)},
          {"tolerances", io::to_json(s.tol)}};
}

std::string csv_preamble(const Settings& s, const std::string& command) {
  return "# schema_version=" + std::to_string(io::kSchemaVersion) + "\n# command=" + command +
         "\n# potential=" + io::to_json(s.spec).dump() + "\n# tolerances=" + io::to_json(s.tol).dump() +
         "\n";
}

std::string num(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

// ---- subcommands ---------------------------------------------------------

struct DiscriminantArgs {
  std::optional<std::string> grid;
};

int run_discriminant(const Settings& s, const DiscriminantArgs& a) {
  const auto range = io::parse_range(pick(a.grid, section(s, "discriminant"), "lambda_grid",
                                          std::string("-10:10:201")),
                                     true);
  auto xs = io::range_points(range);
  auto rows = parallel_map<DiscriminantSample>(xs.size(), s.workers, [&](std::size_t i) {
    return discriminant(s.spec, cplx(xs[i], range.im), s.tol);
  });
  if (s.format == "json") {
    json doc = envelope(s, "discriminant");
    doc["rows"] = json::array();
    for (const auto& r : rows)
      doc["rows"].push_back({{"lambda", io::to_json(r.lambda)},
                             {"F", io::to_json(r.F)},
                             {"F_prime", io::to_json(r.F_prime)},
                             {"wronskian_residual", r.wronskian_residual}});
    emit(s.output, doc.dump(2) + "\n");
    return kOk;
  }
  std::string out = csv_preamble(s, "discriminant") +
                    "lambda_re,lambda_im,F_re,F_im,Fp_re,Fp_im,wronskian_residual\n";
  for (const auto& r : rows)
    out += num(r.lambda.real()) + "," + num(r.lambda.imag()) + "," + num(r.F.real()) + "," +
           num(r.F.imag()) + "," + num(r.F_prime.real()) + "," + num(r.F_prime.imag()) + "," +
           num(r.wronskian_residual) + "\n";
  emit(s.output, out);
  return kOk;
}

struct BandsArgs {
  std::optional<std::string> grid;
  std::optional<int> n_max;
  std::optional<double> h;
  std::optional<double> t_im;
};

int run_bands(const Settings& s, const BandsArgs& a) {
  const json sec = section(s, "bands");
  const auto range = io::parse_range(pick(a.grid, sec, "t_grid", std::string("0:1:11")));
  const double t_im = pick(a.t_im, sec, "t_im", 0.0);
  const int n_max = pick(a.n_max, sec, "n_max", 5);
  if (n_max < 0) throw ValidationError("--n-max must be nonnegative");
  std::optional<AsymptoticRegime> regime;
  if (a.h || sec.contains("h")) {
    const double h = pick(a.h, sec, "h", 0.05);
    QuasimomentumDomain dom(h);
    regime = calibrate_regime(s.spec, h, s.tol);
  }
  auto ts = io::range_points(range);
  auto rows = parallel_map<std::vector<BlochEigenvalue>>(ts.size(), s.workers, [&](std::size_t i) {
    SolveOptions o;
    o.tol = s.tol;
    o.regime = regime ? &*regime : nullptr;
    const cplx t(ts[i], t_im);
    o.degenerate_mode = distance_to_integers(t) < s.tol.integer_guard;
    return spectrum_window(s.spec, t, n_max, o);
  });
  if (s.format == "json") {
    json doc = envelope(s, "bands");
    if (regime) doc["N_h"] = regime->N;
    doc["rows"] = json::array();
    for (const auto& row : rows)
      for (const auto& e : row) doc["rows"].push_back(io::to_json(e));
    emit(s.output, doc.dump(2) + "\n");
    return kOk;
  }
  std::string out = csv_preamble(s, "bands");
  if (regime) out += "# N_h=" + std::to_string(regime->N) + "\n";
  out += "t_re,t_im,n,j,lambda_re,lambda_im,residual,multiplicity\n";
  for (const auto& row : rows)
    for (const auto& e : row)
      out += num(e.t.real()) + "," + num(e.t.imag()) + "," + std::to_string(e.n) + "," +
             std::to_string(e.j) + "," + num(e.lambda.real()) + "," + num(e.lambda.imag()) + "," +
             num(e.residual) + "," + std::to_string(e.multiplicity) + "\n";
  emit(s.output, out);
  return kOk;
}

struct ModesArgs {
  std::optional<std::string> t;
  std::optional<int> n, j, samples;
};

int run_modes(const Settings& s, const ModesArgs& a) {
  const json sec = section(s, "modes");
  const cplx t = io::parse_complex(pick(a.t, sec, "t", std::string("0.3")));
  const int n = pick(a.n, sec, "n", 0), j = pick(a.j, sec, "j", 1);
  const int m = pick(a.samples, sec, "samples", 65);
  if (j != 1 && j != 2) throw ValidationError("--j must be 1 or 2");
  if (m < 2) throw ValidationError("--samples must be at least 2");
  EigenTriple tr = normalized_pair(s.spec, t, n, j, s.tol);
  std::vector<double> xs;
  for (int i = 0; i < m; ++i) xs.push_back(kPi * i / (m - 1));
  auto psi = evaluate_triple(s.spec, tr, xs, false, s.tol);
  auto star = evaluate_triple(s.spec, tr, xs, true, s.tol);
  const cplx e = std::exp(kI * kPi * t), es = std::exp(kI * kPi * std::conj(t));
  json doc = envelope(s, "modes");
  doc["eigenvalue"] = io::to_json(tr.eig);
  doc["alpha"] = io::to_json(tr.alpha);
  doc["x"] = xs;
  doc["psi"] = io::to_json(psi);
  doc["psi_star"] = io::to_json(star);
  doc["diagnostics"] = {
      {"eigenvalue_residual", tr.eig.residual},
      {"alpha_route_difference", std::abs(tr.alpha - tr.alpha_quadrature)},
      {"psi_norm", norm(tr.grid, tr.psi)},
      {"psi_boundary_residual", (psi.back() - e * psi.front()).norm()},
      {"psi_star_boundary_residual", (star.back() - es * star.front()).norm()},
      {"phase_reference", io::to_json(tr.phase_reference)}};
  emit(s.output, doc.dump(2) + "\n");
  return kOk;
}

struct SingularitiesArgs {
  std::optional<std::string> window;
  bool no_exponent = false;
};

int run_singularities(const Settings& s, const SingularitiesArgs& a) {
  const json sec = section(s, "singularities");
  const Window w = io::parse_window(pick(a.window, sec, "window", std::string("-4:4:-1:1")));
  const bool probe = !a.no_exponent && sec.value("exponent", true);
  auto recs = singularities_in_window(s.spec, w, s.tol, probe);
  json doc = envelope(s, "singularities");
  doc["window"] = {w.re0, w.re1, w.im0, w.im1};
  doc["records"] = json::array();
  for (const auto& r : recs) doc["records"].push_back(io::to_json(r));
  emit(s.output, doc.dump(2) + "\n");
  return kOk;
}

struct ExpandArgs {
  std::optional<double> h;
  std::optional<int> n_max, nodes, levels;
  std::optional<std::string> grid, function, support, route, csv;
  bool term_values = false;
};

int run_expand(const Settings& s, const ExpandArgs& a) {
  const json sec = section(s, "expand");
  const double h = pick(a.h, sec, "h", 0.05);
  QuasimomentumDomain dom(h);
  const int n_max = pick(a.n_max, sec, "n_max", 32);
  json fj = sec.value("function", json{{"kind", "raised_cosine"}, {"support", {0.5, 2.5}}});
  if (a.function) fj["kind"] = *a.function;
  if (a.support) {
    auto v = io::split_numbers(*a.support, ':', "support");
    if (v.size() != 2) throw ValidationError("--support must look like a:b");
    fj["support"] = v;
  }
  const TestFunction f = io::test_function_from_json(fj);
  EvalGrid grid;
  const std::string gs = pick(a.grid, sec, "grid", std::string());
  if (gs.empty()) {
    grid = default_eval_grid(s.spec, 0.0, 3 * kPi, n_max);
  } else {
    auto r = io::parse_range(gs);
    grid = EvalGrid::uniform(r.a, r.b, r.count);
  }
  ExpansionOptions o;
  o.tol = s.tol;
  o.term_tol = s.tol.term_quad;
  o.workers = s.workers;
  o.nodes_per_panel = pick(a.nodes, sec, "nodes_per_panel", 1);
  o.max_levels = pick(a.levels, sec, "max_levels", 5);
  const std::string route = pick(a.route, sec, "route", std::string("real_axis"));
  if (route == "semicircle") o.route = Route::semicircle;
  else if (route != "real_axis") throw ValidationError("--route must be real_axis or semicircle");
  if (o.nodes_per_panel < 1 || o.max_levels < 0) throw ValidationError("bad node settings");

  ExpansionReport rep = expand_reconstruct(s.spec, f, h, n_max, grid, o);
  json doc = envelope(s, "expand");
  doc["function"] = io::to_json(f);
  doc["report"] = io::to_json(rep, a.term_values || sec.value("term_values", false));
  std::string csv = "x,f1_re,f1_im,f2_re,f2_im,frec1_re,frec1_im,frec2_re,frec2_im\n";
  for (std::size_t i = 0; i < rep.x.size(); ++i)
    csv += num(rep.x[i]) + "," + num(rep.f[i](0).real()) + "," + num(rep.f[i](0).imag()) + "," +
           num(rep.f[i](1).real()) + "," + num(rep.f[i](1).imag()) + "," +
           num(rep.frec[i](0).real()) + "," + num(rep.frec[i](0).imag()) + "," +
           num(rep.frec[i](1).real()) + "," + num(rep.frec[i](1).imag()) + "\n";
  std::string csv_path = pick(a.csv, sec, "csv", std::string());
  if (csv_path.empty() && !s.output.empty()) {
    std::filesystem::path p(s.output);
    csv_path = p.replace_extension(".csv").string();
  }
  if (!csv_path.empty()) io::atomic_write(csv_path, csv_preamble(s, "expand") + csv);
  emit(s.output, doc.dump(2) + "\n");
  return rep.failed.empty() ? kOk : kNumeric;
}

// Zero-potential oracle checks: every quantity has a closed form.
int run_selftest(const Settings& base) {
  Settings s = base;
  s.spec = PotentialSpec::zero();
  json checks = json::array();
  bool all = true;
  auto check = [&](const std::string& name, double value, double limit) {
    const bool ok = value < limit;
    all = all && ok;
    checks.push_back({{"name", name}, {"value", value}, {"limit", limit}, {"pass", ok}});
  };
  double worst = 0, wr = 0;
  for (double re = -6; re <= 6; re += 0.75)
    for (double im : {-0.4, 0.0, 0.4}) {
      auto d = discriminant(s.spec, cplx(re, im), s.tol);
      worst = std::max(worst, std::abs(d.F - 2.0 * std::cos(kPi * cplx(re, im))));
      wr = std::max(wr, d.wronskian_residual);
    }
  check("discriminant equals 2cos(pi lambda)", worst, 1e-9);
  check("wronskian residual", wr, 1e-10);

  worst = 0;
  for (double t : {0.2, 0.55}) {
    SolveOptions o;
    o.tol = s.tol;
    for (const auto& e : spectrum_window(s.spec, t, 6, o))
      worst = std::max(worst, std::abs(e.lambda - center_of(e.label(), t)));
  }
  check("eigenvalues at 2n +- t", worst, 1e-9);

  auto tr = normalized_pair(s.spec, 0.3, 1, 2, s.tol);
  check("pairing alpha = 1", std::abs(tr.alpha - 1.0), 1e-9);
  worst = 0;
  for (int n = -2; n <= 2; ++n)
    for (int j : {1, 2}) {
      if (n == 1 && j == 2) continue;
      auto other = normalized_pair(s.spec, 0.3, n, j, s.tol);
      const auto star = evaluate_triple(s.spec, other, tr.grid.x(), true, s.tol);
      worst = std::max(worst, std::abs(inner(tr.grid, tr.psi, star)));
    }
  check("biorthogonality", worst, 1e-9);

  ExpansionOptions o;
  o.tol = s.tol;
  o.workers = s.workers;
  auto rep = expand_reconstruct(s.spec, TestFunction::raised_cosine(0.5, 2.5), 0.05, 4,
                                default_eval_grid(s.spec, 0.0, 3.0, 4), o);
  check("reconstruction error at N = 4", rep.rel_error, 5e-2);

  json doc = envelope(s, "selftest");
  doc["checks"] = checks;
  doc["passed"] = all;
  emit(s.output, doc.dump(2) + "\n");
  return all ? kOk : kNumeric;
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cout << io::error_json(kind, message, code).dump(2) << "\n";
  std::cerr << "error: " << message << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bloch spectrum, spectral singularities and spectral expansion of periodic Dirac operators"};
  app.set_help_flag("--help", "print help");
  app.require_subcommand(1);
  Common c;
  app.add_option("--config", c.config_path, "JSON run configuration");
  app.add_option("-o,--output", c.output, "output file (default stdout); written atomically");
  app.add_option("--format", c.format, "csv or json (discriminant, bands)")
      ->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--fixture", c.fixture, "built-in potential: zero, constant or piecewise");
  app.add_option("--scale", c.scale, "multiply the potential by this factor");
  app.add_option("--integrator-tol", c.integrator_tol, "ODE local error tolerance");
  app.add_option("--root-tol", c.root_tol, "eigenvalue residual tolerance");
  app.add_option("--quad-tol", c.quad_tol, "contour quadrature tolerance");
  app.add_option("--workers", c.workers, "worker threads (0 = hardware)");

  DiscriminantArgs da;
  auto* disc = app.add_subcommand("discriminant", "Hill discriminant and F' on a lambda grid");
  disc->add_option("--lambda-grid", da.grid, "re0:re1:n[:im]");

  BandsArgs ba;
  auto* bands = app.add_subcommand("bands", "labeled Bloch eigenvalues on a t grid");
  bands->add_option("--t-grid", ba.grid, "t0:t1:n");
  bands->add_option("--t-im", ba.t_im, "imaginary part of t");
  bands->add_option("--n-max", ba.n_max, "labels |n| <= N");
  bands->add_option("--h", ba.h, "contour parameter in (0, 1/10); enables the asymptotic radii");

  ModesArgs ma;
  auto* modes = app.add_subcommand("modes", "normalized eigenfunction pair and pairing");
  modes->add_option("--t", ma.t, "re[,im]");
  modes->add_option("--n", ma.n, "label n");
  modes->add_option("--j", ma.j, "label j (1 or 2)");
  modes->add_option("--samples", ma.samples, "uniform samples on [0, pi]");

  SingularitiesArgs sa;
  auto* sing = app.add_subcommand("singularities", "critical points and their classification");
  sing->add_option("--window", sa.window, "re0:re1:im0:im1");
  sing->add_flag("--no-exponent", sa.no_exponent, "skip exponent probes");

  ExpandArgs ea;
  auto* expand = app.add_subcommand("expand", "spectral expansion reconstruction of a test function");
  expand->add_option("--h", ea.h, "contour parameter in (0, 1/10)");
  expand->add_option("--n-max", ea.n_max, "truncation N >= N(h)");
  expand->add_option("--grid", ea.grid, "uniform evaluation grid a:b:m (default Gauss grid on [0, 3 pi])");
  expand->add_option("--function", ea.function, "raised_cosine, gaussian_bump or hat");
  expand->add_option("--support", ea.support, "a:b");
  expand->add_option("--route", ea.route, "real_axis or semicircle");
  expand->add_option("--nodes", ea.nodes, "Gauss nodes per panel at the first level");
  expand->add_option("--levels", ea.levels, "maximum node doublings");
  expand->add_option("--csv", ea.csv, "sample CSV path (default: output with .csv)");
  expand->add_flag("--term-values", ea.term_values, "include per-term samples in the report");

  auto* self = app.add_subcommand("selftest", "zero-potential oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", e.what(), kConfig);
  }

  try {
    Settings s = resolve(c);
    if (*disc) return run_discriminant(s, da);
    if (*bands) return run_bands(s, ba);
    if (*modes) return run_modes(s, ma);
    if (*sing) return run_singularities(s, sa);
    if (*expand) return run_expand(s, ea);
    if (*self) return run_selftest(s);
  } catch (const IoError& e) {
    return fail("io", e.what(), kIo);
  } catch (const ValidationError& e) {
    return fail("validation", e.what(), kConfig);
  } catch (const Error& e) {
    return fail(to_string(e.kind()), e.what(), kNumeric);
  } catch (const json::exception& e) {
    return fail("config", e.what(), kConfig);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kNumeric);
  }
  return kOk;
}
