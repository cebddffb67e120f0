// nctsigma: build, verify, relax, and scan sigma-model instanton projections
// on the noncommutative torus.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "nct/errors.hpp"
#include "nct/flow.hpp"
#include "nct/heisenberg.hpp"
#include "nct/instanton.hpp"
#include "nct/rng.hpp"
#include "nct/serialize.hpp"
#include "nct/sigma_model.hpp"
#include "nct/twisted_series.hpp"

namespace fs = std::filesystem;
using nct::cplx;
using nct::ojson;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct RunConfig {
  std::string mode;
  std::optional<int> r, q;
  std::optional<double> alpha;
  std::optional<double> theta;
  double tau_re = 0.0, tau_im = 1.0;
  double lambda_re = 0.0, lambda_im = 0.0;
  std::vector<cplx> amplitudes;
  int window = 12;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  std::string input_file;

  // flow
  int max_steps = 400;
  double step = 2e-3;
  double kick = 1e-2;
  double stop_grad_tol = 1e-5;

  // scan
  int grid = 0;
  std::vector<nct::ScanSample> samples;

  // selftest
  int hermitian_variant = 0;

  // tolerances
  double idem_tol = 1e-8;
  double charge_tol = 1e-4;
  double ls_rel_tol = 1e-5;
  int battery_size = 6;
  std::uint64_t battery_seed = 0x5eedbea7ULL;
};

cplx get_cplx(const ojson& j) {
  if (!j.is_array() || j.size() != 2) {
    throw nct::ParameterError("expected [re, im] pair in config");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  ojson j;
  try {
    j = ojson::parse(nct::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw nct::ParameterError(std::string("config parse error: ") + e.what());
  }
  if (j.contains("r")) cfg.r = j["r"].get<int>();
  if (j.contains("q")) cfg.q = j["q"].get<int>();
  if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
  if (j.contains("theta")) cfg.theta = j["theta"].get<double>();
  if (j.contains("tau")) {
    const cplx t = get_cplx(j["tau"]);
    cfg.tau_re = t.real();
    cfg.tau_im = t.imag();
  }
  if (j.contains("lambda")) {
    const cplx l = get_cplx(j["lambda"]);
    cfg.lambda_re = l.real();
    cfg.lambda_im = l.imag();
  }
  if (j.contains("amplitudes")) {
    cfg.amplitudes.clear();
    for (const auto& a : j["amplitudes"]) cfg.amplitudes.push_back(get_cplx(a));
  }
  if (j.contains("window")) cfg.window = j["window"].get<int>();
  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("input")) cfg.input_file = j["input"].get<std::string>();
  if (j.contains("max_steps")) cfg.max_steps = j["max_steps"].get<int>();
  if (j.contains("step")) cfg.step = j["step"].get<double>();
  if (j.contains("kick")) cfg.kick = j["kick"].get<double>();
  if (j.contains("stop_grad_tol"))
    cfg.stop_grad_tol = j["stop_grad_tol"].get<double>();
  if (j.contains("grid")) cfg.grid = j["grid"].get<int>();
  if (j.contains("hermitian_variant"))
    cfg.hermitian_variant = j["hermitian_variant"].get<int>();
  if (j.contains("idem_tol")) cfg.idem_tol = j["idem_tol"].get<double>();
  if (j.contains("charge_tol")) cfg.charge_tol = j["charge_tol"].get<double>();
  if (j.contains("ls_rel_tol")) cfg.ls_rel_tol = j["ls_rel_tol"].get<double>();
  if (j.contains("battery_size"))
    cfg.battery_size = j["battery_size"].get<int>();
  if (j.contains("battery_seed"))
    cfg.battery_seed = j["battery_seed"].get<std::uint64_t>();
  if (j.contains("samples")) {
    for (const auto& s : j["samples"]) {
      nct::ScanSample smp;
      smp.lambda = get_cplx(s.at("lambda"));
      if (s.contains("amplitudes")) {
        for (const auto& a : s["amplitudes"]) {
          smp.amplitudes.push_back(get_cplx(a));
        }
      }
      if (s.contains("equivalent_to")) {
        smp.equivalent_to = s["equivalent_to"].get<int>();
      }
      cfg.samples.push_back(std::move(smp));
    }
  }
}

nct::ModuleGeometry resolve_geometry(const RunConfig& cfg) {
  const bool has_rqa = cfg.r.has_value() || cfg.q.has_value() ||
                       cfg.alpha.has_value();
  if (has_rqa && cfg.theta.has_value()) {
    throw nct::ParameterError(
        "give either (r, q, alpha) or theta, not both");
  }
  if (has_rqa) {
    if (!(cfg.r && cfg.q && cfg.alpha)) {
      throw nct::ParameterError("(r, q, alpha) must be given together");
    }
    return nct::ModuleGeometry::create(*cfg.r, *cfg.q, *cfg.alpha);
  }
  if (cfg.theta.has_value()) {
    if (*cfg.theta == 0.0) {
      throw nct::ParameterError("direct theta must be nonzero");
    }
    // theta realized as the Morita dual of (r, q) = (0, 1), alpha = -1/theta.
    return nct::ModuleGeometry::create(0, 1, -1.0 / *cfg.theta);
  }
  throw nct::ParameterError("geometry missing: give (r, q, alpha) or theta");
}

void validate_common(const RunConfig& cfg) {
  if (!(cfg.tau_im > 0.0)) throw nct::ParameterError("Im tau must be > 0");
  if (cfg.window < 4) throw nct::ParameterError("window M must be >= 4");
}

ojson config_echo(const RunConfig& cfg, const nct::ModuleGeometry* geom) {
  ojson j;
  j["mode"] = cfg.mode;
  if (geom) j["geometry"] = nct::geometry_to_json(*geom);
  if (cfg.theta) j["theta"] = *cfg.theta;
  j["tau"] = ojson::array({cfg.tau_re, cfg.tau_im});
  j["lambda"] = ojson::array({cfg.lambda_re, cfg.lambda_im});
  ojson amps = ojson::array();
  for (cplx a : cfg.amplitudes) {
    amps.push_back(ojson::array({a.real(), a.imag()}));
  }
  j["amplitudes"] = std::move(amps);
  j["window"] = cfg.window;
  j["seed"] = cfg.seed;
  j["max_steps"] = cfg.max_steps;
  j["step"] = cfg.step;
  j["kick"] = cfg.kick;
  j["stop_grad_tol"] = cfg.stop_grad_tol;
  j["grid"] = cfg.grid;
  j["hermitian_variant"] = cfg.hermitian_variant;
  j["idem_tol"] = cfg.idem_tol;
  j["charge_tol"] = cfg.charge_tol;
  j["ls_rel_tol"] = cfg.ls_rel_tol;
  j["battery_size"] = cfg.battery_size;
  j["battery_seed"] = cfg.battery_seed;
  return j;
}

ojson conventions_json(const nct::ModuleGeometry* geom) {
  ojson j;
  j["duality_branch"] = "self-dual";  // (dbar p) p = 0 for Im tau, eps > 0
  j["charge_sign"] = nct::kInstantonChargeSign;
  if (geom) j["bezout"] = ojson::array({geom->a, geom->b});
  j["hermitian_ordering_variant"] = static_cast<int>(nct::kCanonicalOrdering);
  return j;
}

/// Writes <out>/<name> atomically and records its hash.
void emit(const fs::path& out_dir, const std::string& name,
          std::string_view content, ojson& files) {
  nct::atomic_write(out_dir / name, content);
  files[name] = nct::sha256_hex(content);
}

void write_manifest(const fs::path& out_dir, const ojson& echo,
                    const nct::ModuleGeometry* geom, const ojson& files,
                    const ojson& checks) {
  ojson m;
  m["version"] = nct::kLibraryVersion;
  m["config"] = echo;
  m["conventions"] = conventions_json(geom);
  m["checks"] = checks;
  m["files"] = files;
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  m["wall_clock_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  nct::atomic_write(out_dir / "manifest.json", m.dump(2) + "\n");
}

/// Gate a report against the configured tolerances.
ojson gate_report(const nct::ProjectionReport& r, const RunConfig& cfg,
                  bool& ok) {
  ojson checks;
  auto put = [&](const char* name, bool pass) {
    checks[name] = pass;
    ok = ok && pass;
  };
  put("idempotency", r.idempotency_residual <= cfg.idem_tol);
  put("hermiticity", r.hermiticity_residual <= cfg.idem_tol);
  put("charge_integrality",
      std::abs(r.charge_raw - r.charge_rounded) <= cfg.charge_tol);
  put("bp_bound", r.bp_gap >= -1e-8);
  return checks;
}

int cmd_build(const RunConfig& cfg) {
  validate_common(cfg);
  const nct::ModuleGeometry geom = resolve_geometry(cfg);
  nct::InstantonConfig ic;
  ic.geometry = geom;
  ic.tau = {cfg.tau_re, cfg.tau_im};
  ic.lambda = {cfg.lambda_re, cfg.lambda_im};
  ic.amplitudes = cfg.amplitudes;
  ic.half_width = cfg.window;
  ic.battery_size = cfg.battery_size;
  ic.battery_seed = cfg.battery_seed;
  ic.ls_rel_tol = cfg.ls_rel_tol;
  const nct::BuildResult res = nct::build_projection(ic);

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  ojson files;
  emit(out_dir, "projection.json",
       nct::series_to_json(res.projection).dump(2) + "\n", files);
  ojson rep = nct::report_to_json(res.report);
  rep["gram_lower_bound"] = res.gram_lower_bound;
  rep["gram_tail"] = res.gram_tail;
  rep["ls_rel_residual"] = res.ls_rel_residual;
  rep["pre_purify_idempotency"] = res.pre_purify_idempotency;
  rep["post_purify_idempotency"] = res.post_purify_idempotency;
  emit(out_dir, "report.json", rep.dump(2) + "\n", files);

  bool ok = true;
  const ojson checks = gate_report(res.report, cfg, ok);
  write_manifest(out_dir, config_echo(cfg, &geom), &geom, files, checks);
  std::cout << rep.dump(2) << std::endl;
  return ok ? kExitOk : kExitNumeric;
}

int cmd_verify(const RunConfig& cfg) {
  if (cfg.input_file.empty()) {
    throw nct::ParameterError("verify requires --in <projection.json>");
  }
  if (!(cfg.tau_im > 0.0)) throw nct::ParameterError("Im tau must be > 0");
  nct::TwistedSeries p = [&] {
    try {
      return nct::series_from_json(ojson::parse(nct::read_file(cfg.input_file)));
    } catch (const nlohmann::json::exception& e) {
      throw nct::ParameterError(std::string("input parse error: ") + e.what());
    }
  }();
  const nct::ConformalStructure cs({cfg.tau_re, cfg.tau_im});
  const nct::ProjectionReport r = nct::make_report(p, cs);

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  ojson files;
  const ojson rep = nct::report_to_json(r);
  emit(out_dir, "report.json", rep.dump(2) + "\n", files);
  bool ok = true;
  const ojson checks = gate_report(r, cfg, ok);
  write_manifest(out_dir, config_echo(cfg, nullptr), nullptr, files, checks);
  std::cout << rep.dump(2) << std::endl;
  return ok ? kExitOk : kExitNumeric;
}

int cmd_flow(const RunConfig& cfg) {
  validate_common(cfg);
  const nct::ModuleGeometry geom = resolve_geometry(cfg);
  nct::InstantonConfig ic;
  ic.geometry = geom;
  ic.tau = {cfg.tau_re, cfg.tau_im};
  ic.lambda = {cfg.lambda_re, cfg.lambda_im};
  ic.amplitudes = cfg.amplitudes;
  ic.half_width = cfg.window;
  ic.battery_size = cfg.battery_size;
  ic.battery_seed = cfg.battery_seed;
  ic.ls_rel_tol = cfg.ls_rel_tol;
  const nct::BuildResult res = nct::build_projection(ic);
  const nct::ConformalStructure cs(ic.tau);

  const nct::TwistedSeries p0 =
      nct::tangent_kick(res.projection, cfg.kick, 2, cfg.seed);
  nct::FlowConfig fc;
  fc.step = cfg.step;
  fc.max_steps = cfg.max_steps;
  fc.stop_grad_tol = cfg.stop_grad_tol;
  const nct::FlowResult flow = nct::relax(p0, cs, fc);
  const nct::ProjectionReport final_report = nct::make_report(flow.projection, cs);

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  ojson files;
  emit(out_dir, "trace.csv", nct::flow_trace_to_csv(flow.trace), files);
  ojson summary = nct::flow_trace_summary(flow.trace);
  summary["seed"] = cfg.seed;
  summary["kick"] = cfg.kick;
  summary["final_report"] = nct::report_to_json(final_report);
  emit(out_dir, "summary.json", summary.dump(2) + "\n", files);
  emit(out_dir, "projection.json",
       nct::series_to_json(flow.projection).dump(2) + "\n", files);

  // Success means the relaxation behaved like a gradient flow and landed on
  // a projection at the sector floor; hitting the step budget first is
  // reported but not an error.
  const auto& recs = flow.trace.records;
  double charge_drift = 0.0;
  double worst_rise = 0.0;
  double prev_action = recs.empty() ? 0.0 : recs.front().action;
  for (const auto& r : recs) {
    if (!r.accepted) continue;
    charge_drift =
        std::max(charge_drift, std::abs(r.charge_raw - recs.front().charge_raw));
    worst_rise = std::max(worst_rise, r.action - prev_action);
    prev_action = r.action;
  }
  ojson checks;
  checks["ran"] = cfg.max_steps > 0;
  checks["monotone_accepted"] = worst_rise <= 1e-9;
  checks["charge_plateau"] = charge_drift <= 1e-4;
  checks["bp_gap"] =
      final_report.bp_gap <= 1e-2 && final_report.bp_gap >= -1e-8;
  checks["idempotency"] = final_report.idempotency_residual <= 1e-6;
  checks["hermiticity"] = final_report.hermiticity_residual <= 1e-10;
  bool ok = true;
  for (auto it = checks.begin(); it != checks.end(); ++it) {
    ok = ok && it.value().get<bool>();
  }
  checks["converged"] = flow.trace.status == nct::FlowStatus::Converged;
  write_manifest(out_dir, config_echo(cfg, &geom), &geom, files, checks);
  std::cout << summary.dump(2) << std::endl;
  return ok ? kExitOk : kExitNumeric;
}

int cmd_scan(const RunConfig& cfg) {
  validate_common(cfg);
  const nct::ModuleGeometry geom = resolve_geometry(cfg);
  nct::InstantonConfig ic;
  ic.geometry = geom;
  ic.tau = {cfg.tau_re, cfg.tau_im};
  ic.half_width = cfg.window;
  ic.battery_size = cfg.battery_size;
  ic.battery_seed = cfg.battery_seed;
  ic.ls_rel_tol = cfg.ls_rel_tol;
  const nct::ConformalStructure cs(ic.tau);

  std::vector<nct::ScanSample> samples = cfg.samples;
  if (samples.empty() && cfg.grid > 0) {
    const auto [w1, w2] = nct::moduli_lattice(cs);
    for (int i = 0; i < cfg.grid; ++i) {
      for (int j = 0; j < cfg.grid; ++j) {
        nct::ScanSample s;
        s.lambda = ((i + 0.5) / cfg.grid) * w1 + ((j + 0.5) / cfg.grid) * w2;
        samples.push_back(s);
      }
    }
    // Lattice duplicates of the first point: the equivalence assertion
    // exercises gauge invariance along both moduli generators.
    for (const nct::cplx w : {w1, w2}) {
      nct::ScanSample dup;
      dup.lambda = samples.front().lambda + w;
      dup.equivalent_to = 0;
      samples.push_back(dup);
    }
  }
  if (samples.empty()) {
    throw nct::ParameterError("scan requires samples or --grid N with N >= 1");
  }

  const std::vector<nct::ScanRow> rows = nct::moduli_scan(ic, samples);

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  ojson files;
  emit(out_dir, "scan.csv", nct::scan_to_csv(rows), files);
  emit(out_dir, "scan.json", nct::scan_to_json(rows).dump(2) + "\n", files);
  bool ok = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "projection_%03zu.json", i);
    emit(out_dir, name,
         nct::series_to_json(rows[i].projection).dump(2) + "\n", files);
    if (!rows[i].build_ok) ok = false;
    if (rows[i].distance_to_equivalent >= 0.0 &&
        rows[i].distance_to_equivalent > 1e-5) {
      ok = false;
    }
  }
  ojson checks;
  checks["all_builds_ok"] = ok;
  write_manifest(out_dir, config_echo(cfg, &geom), &geom, files, checks);
  std::cout << nct::scan_to_json(rows).dump(2) << std::endl;
  return ok ? kExitOk : kExitNumeric;
}

// ----------------------------------------------------------------------------
// selftest: the full small-size invariant battery (window 8 scale, < 60 s).

struct SelfTest {
  bool ok = true;
  void check(const std::string& name, bool pass, double value) {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << name << " (" << value
              << ")\n";
    ok = ok && pass;
  }
};

nct::TwistedSeries random_series(double theta, int hw, int support,
                                 nct::Rng& rng) {
  nct::TwistedSeries a(theta, hw);
  for (int m = -support; m <= support; ++m) {
    for (int n = -support; n <= support; ++n) {
      a.set(m, n, 0.5 * rng.cnormal());
    }
  }
  return a;
}

nct::GaussPolySection random_section(const nct::ModuleGeometry& geom,
                                     nct::Rng& rng) {
  nct::GaussPolySection s = nct::GaussPolySection::zero(geom);
  const double em = std::abs(geom.epsilon);
  for (int k = 0; k < geom.q; ++k) {
    nct::GaussPolyTerm t;
    t.alpha_exp = cplx(-(0.5 + rng.uniform()) * nct::kPi / em,
                       rng.uniform(-1.0, 1.0));
    t.beta_exp = cplx(rng.uniform(-1.5, 1.5), rng.uniform(-3.0, 3.0));
    t.poly = {rng.cnormal(), 0.3 * rng.cnormal()};
    s.add_term(k, std::move(t));
  }
  return s;
}

double series_max_diff(const nct::TwistedSeries& a, const nct::TwistedSeries& b,
                       int interior) {
  double worst = 0.0;
  for (int m = -interior; m <= interior; ++m) {
    for (int n = -interior; n <= interior; ++n) {
      worst = std::max(worst, std::abs(a.coeff(m, n) - b.coeff(m, n)));
    }
  }
  return worst;
}

int cmd_selftest(const RunConfig& cfg) {
  using namespace nct;
  SelfTest st;
  Rng rng(cfg.seed);
  const double theta_alg = 0.37;
  const auto ordering = static_cast<HermitianOrdering>(cfg.hermitian_variant);
  if (cfg.hermitian_variant < 0 || cfg.hermitian_variant > 3) {
    throw ParameterError("hermitian variant must be in 0..3");
  }

  // Algebra identities.
  {
    double assoc = 0.0, cyc = 0.0, anti = 0.0, td = 0.0;
    for (int t = 0; t < 25; ++t) {
      const TwistedSeries a = random_series(theta_alg, 8, 3, rng);
      const TwistedSeries b = random_series(theta_alg, 8, 3, rng);
      const TwistedSeries c = random_series(theta_alg, 8, 3, rng);
      assoc = std::max(assoc,
                       coeff_norm(multiply_full(multiply_full(a, b), c) -
                                  multiply_full(a, multiply_full(b, c))));
      cyc = std::max(cyc, std::abs(pair_trace(a, b) - pair_trace(b, a)));
      anti = std::max(anti, coeff_norm(adjoint(multiply_full(a, b)) -
                                       multiply_full(adjoint(b), adjoint(a))));
      td = std::max(td, std::max(std::abs(trace(derive(a, 1))),
                                 std::abs(trace(derive(a, 2)))));
    }
    st.check("algebra associativity", assoc <= 1e-10, assoc);
    st.check("algebra trace cyclicity", cyc <= 1e-10, cyc);
    st.check("algebra adjoint antimultiplicative", anti <= 1e-10, anti);
    st.check("algebra trace of derivation vanishes", td == 0.0, td);
  }

  // d dbar = Lap / 4 on monomials.
  {
    const ConformalStructure cs(cplx(0.3, 0.8));
    double worst = 0.0;
    for (int m = -3; m <= 3; ++m) {
      for (int n = -3; n <= 3; ++n) {
        const TwistedSeries u = TwistedSeries::monomial(theta_alg, 4, m, n);
        worst = std::max(
            worst, coeff_norm(4.0 * holo_derive(holo_derive(u, cs, false), cs,
                                                true) -
                              laplacian(u, cs)));
      }
    }
    st.check("holomorphic splitting of the laplacian", worst <= 1e-12, worst);
  }

  // theta mod 1: byte-identical phases for a dyadic theta.
  {
    const double th = 7.0 / 16.0;
    bool same = true;
    for (int k = -40; k <= 40; ++k) {
      if (twist_phase(th, k) != twist_phase(th + 1.0, k)) same = false;
    }
    st.check("twist phase is mod-1 in theta (dyadic)", same, same ? 0.0 : 1.0);
  }

  // Module exactness on the Boca geometry.
  const ModuleGeometry geom = ModuleGeometry::create(0, 1, -1.0 / theta_alg);
  {
    double leib = 0.0, bimod = 0.0, curv = 0.0;
    for (int t = 0; t < 12; ++t) {
      const GaussPolySection xi = random_section(geom, rng);
      TwistedSeries f(geom.alpha, 2);
      for (int m = -1; m <= 1; ++m) {
        for (int n = -1; n <= 1; ++n) f.set(m, n, 0.4 * rng.cnormal());
      }
      for (int axis = 1; axis <= 2; ++axis) {
        const GaussPolySection lhs = nabla(act_right(xi, f), axis);
        const GaussPolySection rhs =
            add(act_right(nabla(xi, axis), f), act_right(xi, derive(f, axis)));
        // compress first: merging equal exponents cancels exactly, where a
        // gram-pairing norm of the raw difference would lose precision.
        leib = std::max(leib, l2_norm(compress(sub(lhs, rhs), 0.0)));
      }
      const GaussPolySection lr = act_right(act_left_monomial(xi, 1, 1), f);
      const GaussPolySection rl = act_left_monomial(act_right(xi, f), 1, 1);
      bimod = std::max(bimod, l2_norm(compress(sub(lr, rl), 0.0)));
      const GaussPolySection comm =
          sub(nabla(nabla(xi, 2), 1), nabla(nabla(xi, 1), 2));
      const GaussPolySection expect =
          scale(cplx(0.0, -2.0 * kPi / geom.epsilon), xi);
      curv = std::max(curv, l2_norm(compress(sub(comm, expect), 0.0)));
    }
    st.check("module Leibniz rule", leib <= 1e-8, leib);
    st.check("module bimodule commutation", bimod <= 1e-10, bimod);
    st.check("module constant curvature", curv <= 1e-10, curv);
    std::vector<GaussPolySection> secs;
    for (int t = 0; t < 8; ++t) secs.push_back(random_section(geom, rng));
    const double ind = induced_derivation_defect(secs);
    st.check("module induced derivation factor", ind <= 1e-9, ind);
  }

  // Hermitian-structure ordering: the convention-pinning property tests.
  {
    const int M = 6;
    double herm = 0.0, rlin = 0.0, compat = 0.0;
    for (int t = 0; t < 4; ++t) {
      const GaussPolySection xi = random_section(geom, rng);
      const GaussPolySection eta = random_section(geom, rng);
      const TwistedSeries xe = inner_alpha(xi, eta, M, ordering).series;
      const TwistedSeries ex = inner_alpha(eta, xi, M, ordering).series;
      herm = std::max(herm, series_max_diff(xe, adjoint(ex), M));
      // right linearity against the monomial Z1 Z2
      const TwistedSeries big =
          inner_alpha(xi, act_right_monomial(act_right_monomial(eta, 1, 0), 0, 1),
                      M + 2, ordering)
              .series;
      const TwistedSeries prod =
          multiply_full(inner_alpha(xi, eta, M + 2, ordering).series,
                        TwistedSeries::monomial(geom.alpha, M + 2, 1, 1));
      rlin = std::max(rlin, series_max_diff(big, prod, M - 2));
      for (int axis = 1; axis <= 2; ++axis) {
        const TwistedSeries lhs =
            derive(inner_alpha(xi, eta, M + 1, ordering).series, axis);
        const TwistedSeries rhs =
            inner_alpha(nabla(xi, axis), eta, M + 1, ordering).series +
            inner_alpha(xi, nabla(eta, axis), M + 1, ordering).series;
        compat = std::max(compat, series_max_diff(lhs, rhs, M - 2));
      }
    }
    st.check("hermitian structure: hermiticity", herm <= 1e-8, herm);
    st.check("hermitian structure: right linearity", rlin <= 1e-8, rlin);
    st.check("hermitian structure: connection compatibility", compat <= 1e-8,
             compat);
  }

  // Small instanton build and its report.
  {
    InstantonConfig ic;
    ic.geometry = geom;
    ic.tau = {0.0, 1.0};
    ic.half_width = 8;
    ic.battery_seed = cfg.battery_seed;
    const BuildResult res = build_projection(ic);
    st.check("instanton idempotency",
             res.report.idempotency_residual <= 1e-6,
             res.report.idempotency_residual);
    st.check("instanton charge",
             std::abs(res.report.charge_raw + 1.0) <= 1e-3,
             res.report.charge_raw);
    st.check("instanton action",
             std::abs(res.report.action - 2.0) <= 1e-2, res.report.action);
    st.check("instanton trace",
             std::abs(res.report.trace - theta_alg) <= 1e-3, res.report.trace);
    st.check("instanton self-duality", res.report.sd_residual <= 1e-3,
             res.report.sd_residual);
  }

  // Gauge shifts: closed form vs the algebra-valued path.
  {
    const ConformalStructure cs(cplx(0.3, 0.8));
    double worst = 0.0;
    for (int m = -1; m <= 1; ++m) {
      for (int n = -1; n <= 1; ++n) {
        const cplx lam = rng.cnormal();
        const TwistedSeries g = TwistedSeries::monomial(geom.alpha, 4, m, n);
        const TwistedSeries path = gauge_transform_lambda_series(lam, g, cs);
        const cplx direct = gauge_transform_lambda(lam, m, n, cs);
        TwistedSeries expect = TwistedSeries::unit(geom.alpha, 4);
        expect *= direct;
        worst = std::max(worst, coeff_norm(path - expect));
      }
    }
    st.check("gauge shift closed form", worst <= 1e-12, worst);
    double red = 0.0;
    for (int t = 0; t < 100; ++t) {
      const cplx lam = 5.0 * rng.cnormal();
      const ModuliPoint p1 = moduli_reduce(lam, {cplx(1.0)}, cs);
      const ModuliPoint p2 = moduli_reduce(p1.lambda, p1.amplitudes, cs);
      red = std::max(red, std::abs(p1.lambda - p2.lambda));
    }
    st.check("moduli reduction idempotent", red <= 1e-9, red);
  }

  std::cout << (st.ok ? "selftest: all checks passed"
                      : "selftest: FAILURES detected")
            << std::endl;
  return st.ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sigma-model instantons on the noncommutative torus"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--r", [&cfg](auto& v) { cfg.r = std::stoi(v[0]); return true; },
                    "module twist r");
    sub->add_option("--q", [&cfg](auto& v) { cfg.q = std::stoi(v[0]); return true; },
                    "module rank q");
    sub->add_option("--alpha",
                    [&cfg](auto& v) { cfg.alpha = std::stod(v[0]); return true; },
                    "base algebra parameter");
    sub->add_option("--theta",
                    [&cfg](auto& v) { cfg.theta = std::stod(v[0]); return true; },
                    "direct algebra parameter");
    sub->add_option("--tau-re", cfg.tau_re, "Re tau");
    sub->add_option("--tau-im", cfg.tau_im, "Im tau");
    sub->add_option("--lambda-re", cfg.lambda_re, "Re lambda");
    sub->add_option("--lambda-im", cfg.lambda_im, "Im lambda");
    sub->add_option("--window", cfg.window, "series window M");
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--seed", cfg.seed, "random seed");
    sub->add_option("--in", cfg.input_file, "input projection file");
    sub->add_option("--max-steps", cfg.max_steps, "flow step budget");
    sub->add_option("--step", cfg.step, "flow step size");
    sub->add_option("--kick", cfg.kick, "flow perturbation amplitude");
    sub->add_option("--grid", cfg.grid, "scan grid side length");
    sub->add_option("--hermitian-variant", cfg.hermitian_variant,
                    "hermitian-structure ordering variant (0..3)");
    sub->add_option("--battery-size", cfg.battery_size, "test battery size");
  };

  CLI::App* build = app.add_subcommand("build", "build an instanton projection");
  CLI::App* verify = app.add_subcommand("verify", "report on a stored projection");
  CLI::App* flow = app.add_subcommand("flow", "relax a perturbed instanton");
  CLI::App* scan = app.add_subcommand("scan", "scan moduli samples");
  CLI::App* selftest = app.add_subcommand("selftest", "run the invariant battery");
  for (CLI::App* sub : {build, verify, flow, scan, selftest}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    // Flags must win over the config file: parse the file first, then
    // re-apply the command line.
    if (!config_path.empty()) {
      RunConfig file_cfg;
      load_config_file(file_cfg, config_path);
      const RunConfig flag_cfg = cfg;
      cfg = file_cfg;
      // Re-parse so that explicitly given flags override file values.
      for (CLI::App* sub : {build, verify, flow, scan, selftest}) {
        if (!sub->parsed()) continue;
        if (sub->count("--tau-re")) cfg.tau_re = flag_cfg.tau_re;
        if (sub->count("--tau-im")) cfg.tau_im = flag_cfg.tau_im;
        if (sub->count("--lambda-re")) cfg.lambda_re = flag_cfg.lambda_re;
        if (sub->count("--lambda-im")) cfg.lambda_im = flag_cfg.lambda_im;
        if (sub->count("--window")) cfg.window = flag_cfg.window;
        if (sub->count("--out")) cfg.out_dir = flag_cfg.out_dir;
        if (sub->count("--seed")) cfg.seed = flag_cfg.seed;
        if (sub->count("--in")) cfg.input_file = flag_cfg.input_file;
        if (sub->count("--max-steps")) cfg.max_steps = flag_cfg.max_steps;
        if (sub->count("--step")) cfg.step = flag_cfg.step;
        if (sub->count("--kick")) cfg.kick = flag_cfg.kick;
        if (sub->count("--grid")) cfg.grid = flag_cfg.grid;
        if (sub->count("--hermitian-variant")) {
          cfg.hermitian_variant = flag_cfg.hermitian_variant;
        }
        if (sub->count("--battery-size")) {
          cfg.battery_size = flag_cfg.battery_size;
        }
        if (sub->count("--r")) cfg.r = flag_cfg.r;
        if (sub->count("--q")) cfg.q = flag_cfg.q;
        if (sub->count("--alpha")) cfg.alpha = flag_cfg.alpha;
        if (sub->count("--theta")) cfg.theta = flag_cfg.theta;
      }
    }

    if (build->parsed()) { cfg.mode = "build"; return cmd_build(cfg); }
    if (verify->parsed()) { cfg.mode = "verify"; return cmd_verify(cfg); }
    if (flow->parsed()) { cfg.mode = "flow"; return cmd_flow(cfg); }
    if (scan->parsed()) { cfg.mode = "scan"; return cmd_scan(cfg); }
    if (selftest->parsed()) { cfg.mode = "selftest"; return cmd_selftest(cfg); }
    return kExitConfig;
  } catch (const nct::ParameterError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const nct::Error& e) {
    std::cerr << "numeric failure: " << e.what() << std::endl;
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitConfig;
  }
}
