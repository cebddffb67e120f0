// Acceptance gate: one check per release criterion, each printed as a single
// [PASS]/[FAIL] line with its measured margin. Exit code 0 only when every
// criterion holds.
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nct/flow.hpp"
#include "nct/heisenberg.hpp"
#include "nct/instanton.hpp"
#include "nct/rng.hpp"
#include "nct/serialize.hpp"
#include "nct/sigma_model.hpp"
#include "nct/twisted_series.hpp"

using namespace nct;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename F>
void parallel_for(int n, F&& f, int workers = 8) {
  std::atomic<int> next{0};
  const int w = std::max(1, std::min(workers, n));
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(w));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(w));
  for (int t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = next++; i < n; i = next++) f(i);
      } catch (...) {
        errs[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs) {
    if (e) std::rethrow_exception(e);
  }
}

TwistedSeries random_series(double theta, int hw, int support, Rng& rng) {
  TwistedSeries a(theta, hw);
  for (int m = -support; m <= support; ++m) {
    for (int n = -support; n <= support; ++n) a.set(m, n, 0.5 * rng.cnormal());
  }
  return a;
}

GaussPolySection random_section(const ModuleGeometry& geom, Rng& rng) {
  GaussPolySection s = GaussPolySection::zero(geom);
  const double em = std::abs(geom.epsilon);
  for (int k = 0; k < geom.q; ++k) {
    GaussPolyTerm t;
    t.alpha_exp =
        cplx(-(0.5 + rng.uniform()) * kPi / em, rng.uniform(-1.0, 1.0));
    t.beta_exp = cplx(rng.uniform(-1.5, 1.5), rng.uniform(-3.0, 3.0));
    t.poly = {rng.cnormal(), 0.3 * rng.cnormal()};
    s.add_term(k, std::move(t));
  }
  return s;
}

struct Gate {
  bool ok = true;
  std::ostringstream detail;

  void require(const char* what, bool pass, double value) {
    if (detail.tellp() > 0) detail << ", ";
    detail << what << "=" << value;
    if (!pass) {
      detail << " [VIOLATED]";
      ok = false;
    }
  }
};

// --- criterion bodies ---------------------------------------------------------

Gate criterion_algebra() {
  Gate g;
  const double theta = 0.37;
  Rng rng(1001);
  std::vector<TwistedSeries> pool;
  for (int i = 0; i < 102; ++i) pool.push_back(random_series(theta, 16, 3, rng));
  double assoc = 0.0, cyc = 0.0, anti = 0.0, td = 0.0;
  for (std::size_t i = 0; i + 2 < pool.size(); i += 3) {
    const TwistedSeries& a = pool[i];
    const TwistedSeries& b = pool[i + 1];
    const TwistedSeries& c = pool[i + 2];
    assoc = std::max(assoc, coeff_norm(multiply_full(multiply_full(a, b), c) -
                                       multiply_full(a, multiply_full(b, c))));
    cyc = std::max(cyc, std::abs(pair_trace(a, b) - pair_trace(b, a)));
    anti = std::max(anti, coeff_norm(adjoint(multiply_full(a, b)) -
                                     multiply_full(adjoint(b), adjoint(a))));
    td = std::max(td, std::max(std::abs(trace(derive(a, 1))),
                               std::abs(trace(derive(a, 2)))));
  }
  g.require("assoc", assoc <= 1e-10, assoc);
  g.require("cyclicity", cyc <= 1e-10, cyc);
  g.require("adjoint", anti <= 1e-10, anti);
  g.require("trace_derive", td == 0.0, td);
  double split = 0.0;
  for (const cplx tau : {cplx(0.0, 1.0), cplx(0.3, 0.8)}) {
    const ConformalStructure cs(tau);
    for (int m = -6; m <= 6; ++m) {
      for (int n = -6; n <= 6; ++n) {
        const TwistedSeries u = TwistedSeries::monomial(theta, 7, m, n);
        split = std::max(
            split,
            coeff_norm(cplx(4.0) * holo_derive(holo_derive(u, cs, false), cs,
                                               true) -
                       laplacian(u, cs)));
      }
    }
  }
  g.require("laplacian_split", split <= 1e-10, split);
  return g;
}

Gate criterion_module() {
  Gate g;
  const ModuleGeometry geom = ModuleGeometry::create(0, 1, -1.0 / 0.37);
  Rng rng(1002);
  double leib = 0.0, compat = 0.0, bimod = 0.0, curv = 0.0;
  std::vector<GaussPolySection> all;
  const int M = 5;
  for (int t = 0; t < 50; ++t) {
    const GaussPolySection xi = random_section(geom, rng);
    all.push_back(xi);
    const double nx = l2_norm(xi);
    TwistedSeries f(geom.alpha, 2);
    for (int m = -1; m <= 1; ++m) {
      for (int n = -1; n <= 1; ++n) f.set(m, n, 0.4 * rng.cnormal());
    }
    for (int axis = 1; axis <= 2; ++axis) {
      const GaussPolySection lhs = nabla(act_right(xi, f), axis);
      const GaussPolySection rhs =
          add(act_right(nabla(xi, axis), f), act_right(xi, derive(f, axis)));
      leib = std::max(leib, l2_norm(compress(sub(lhs, rhs), 0.0)) /
                                (nx * (1.0 + l1_norm(f))));
    }
    const GaussPolySection lr = act_right(act_left_monomial(xi, 1, 1), f);
    const GaussPolySection rl = act_left_monomial(act_right(xi, f), 1, 1);
    bimod = std::max(bimod, l2_norm(compress(sub(lr, rl), 0.0)) /
                                (nx * (1.0 + l1_norm(f))));
    const GaussPolySection comm =
        sub(nabla(nabla(xi, 2), 1), nabla(nabla(xi, 1), 2));
    const GaussPolySection expect =
        scale(cplx(0.0, -2.0 * kPi / geom.epsilon), xi);
    curv = std::max(curv, l2_norm(compress(sub(comm, expect), 0.0)) / nx);
    if (t % 10 == 0) {
      const GaussPolySection eta = random_section(geom, rng);
      for (int axis = 1; axis <= 2; ++axis) {
        const TwistedSeries lhs =
            derive(inner_alpha(xi, eta, M).series, axis);
        const TwistedSeries rhs =
            inner_alpha(nabla(xi, axis), eta, M).series +
            inner_alpha(xi, nabla(eta, axis), M).series;
        for (int m = -M + 2; m <= M - 2; ++m) {
          for (int n = -M + 2; n <= M - 2; ++n) {
            compat =
                std::max(compat, std::abs(lhs.coeff(m, n) - rhs.coeff(m, n)));
          }
        }
      }
    }
  }
  g.require("leibniz", leib <= 1e-8, leib);
  g.require("compatibility", compat <= 1e-8, compat);
  g.require("bimodule", bimod <= 1e-12, bimod);
  g.require("curvature", curv <= 1e-12, curv);
  const double ind = induced_derivation_defect(all);
  g.require("induced_factor", ind <= 1e-9, ind);
  return g;
}

Gate criterion_holomorphic(cplx tau_override = cplx(0.0, 0.0)) {
  Gate g;
  Rng rng(1003);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const ModuleGeometry geom = (t % 3 == 0)
                                    ? ModuleGeometry::create(1, 2, -0.3)
                                    : ModuleGeometry::create(0, 1, -1.0 / 0.37);
    const cplx tau = tau_override != cplx(0.0, 0.0)
                         ? tau_override
                         : cplx(rng.uniform(-0.4, 0.4), 0.5 + rng.uniform());
    const cplx lam = rng.cnormal();
    std::vector<cplx> amps;
    for (int k = 0; k < geom.q; ++k) amps.push_back(rng.cnormal());
    const ConformalStructure cs(tau);
    const GaussPolySection psi = gaussian_section(geom, tau, lam, amps);
    const GaussPolySection res =
        compress(sub(nabla_holo(psi, cs, true), scale(lam, psi)), 0.0);
    worst = std::max(worst, l2_norm(res) / l2_norm(psi));
  }
  g.require("antiholo_defect", worst <= 1e-12, worst);
  return g;
}

Gate criterion_boca(cplx tau) {
  Gate g;
  InstantonConfig ic;
  ic.geometry = ModuleGeometry::create(0, 1, -1.0 / 0.37);
  ic.tau = tau;
  ic.half_width = 16;
  const BuildResult res = build_projection(ic);
  const ProjectionReport& r = res.report;
  g.require("idempotency", r.idempotency_residual <= 1e-8,
            r.idempotency_residual);
  g.require("charge", std::abs(std::abs(r.charge_raw) - 1.0) <= 1e-6,
            r.charge_raw);
  g.require("action", std::abs(r.action - 2.0) <= 1e-3, r.action);
  g.require("bp_gap", r.bp_gap <= 1e-3 && r.bp_gap >= -1e-8, r.bp_gap);
  g.require("eom", r.eom_residual <= 1e-5, r.eom_residual);
  g.require("trace", std::abs(r.trace - 0.37) <= 1e-4, r.trace);
  return g;
}

Gate criterion_higher_charge() {
  Gate g;
  InstantonConfig ic;
  ic.geometry = ModuleGeometry::create(1, 2, -0.3);
  ic.half_width = 14;
  const ProjectionBuilder builder(ic);
  const std::vector<cplx> a1 = {cplx(1.0), cplx(1.0)};
  const std::vector<cplx> a2 = {cplx(0.9, 0.0), cplx(0.1, 0.4)};
  std::array<std::optional<BuildResult>, 2> results;
  parallel_for(2, [&](int i) {
    results[static_cast<std::size_t>(i)] =
        builder.build(ic.tau, 0.0, i == 0 ? a1 : a2);
  });
  const BuildResult& r1 = *results[0];
  const BuildResult& r2 = *results[1];
  g.require("charge_1", std::abs(std::abs(r1.report.charge_raw) - 2.0) <= 1e-6,
            r1.report.charge_raw);
  g.require("charge_2", std::abs(std::abs(r2.report.charge_raw) - 2.0) <= 1e-6,
            r2.report.charge_raw);
  g.require("action_1", std::abs(r1.report.action - 4.0) <= 5e-3,
            r1.report.action);
  g.require("action_2", std::abs(r2.report.action - 4.0) <= 5e-3,
            r2.report.action);
  // projectively independent amplitudes give genuinely distinct projections
  const double dist = coeff_norm(r1.projection - r2.projection);
  g.require("distinct", dist > 1e-4, dist);
  g.require("same_invariants",
            r1.report.charge_rounded == r2.report.charge_rounded &&
                std::abs(r1.report.action - r2.report.action) <= 1e-3,
            std::abs(r1.report.action - r2.report.action));
  return g;
}

Gate criterion_moduli(cplx tau) {
  Gate g;
  InstantonConfig ic;
  ic.geometry = ModuleGeometry::create(0, 1, -1.0 / 0.37);
  ic.tau = tau;
  ic.half_width = 16;
  const ProjectionBuilder builder(ic);
  const ConformalStructure cs(tau);
  Rng rng(1006);
  struct Task {
    cplx lambda;
    std::vector<cplx> amps;
    int base = -1;  // index of the projection it must match
    bool phase_only = false;
  };
  std::vector<Task> tasks;
  const std::array<std::pair<int, int>, 4> shifts{
      {{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  for (int i = 0; i < 10; ++i) {
    const cplx lam = rng.cnormal();
    const int base = static_cast<int>(tasks.size());
    tasks.push_back({lam, {}, -1, false});
    for (auto [m, n] : shifts) {
      tasks.push_back({gauge_transform_lambda(lam, m, n, cs), {}, base, false});
    }
    tasks.push_back(
        {lam, {std::polar(1.0, rng.uniform(0.0, 2.0 * kPi))}, base, true});
  }
  std::vector<TwistedSeries> built(
      tasks.size(), TwistedSeries(ic.geometry.theta, ic.half_width));
  parallel_for(static_cast<int>(tasks.size()), [&](int i) {
    built[static_cast<std::size_t>(i)] =
        builder.build(tau, tasks[static_cast<std::size_t>(i)].lambda,
                      tasks[static_cast<std::size_t>(i)].amps, false)
            .projection;
  });
  double worst_shift = 0.0, worst_phase = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].base < 0) continue;
    const double d = l1_norm(
        built[i] - built[static_cast<std::size_t>(tasks[i].base)]);
    (tasks[i].phase_only ? worst_phase : worst_shift) =
        std::max(tasks[i].phase_only ? worst_phase : worst_shift, d);
  }
  g.require("lattice_shift_dist", worst_shift <= 1e-5, worst_shift);
  g.require("phase_dist", worst_phase <= 1e-10, worst_phase);
  // closed-form shift against the algebra-valued gauge transformation
  double closed = 0.0;
  for (auto [m, n] : shifts) {
    const cplx lam = rng.cnormal();
    const TwistedSeries mono =
        TwistedSeries::monomial(ic.geometry.alpha, 4, m, n);
    const TwistedSeries path = gauge_transform_lambda_series(lam, mono, cs);
    TwistedSeries expect = TwistedSeries::unit(ic.geometry.alpha, 4);
    expect *= gauge_transform_lambda(lam, m, n, cs);
    closed = std::max(closed, coeff_norm(path - expect));
  }
  g.require("closed_form", closed <= 1e-12, closed);
  return g;
}

Gate criterion_bp_universality() {
  Gate g;
  InstantonConfig ic;
  ic.geometry = ModuleGeometry::create(0, 1, -1.0 / 0.37);
  ic.half_width = 12;
  const BuildResult base = ProjectionBuilder(ic).build(ic.tau, 0.0, {}, false);
  const ConformalStructure cs(ic.tau);
  const double theta = ic.geometry.theta;
  std::vector<double> bp(50), idist(50), idem(50);
  parallel_for(50, [&](int t) {
    Rng rng(2000 + static_cast<std::uint64_t>(t));
    // random unitary exp(i h) applied to a reference projection or its
    // complement, then retracted: a random hermitian projection.
    TwistedSeries z(theta, 12);
    const double amp = 0.15 + 0.15 * rng.uniform();
    for (int m = -2; m <= 2; ++m) {
      for (int n = -2; n <= 2; ++n) {
        z.set(m, n, amp * rng.cnormal() * std::exp(-0.4 * (m * m + n * n)));
      }
    }
    const TwistedSeries h = 0.5 * (z + adjoint(z));
    TwistedSeries u = TwistedSeries::unit(theta, 12);
    TwistedSeries term = u;
    for (int k = 1; k <= 18; ++k) {
      term = (cplx(1.0) / cplx(static_cast<double>(k))) *
             multiply(term, cplx(0.0, 1.0) * h).first;
      u += term;
    }
    TwistedSeries p = cplx(t % 2 == 0 ? 1.0 : -1.0) * base.projection;
    if (t % 2 == 1) p.set(0, 0, p.coeff(0, 0) + 1.0);
    p = multiply(multiply(u, p).first, adjoint(u)).first;
    p = purify(0.5 * (p + adjoint(p)), 60, 1e-6);
    idem[static_cast<std::size_t>(t)] =
        coeff_norm(multiply_full(p, p) - p);
    const ChargeResult c = charge_unchecked(p);
    const double s = action(p, cs, kInf);
    bp[static_cast<std::size_t>(t)] = s - 2.0 * std::abs(c.raw);
    idist[static_cast<std::size_t>(t)] = c.integer_distance;
  });
  double worst_bp = kInf, worst_int = 0.0, worst_idem = 0.0;
  for (int t = 0; t < 50; ++t) {
    worst_bp = std::min(worst_bp, bp[static_cast<std::size_t>(t)]);
    worst_int = std::max(worst_int, idist[static_cast<std::size_t>(t)]);
    worst_idem = std::max(worst_idem, idem[static_cast<std::size_t>(t)]);
  }
  g.require("generator_idempotency", worst_idem <= 1e-6, worst_idem);
  g.require("bp_bound", worst_bp >= -1e-8, worst_bp);
  g.require("charge_integrality", worst_int <= 1e-3, worst_int);
  return g;
}

Gate criterion_flow() {
  Gate g;
  InstantonConfig ic;
  ic.geometry = ModuleGeometry::create(0, 1, -1.0 / 0.37);
  ic.half_width = 8;
  const BuildResult base = build_projection(ic);
  const ConformalStructure cs(ic.tau);
  const TwistedSeries p0 = tangent_kick(base.projection, 1e-2, 2, 17);
  FlowConfig fc;
  fc.max_steps = 150;
  const FlowResult res = relax(p0, cs, fc);
  const auto& recs = res.trace.records;
  double rise = -kInf, drift = 0.0;
  double prev = recs.front().action;
  for (const auto& r : recs) {
    if (!r.accepted) continue;
    rise = std::max(rise, r.action - prev);
    prev = r.action;
    drift = std::max(drift, std::abs(r.charge_raw - recs.front().charge_raw));
  }
  g.require("kick_raised_action", recs.front().action > 2.0 + 1e-4,
            recs.front().action);
  g.require("action_restored", std::abs(recs.back().action - 2.0) <= 1e-2,
            recs.back().action);
  g.require("monotone", rise <= 1e-9, rise);
  g.require("charge_plateau", drift <= 1e-4, drift);
  return g;
}

Gate criterion_conventions() {
  Gate g;
  const fs::path dir = fs::temp_directory_path() / "nct-acceptance-selftest";
  fs::create_directories(dir);
  for (int v = 0; v < 4; ++v) {
    const std::string cmd = std::string(NCT_CLI_PATH) +
                            " selftest --hermitian-variant " +
                            std::to_string(v) + " --out " +
                            (dir / ("v" + std::to_string(v))).string() +
                            " > /dev/null 2>&1";
    const int rc = WEXITSTATUS(std::system(cmd.c_str()));
    g.require(("variant_" + std::to_string(v)).c_str(),
              v == 0 ? rc == 0 : rc == 3, rc);
  }
  return g;
}

Gate criterion_tau_generality() {
  const cplx tau(0.3, 0.8);
  Gate g3 = criterion_holomorphic(tau);
  Gate g4 = criterion_boca(tau);
  Gate g6 = criterion_moduli(tau);
  Gate g;
  g.ok = g3.ok && g4.ok && g6.ok;
  g.detail << "holo{" << g3.detail.str() << "}, boca{" << g4.detail.str()
           << "}, moduli{" << g6.detail.str() << "}";
  return g;
}

}  // namespace

int main() {
  struct Item {
    const char* label;
    std::function<Gate()> run;
  };
  const std::vector<Item> items = {
      {"algebra identities", criterion_algebra},
      {"module exactness", criterion_module},
      {"gaussian holomorphicity", [] { return criterion_holomorphic(); }},
      {"boca instanton", [] { return criterion_boca(cplx(0.0, 1.0)); }},
      {"higher charge", criterion_higher_charge},
      {"moduli and gauge", [] { return criterion_moduli(cplx(0.0, 1.0)); }},
      {"bp bound universality", criterion_bp_universality},
      {"flow relaxation", criterion_flow},
      {"convention pinning", criterion_conventions},
      {"tau generality", criterion_tau_generality},
  };
  int failures = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Gate g;
    try {
      g = items[i].run();
    } catch (const std::exception& e) {
      g.ok = false;
      g.detail << "exception: " << e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    std::printf("[%s] criterion %zu: %s (%s; %.1f s)\n",
                g.ok ? "PASS" : "FAIL", i + 1, items[i].label,
                g.detail.str().c_str(), secs);
    std::fflush(stdout);
    if (!g.ok) ++failures;
  }
  if (failures == 0) {
    std::printf("acceptance: all %zu criteria passed\n", items.size());
  } else {
    std::printf("acceptance: %d criteria FAILED\n", failures);
  }
  return failures == 0 ? 0 : 1;
}
