#include "nct/sigma_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace nct {

namespace {

double idempotency_defect(const TwistedSeries& p) {
  TwistedSeries p2 = multiply_full(p, p);
  return coeff_norm(p2 - p);
}

void require_projection(const TwistedSeries& p, double idem_tol,
                        const char* who) {
  const double defect = idempotency_defect(p);
  if (!(defect <= idem_tol)) {
    throw ParameterError(std::string(who) +
                         ": argument is not a projection (idempotency defect " +
                         std::to_string(defect) + ")");
  }
}

}  // namespace

cplx cocycle_psi(const TwistedSeries& a0, const TwistedSeries& a1,
                 const TwistedSeries& a2) {
  const cplx t12 = triple_trace(a0, derive(a1, 1), derive(a2, 2));
  const cplx t21 = triple_trace(a0, derive(a1, 2), derive(a2, 1));
  return (t12 - t21) / (cplx(0.0, 2.0 * kPi));
}

cplx cocycle_phi(const TwistedSeries& a0, const TwistedSeries& a1,
                 const TwistedSeries& a2, const ConformalStructure& cs) {
  const cplx t = triple_trace(a0, holo_derive(a1, cs, false),
                              holo_derive(a2, cs, true));
  return (2.0 / kPi) * cs.sqrt_det * t;
}

double action(const TwistedSeries& p, const ConformalStructure& cs,
              double idem_tol) {
  if (std::isfinite(idem_tol)) {
    require_projection(p, idem_tol, "action");
  }
  cplx s = 0.0;
  for (int u = 0; u < 2; ++u) {
    const TwistedSeries du = derive(p, u + 1);
    for (int v = 0; v < 2; ++v) {
      const TwistedSeries dv = (v == u) ? du : derive(p, v + 1);
      s += cs.ginv[u][v] * pair_trace(du, dv);
    }
  }
  return (cs.sqrt_det / (2.0 * kPi)) * s.real();
}

double action_holomorphic(const TwistedSeries& p,
                          const ConformalStructure& cs) {
  const cplx t = pair_trace(holo_derive(p, cs, false), holo_derive(p, cs, true));
  return ((2.0 / kPi) * cs.sqrt_det * t).real();
}

ChargeResult charge_unchecked(const TwistedSeries& p) {
  const TwistedSeries d1 = derive(p, 1);
  const TwistedSeries d2 = derive(p, 2);
  const cplx t = triple_trace(p, d1, d2) - triple_trace(p, d2, d1);
  const cplx c = -t / cplx(0.0, 2.0 * kPi);
  ChargeResult out;
  out.raw = c.real();
  out.imag = c.imag();
  out.rounded = static_cast<int>(std::lround(out.raw));
  out.integer_distance = std::abs(out.raw - out.rounded);
  return out;
}

ChargeResult charge(const TwistedSeries& p, const SigmaTolerances& tol) {
  require_projection(p, tol.idempotency, "charge");
  ChargeResult out = charge_unchecked(p);
  if (!(std::abs(out.imag) <= tol.charge_imag)) {
    throw ConvergenceError(
        "charge: trace expression has a non-real part (projection too "
        "truncated)",
        std::abs(out.imag));
  }
  if (!(out.integer_distance <= tol.charge_round)) {
    throw ConvergenceError(
        "charge: value too far from an integer (projection too truncated)",
        out.integer_distance);
  }
  return out;
}

double bp_gap(const TwistedSeries& p, const ConformalStructure& cs,
              double idem_tol) {
  const double s = action(p, cs, idem_tol);
  const ChargeResult c = charge_unchecked(p);
  return s - 2.0 * std::abs(c.raw);
}

double eom_residual(const TwistedSeries& p, const ConformalStructure& cs) {
  const TwistedSeries lap = laplacian(p, cs);
  const TwistedSeries comm = multiply_full(p, lap) - multiply_full(lap, p);
  return norm_estimate(comm);
}

double sd_residual(const TwistedSeries& p, const ConformalStructure& cs) {
  const double a = norm_estimate(multiply_full(holo_derive(p, cs, true), p));
  const double b = norm_estimate(multiply_full(p, holo_derive(p, cs, false)));
  return std::max(a, b);
}

double asd_residual(const TwistedSeries& p, const ConformalStructure& cs) {
  const double a = norm_estimate(multiply_full(holo_derive(p, cs, false), p));
  const double b = norm_estimate(multiply_full(p, holo_derive(p, cs, true)));
  return std::max(a, b);
}

ProjectionReport make_report(const TwistedSeries& p,
                             const ConformalStructure& cs) {
  ProjectionReport r;
  r.trace = trace(p).real();
  r.action = action(p, cs, std::numeric_limits<double>::infinity());
  const ChargeResult c = charge_unchecked(p);
  r.charge_raw = c.raw;
  r.charge_rounded = c.rounded;
  r.bp_gap = r.action - 2.0 * std::abs(c.raw);
  r.eom_residual = eom_residual(p, cs);
  r.sd_residual = sd_residual(p, cs);
  r.asd_residual = asd_residual(p, cs);
  r.idempotency_residual = idempotency_defect(p);
  r.hermiticity_residual = hermiticity_defect(p);
  return r;
}

}  // namespace nct
