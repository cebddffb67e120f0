#ifndef NCT_SIGMA_MODEL_HPP
#define NCT_SIGMA_MODEL_HPP

#include "nct/conformal.hpp"
#include "nct/twisted_series.hpp"

namespace nct {

/// All scalar diagnostics of one projection. bp_gap = action - 2|charge_raw|.
struct ProjectionReport {
  double trace = 0.0;
  double action = 0.0;
  double charge_raw = 0.0;
  int charge_rounded = 0;
  double bp_gap = 0.0;
  double eom_residual = 0.0;
  double sd_residual = 0.0;
  double asd_residual = 0.0;
  double idempotency_residual = 0.0;
  double hermiticity_residual = 0.0;
};

struct SigmaTolerances {
  double idempotency = 1e-6;   // gate for action/charge preconditions
  double charge_imag = 1e-10;
  double charge_round = 1e-4;  // max distance to the nearest integer
};

/// Cyclic 2-cocycle -(1/2 pi i) tr(a0 (d1 a1 d2 a2 - d2 a1 d1 a2)).
cplx cocycle_psi(const TwistedSeries& a0, const TwistedSeries& a1,
                 const TwistedSeries& a2);

/// Positive Hochschild cocycle (2/pi) sqrt(det g) tr(a0 d_tau a1 dbar a2).
/// Carries the sqrt(det g) factor so that cocycle_phi(1, p, p) == action(p).
cplx cocycle_phi(const TwistedSeries& a0, const TwistedSeries& a1,
                 const TwistedSeries& a2, const ConformalStructure& cs);

/// sigma-model action (1/2 pi) sqrt(det g) g^{uv} tr(d_u p d_v p).
/// Throws ParameterError when the idempotency defect exceeds idem_tol.
double action(const TwistedSeries& p, const ConformalStructure& cs,
              double idem_tol = 1e-6);

/// Metric-independent evaluation of the action via the holomorphic split,
/// (2/pi) sqrt(det g) tr(d_tau p dbar p). Equal to action() up to rounding;
/// kept as an independent route for regression tests.
double action_holomorphic(const TwistedSeries& p, const ConformalStructure& cs);

struct ChargeResult {
  double raw = 0.0;
  int rounded = 0;
  double imag = 0.0;          // imaginary part of the raw trace expression
  double integer_distance = 0.0;
};

/// Topological charge -(1/2 pi i) tr(p [d1 p, d2 p]) with nearest-integer
/// rounding. Throws when the imaginary part or the integer distance exceeds
/// the tolerances (projection too truncated).
ChargeResult charge(const TwistedSeries& p,
                    const SigmaTolerances& tol = SigmaTolerances{});

/// Same computation without the validity gates.
ChargeResult charge_unchecked(const TwistedSeries& p);

/// action - 2 |charge_raw|; >= 0 up to numerical slack for projections.
double bp_gap(const TwistedSeries& p, const ConformalStructure& cs,
              double idem_tol = 1e-6);

/// Operator-norm estimate of p Lap(p) - Lap(p) p.
double eom_residual(const TwistedSeries& p, const ConformalStructure& cs);

/// max(||dbar(p) p||, ||p d(p)||): the self-duality defect.
double sd_residual(const TwistedSeries& p, const ConformalStructure& cs);

/// max(||d(p) p||, ||p dbar(p)||): the anti-self-duality defect.
double asd_residual(const TwistedSeries& p, const ConformalStructure& cs);

/// Populate every report field (no validity gating; callers compare against
/// their own tolerances).
ProjectionReport make_report(const TwistedSeries& p,
                             const ConformalStructure& cs);

}  // namespace nct

#endif
