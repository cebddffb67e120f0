#include "nct/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nct/rng.hpp"

namespace nct {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Best-effort cubic retraction: never throws, returns the iterate with the
/// smallest idempotency defect.
TwistedSeries retract(const TwistedSeries& a, int iters, double tol) {
  TwistedSeries x = 0.5 * (a + adjoint(a));
  auto defect = [](const TwistedSeries& v) {
    return coeff_norm(multiply_full(v, v) - v);
  };
  TwistedSeries best = x;
  double best_defect = defect(x);
  for (int it = 0; it < iters && best_defect > tol; ++it) {
    const TwistedSeries x2 = multiply(x, x).first;
    x = 3.0 * x2 - 2.0 * multiply(x2, x).first;
    x = 0.5 * (x + adjoint(x));
    const double d = defect(x);
    if (d >= best_defect) break;
    best_defect = d;
    best = x;
  }
  return best;
}

}  // namespace

TwistedSeries descent_direction(const TwistedSeries& p,
                                const ConformalStructure& cs) {
  const TwistedSeries lap = laplacian(p, cs);
  const TwistedSeries one = TwistedSeries::unit(p.theta(), p.half_width());
  const TwistedSeries comp = one - p;
  const TwistedSeries left =
      multiply(multiply(comp, lap).first, p).first;
  const TwistedSeries right =
      multiply(multiply(p, lap).first, comp).first;
  // left* = right exactly; symmetrizing removes the window-truncation skew so
  // the returned direction is a hermitian tangent vector.
  const TwistedSeries sum = left + right;
  return cplx(-0.5, 0.0) * (sum + adjoint(sum));
}

FlowResult relax(const TwistedSeries& p0, const ConformalStructure& cs,
                 const FlowConfig& cfg) {
  TwistedSeries p = retract(p0, cfg.purify_iters, cfg.purify_tol);
  double action_cur = action(p, cs, kInf);
  double step = cfg.step;

  FlowTrace trace;
  auto record = [&](int k, double gnorm, double used, bool accepted) {
    FlowRecord rec;
    rec.step = k;
    rec.action = action_cur;
    rec.charge_raw = charge_unchecked(p).raw;
    rec.grad_norm = gnorm;
    rec.idempotency_residual = coeff_norm(multiply_full(p, p) - p);
    rec.step_size = used;
    rec.accepted = accepted;
    trace.records.push_back(rec);
  };

  record(0, l1_norm(descent_direction(p, cs)), 0.0, true);
  int accepted_count = 0;
  for (int k = 1; k <= cfg.max_steps; ++k) {
    const TwistedSeries g = descent_direction(p, cs);
    const double gnorm = l1_norm(g);
    if (gnorm <= cfg.stop_grad_tol) {
      trace.status = FlowStatus::Converged;
      return {std::move(p), std::move(trace)};
    }
    TwistedSeries cand = p - cplx(step, 0.0) * g;
    if (cfg.purify_every >= 1 && (accepted_count + 1) % cfg.purify_every == 0) {
      cand = retract(cand, cfg.purify_iters, cfg.purify_tol);
    } else {
      cand = 0.5 * (cand + adjoint(cand));
    }
    const double action_new = action(cand, cs, kInf);
    const bool accept = action_new <= action_cur + 1e-12;
    if (accept) {
      p = std::move(cand);
      action_cur = action_new;
      ++accepted_count;
      record(k, gnorm, step, true);
      step = std::min(step * 1.5, cfg.step);
    } else {
      record(k, gnorm, step, false);
      step *= 0.5;
      if (step < cfg.min_step) {
        trace.status = FlowStatus::StepFloor;
        return {std::move(p), std::move(trace)};
      }
    }
  }
  trace.status = FlowStatus::BudgetExhausted;
  return {std::move(p), std::move(trace)};
}

TwistedSeries tangent_kick(const TwistedSeries& p, double amplitude,
                           int support, std::uint64_t seed) {
  if (support < 0 || support > p.half_width()) {
    throw ParameterError("tangent kick support must fit in the window");
  }
  Rng rng(seed);
  TwistedSeries z(p.theta(), p.half_width());
  for (int m = -support; m <= support; ++m) {
    for (int n = -support; n <= support; ++n) {
      const double decay =
          support > 0
              ? std::exp(-0.5 * (m * m + n * n) /
                         (0.25 * support * support + 1.0))
              : 1.0;
      z.set(m, n, amplitude * decay * rng.cnormal());
    }
  }
  const TwistedSeries one = TwistedSeries::unit(p.theta(), p.half_width());
  const TwistedSeries comp = one - p;
  TwistedSeries delta =
      multiply(multiply(comp, z).first, p).first +
      multiply(multiply(p, adjoint(z)).first, comp).first;
  return retract(p + delta, 60, 1e-12);
}

}  // namespace nct
