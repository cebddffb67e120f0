#ifndef NCT_FLOW_HPP
#define NCT_FLOW_HPP

#include <cstdint>
#include <vector>

#include "nct/conformal.hpp"
#include "nct/sigma_model.hpp"
#include "nct/twisted_series.hpp"

namespace nct {

struct FlowConfig {
  double step = 1e-3;          // initial and maximal step size
  double min_step = 1e-12;     // floor: below it the flow terminates
  int max_steps = 500;
  int purify_every = 1;        // retract candidates every k-th accepted step
  double stop_grad_tol = 1e-6; // terminate when ||G||_l1 falls below this
  int purify_iters = 30;
  double purify_tol = 1e-11;
};

struct FlowRecord {
  int step = 0;
  double action = 0.0;
  double charge_raw = 0.0;
  double grad_norm = 0.0;       // l1 norm of the descent direction
  double idempotency_residual = 0.0;
  double step_size = 0.0;
  bool accepted = false;
};

enum class FlowStatus {
  Converged,        // gradient norm under stop_grad_tol
  BudgetExhausted,  // max_steps reached
  StepFloor,        // no decrease found above min_step
};

struct FlowTrace {
  std::vector<FlowRecord> records;
  FlowStatus status = FlowStatus::BudgetExhausted;
};

/// Direction of steepest descent for the action at a projection p (tangent to
/// the projection manifold): the flow moves along p - step * G with
/// G = -[(1 - p) Lap(p) p + p Lap(p) (1 - p)].
TwistedSeries descent_direction(const TwistedSeries& p,
                                const ConformalStructure& cs);

struct FlowResult {
  TwistedSeries projection;
  FlowTrace trace;
};

/// Backtracking gradient flow with cubic retraction. A step is accepted only
/// when the action does not increase; rejected steps halve the step size.
FlowResult relax(const TwistedSeries& p0, const ConformalStructure& cs,
                 const FlowConfig& cfg = FlowConfig{});

/// Random tangent perturbation of a projection, retracted back onto the
/// projection manifold: purify(p + (1-p) z p + p z* (1-p)).
TwistedSeries tangent_kick(const TwistedSeries& p, double amplitude,
                           int support, std::uint64_t seed);

}  // namespace nct

#endif
