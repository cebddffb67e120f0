#include "nct/instanton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace nct {

namespace {

/// Best-effort sharpening of a nearly idempotent hermitian series: a few
/// cubic retraction sweeps, keeping the iterate with the smallest defect.
TwistedSeries sharpen(const TwistedSeries& raw, int iters, double* pre,
                      double* post) {
  TwistedSeries x = 0.5 * (raw + adjoint(raw));
  auto defect = [](const TwistedSeries& a) {
    return coeff_norm(multiply_full(a, a) - a);
  };
  double best_defect = defect(x);
  if (pre) *pre = best_defect;
  TwistedSeries best = x;
  for (int it = 0; it < iters && best_defect > 1e-15; ++it) {
    const TwistedSeries x2 = multiply(x, x).first;
    const TwistedSeries x3 = multiply(x2, x).first;
    x = 3.0 * x2 - 2.0 * x3;
    x = 0.5 * (x + adjoint(x));
    const double d = defect(x);
    if (d < best_defect) {
      best_defect = d;
      best = x;
    } else {
      break;
    }
  }
  if (post) *post = best_defect;
  return best;
}

}  // namespace

std::vector<cplx> normalize_amplitudes(std::vector<cplx> amps) {
  double norm_sq = 0.0;
  double max_abs = 0.0;
  for (cplx a : amps) {
    norm_sq += std::norm(a);
    max_abs = std::max(max_abs, std::abs(a));
  }
  if (!(norm_sq > 0.0)) {
    throw ParameterError("amplitude vector must be nonzero");
  }
  cplx pivot = 0.0;
  for (cplx a : amps) {
    if (std::abs(a) > 1e-14 * max_abs) {
      pivot = a;
      break;
    }
  }
  const cplx factor = std::conj(pivot) / (std::abs(pivot) * std::sqrt(norm_sq));
  for (cplx& a : amps) a *= factor;
  return amps;
}

GaussPolySection gaussian_section(const ModuleGeometry& geom, cplx tau,
                                  cplx lambda,
                                  const std::vector<cplx>& amplitudes) {
  if (!(tau.imag() > 0.0)) {
    throw ParameterError("gaussian section requires Im tau > 0");
  }
  const cplx alpha_exp = cplx(0.0, kPi) * tau / geom.epsilon;
  if (!(alpha_exp.real() < 0.0)) {
    throw IntegrabilityError(
        "gaussian section is not integrable: Im(tau)/eps <= 0; flip the "
        "module orientation (eps = r/q - alpha must be positive)");
  }
  std::vector<cplx> amps = amplitudes;
  if (amps.empty()) amps.assign(static_cast<std::size_t>(geom.q), cplx(1.0));
  if (static_cast<int>(amps.size()) != geom.q) {
    throw ParameterError("amplitude vector must have q entries");
  }
  amps = normalize_amplitudes(std::move(amps));
  const cplx beta_exp = lambda * (std::conj(tau) - tau);
  GaussPolySection psi = GaussPolySection::zero(geom);
  for (int k = 0; k < geom.q; ++k) {
    GaussPolyTerm t;
    t.alpha_exp = alpha_exp;
    t.beta_exp = beta_exp;
    t.poly = {amps[static_cast<std::size_t>(k)]};
    psi.add_term(k, std::move(t));
  }
  return psi;
}

ProjectionBuilder::ProjectionBuilder(const InstantonConfig& cfg)
    : cfg_(cfg),
      solver_(cfg.geometry, cfg.half_width,
              make_battery(cfg.geometry, cfg.battery_size, cfg.battery_seed),
              cfg.cond_bound) {}

BuildResult ProjectionBuilder::build(cplx tau, cplx lambda,
                                     const std::vector<cplx>& amplitudes,
                                     bool with_report) const {
  const ConformalStructure cs(tau);
  const GaussPolySection psi =
      gaussian_section(cfg_.geometry, tau, lambda, amplitudes);

  const InnerAlphaResult gram = inner_alpha(psi, psi, cfg_.half_width);
  const TwistedSeries gram_h = 0.5 * (gram.series + adjoint(gram.series));
  // Throws InvertibilityError when the gram element is not safely positive
  // (density condition r - q alpha > 1 violated, or window too small).
  const TwistedSeries gram_inv = invert_newton_schulz(gram_h, 80, 1e-13);

  std::vector<GaussPolySection> targets;
  targets.reserve(solver_.battery().size());
  for (const GaussPolySection& zeta : solver_.battery()) {
    const TwistedSeries h = inner_alpha(psi, zeta, cfg_.half_width).series;
    const TwistedSeries u = multiply(gram_inv, h).first;
    targets.push_back(compress(act_right(psi, u), 1e-17));
  }
  const EndomorphismFit fit = solver_.solve(targets);
  if (!(fit.rel_residual <= cfg_.ls_rel_tol)) {
    throw WindowError(
        "projection window too small: least-squares misfit above tolerance",
        fit.rel_residual);
  }

  BuildResult out{TwistedSeries(cfg_.geometry.theta, cfg_.half_width),
                  ProjectionReport{},
                  spectral_lower_bound(gram_h),
                  gram.tail_estimate,
                  fit.rel_residual,
                  0.0,
                  0.0};
  TwistedSeries p = fit.series;
  p.prune(1e-300);
  out.projection = sharpen(p, cfg_.purify_iters, &out.pre_purify_idempotency,
                           &out.post_purify_idempotency);
  if (with_report) {
    out.report = make_report(out.projection, cs);
  } else {
    out.report.trace = trace(out.projection).real();
  }
  return out;
}

BuildResult build_projection(const InstantonConfig& cfg) {
  return ProjectionBuilder(cfg).build();
}

cplx gauge_transform_lambda(cplx lambda, int m, int n,
                            const ConformalStructure& cs) {
  const cplx denom = cs.tau - std::conj(cs.tau);
  return lambda + cplx(0.0, 2.0 * kPi) *
                      (cs.tau * static_cast<double>(m) -
                       static_cast<double>(n)) /
                      denom;
}

std::pair<cplx, cplx> moduli_lattice(const ConformalStructure& cs) {
  return {gauge_transform_lambda(0.0, 1, 0, cs),
          gauge_transform_lambda(0.0, 0, 1, cs)};
}

TwistedSeries gauge_transform_lambda_series(cplx lambda, const TwistedSeries& g,
                                            const ConformalStructure& cs) {
  const TwistedSeries ginv = adjoint(g);  // unitary g
  const TwistedSeries dbar_g = holo_derive(g, cs, true);
  TwistedSeries out = multiply(ginv, dbar_g).first;
  out += lambda * multiply(ginv, g).first;
  return out;
}

ModuliPoint moduli_reduce(cplx lambda, std::vector<cplx> amplitudes,
                          const ConformalStructure& cs) {
  const auto [w1, w2] = moduli_lattice(cs);
  const double det = w1.real() * w2.imag() - w2.real() * w1.imag();
  if (std::abs(det) < 1e-12) {
    throw ParameterError("moduli lattice is degenerate");
  }
  double x = (lambda.real() * w2.imag() - w2.real() * lambda.imag()) / det;
  double y = (w1.real() * lambda.imag() - lambda.real() * w1.imag()) / det;
  auto frac = [](double v) {
    double f = v - std::floor(v);
    // Snap roundoff at the cell boundary so that reduce is idempotent.
    if (f >= 1.0 - 1e-12 || f <= 1e-12) f = 0.0;
    return f;
  };
  x = frac(x);
  y = frac(y);
  ModuliPoint out;
  out.lambda = x * w1 + y * w2;
  out.amplitudes = normalize_amplitudes(std::move(amplitudes));
  return out;
}

std::vector<ScanRow> moduli_scan(const InstantonConfig& base,
                                 const std::vector<ScanSample>& samples) {
  const ProjectionBuilder builder(base);
  const ConformalStructure cs(base.tau);
  std::vector<ScanRow> rows;
  rows.reserve(samples.size());
  for (const ScanSample& s : samples) {
    std::vector<cplx> amps = s.amplitudes;
    if (amps.empty()) {
      amps.assign(static_cast<std::size_t>(base.geometry.q), cplx(1.0));
    }
    ScanRow row{s,
                moduli_reduce(s.lambda, amps, cs),
                TwistedSeries(base.geometry.theta, base.half_width),
                ProjectionReport{},
                -1.0,
                true,
                ""};
    try {
      BuildResult built = builder.build(base.tau, s.lambda, amps);
      row.projection = std::move(built.projection);
      row.report = built.report;
    } catch (const Error& e) {
      row.build_ok = false;
      row.build_error = e.what();
    }
    rows.push_back(std::move(row));
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int j = rows[i].sample.equivalent_to;
    if (j >= 0 && j < static_cast<int>(rows.size()) && rows[i].build_ok &&
        rows[static_cast<std::size_t>(j)].build_ok) {
      rows[i].distance_to_equivalent = norm_estimate(
          rows[i].projection - rows[static_cast<std::size_t>(j)].projection);
    }
  }
  return rows;
}

}  // namespace nct
