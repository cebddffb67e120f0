#ifndef NCT_INSTANTON_HPP
#define NCT_INSTANTON_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "nct/conformal.hpp"
#include "nct/heisenberg.hpp"
#include "nct/sigma_model.hpp"
#include "nct/twisted_series.hpp"

namespace nct {

/// Orientation convention fixed by the construction: for Im tau > 0 and
/// eps > 0 the gaussian projections satisfy the self-duality pair
/// (dbar p) p = 0, p (d p) = 0 and carry charge -q.
inline constexpr int kInstantonChargeSign = -1;

struct InstantonConfig {
  ModuleGeometry geometry;
  cplx tau{0.0, 1.0};
  cplx lambda{0.0, 0.0};
  std::vector<cplx> amplitudes;  // size q; empty means all-ones
  int half_width = 12;           // series window of the extracted projection

  int battery_size = 6;
  std::uint64_t battery_seed = 0x5eedbea7ULL;
  double cond_bound = 1e9;
  double ls_rel_tol = 1e-5;  // least-squares misfit gate
  int purify_iters = 5;
};

/// Canonical amplitude vector: unit euclidean norm, first entry of
/// significant magnitude made real and positive. Throws on the zero vector.
std::vector<cplx> normalize_amplitudes(std::vector<cplx> amps);

/// The gaussian vector psi(s, k) = A_k exp(i pi tau s^2 / eps + lambda
/// (conj(tau) - tau) s). Throws IntegrabilityError when Im(tau)/eps <= 0
/// (flip the module orientation: eps must be positive for this branch).
GaussPolySection gaussian_section(const ModuleGeometry& geom, cplx tau,
                                  cplx lambda,
                                  const std::vector<cplx>& amplitudes);

struct BuildResult {
  TwistedSeries projection;
  ProjectionReport report;
  double gram_lower_bound = 0.0;       // spectral estimate of <psi, psi>_alpha
  double gram_tail = 0.0;              // discarded ring mass of the gram series
  double ls_rel_residual = 0.0;        // endomorphism extraction misfit
  double pre_purify_idempotency = 0.0;
  double post_purify_idempotency = 0.0;
};

/// Extracts p = |psi> <psi,psi>_alpha^{-1} <psi| as a series over theta.
/// The battery and the normal-equation factorization depend only on
/// (geometry, half_width, battery), so one builder serves many (tau, lambda,
/// amplitude) values.
class ProjectionBuilder {
 public:
  explicit ProjectionBuilder(const InstantonConfig& cfg);

  const InstantonConfig& config() const { return cfg_; }
  const EndomorphismSolver& solver() const { return solver_; }

  /// with_report = false skips the residual diagnostics (the costly part)
  /// and leaves report fields other than trace at zero.
  BuildResult build(cplx tau, cplx lambda, const std::vector<cplx>& amplitudes,
                    bool with_report = true) const;
  BuildResult build() const {
    return build(cfg_.tau, cfg_.lambda, cfg_.amplitudes);
  }

 private:
  InstantonConfig cfg_;
  EndomorphismSolver solver_;
};

/// One-shot convenience wrapper.
BuildResult build_projection(const InstantonConfig& cfg);

/// Moduli shift of lambda under the gauge monomial Z1^m Z2^n:
/// lambda + 2 pi i (tau m - n) / (tau - conj(tau)).
cplx gauge_transform_lambda(cplx lambda, int m, int n,
                            const ConformalStructure& cs);

/// Generators of the lambda lattice: gauge_transform_lambda(0, 1, 0) and
/// gauge_transform_lambda(0, 0, 1).
std::pair<cplx, cplx> moduli_lattice(const ConformalStructure& cs);

/// General code path: g^{-1} lambda g + g^{-1} dbar(g) evaluated in the
/// truncated alpha-algebra for a unitary g (the inverse is taken as g*).
/// For g = Z1^m Z2^n the (0,0) coefficient reproduces
/// gauge_transform_lambda(lambda, m, n, cs).
TwistedSeries gauge_transform_lambda_series(cplx lambda, const TwistedSeries& g,
                                            const ConformalStructure& cs);

struct ModuliPoint {
  cplx lambda;
  std::vector<cplx> amplitudes;
};

/// Reduce lambda to the fundamental cell of the moduli lattice and the
/// amplitudes to their canonical normalization. Idempotent.
ModuliPoint moduli_reduce(cplx lambda, std::vector<cplx> amplitudes,
                          const ConformalStructure& cs);

struct ScanSample {
  cplx lambda;
  std::vector<cplx> amplitudes;
  int equivalent_to = -1;  // index of a sample expected to give the same p
};

struct ScanRow {
  ScanSample sample;
  ModuliPoint reduced;
  TwistedSeries projection;
  ProjectionReport report;
  double distance_to_equivalent = -1.0;  // ||p - p_partner||, when flagged
  bool build_ok = true;   // false when the build failed (e.g. singular gram)
  std::string build_error;
};

/// Build every sample with a shared builder and measure the distances of the
/// flagged pairs.
std::vector<ScanRow> moduli_scan(const InstantonConfig& base,
                                 const std::vector<ScanSample>& samples);

}  // namespace nct

#endif
