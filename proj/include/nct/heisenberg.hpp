#ifndef NCT_HEISENBERG_HPP
#define NCT_HEISENBERG_HPP

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "nct/conformal.hpp"
#include "nct/errors.hpp"
#include "nct/twisted_series.hpp"

namespace nct {

/// Parameters of the basic bimodule E_{r,q} = S(R x Z_q): a right module over
/// the algebra with parameter alpha, a left module over the algebra with
/// parameter theta = (a alpha + b)/(-q alpha + r) where a r + b q = 1.
struct ModuleGeometry {
  int r = 0;
  int q = 1;
  double alpha = 0.0;
  int a = 0;       // Bezout cofactors, a r + b q = 1, |a| minimal
  int b = 1;
  double epsilon = 0.0;  // r/q - alpha
  double theta = 0.0;    // Morita-dual parameter

  /// Validates gcd(r, q) = 1, q >= 1, r/q != alpha, -q alpha + r != 0, and
  /// fixes the canonical Bezout pair (minimal |a|, ties resolved toward the
  /// smaller a).
  static ModuleGeometry create(int r, int q, double alpha);

  bool same_module(const ModuleGeometry& o) const {
    return r == o.r && q == o.q && alpha == o.alpha;
  }
};

/// One integrable term c(s) = P(s) exp(alpha_exp s^2 + beta_exp s + gamma_exp)
/// of a Schwartz-class component. P is stored by ascending powers of s and
/// Re(alpha_exp) must be negative. The constant gamma_exp keeps translation
/// prefactors in log space: shifting a far-off-center Gaussian produces
/// exp factors far outside double range that must cancel against the moment
/// integrals, so they are only ever combined inside the exponent.
struct GaussPolyTerm {
  std::vector<cplx> poly;
  cplx alpha_exp{-1.0, 0.0};
  cplx beta_exp{0.0, 0.0};
  cplx gamma_exp{0.0, 0.0};
};

/// Element of E_{r,q}: q components, each a finite sum of Gauss-polynomial
/// terms. All module operations below are exact on this class (they produce
/// new Gauss-polynomial data, no quadrature).
struct GaussPolySection {
  ModuleGeometry geom;
  std::vector<std::vector<GaussPolyTerm>> comps;  // size q

  static GaussPolySection zero(const ModuleGeometry& g) {
    GaussPolySection s;
    s.geom = g;
    s.comps.resize(static_cast<std::size_t>(g.q));
    return s;
  }

  /// Append one term to component k, validating integrability.
  void add_term(int k, GaussPolyTerm t);
};

/// Exact Gaussian moment integral over R of s^j exp(alpha s^2 + beta s).
/// Throws IntegrabilityError unless Re(alpha) < 0.
cplx gauss_moment(int j, cplx alpha, cplx beta);

// --- section arithmetic -----------------------------------------------------

GaussPolySection add(const GaussPolySection& x, const GaussPolySection& y);
GaussPolySection scale(cplx c, const GaussPolySection& x);
GaussPolySection sub(const GaussPolySection& x, const GaussPolySection& y);

/// L2(R x Z_q) inner product, antilinear in the FIRST argument.
cplx l2_inner(const GaussPolySection& x, const GaussPolySection& y);
double l2_norm(const GaussPolySection& x);

/// Merge terms with equal exponents and drop terms whose individual L2 norm
/// is below rel_tol times the norm of the section.
GaussPolySection compress(const GaussPolySection& x, double rel_tol = 0.0);

// --- module structure --------------------------------------------------------

/// Right action of the monomial Z1^m Z2^n of the alpha-algebra (applied as
/// written: Z1 m times after Z2 n times on the right, i.e. xi Z1^m Z2^n).
GaussPolySection act_right_monomial(const GaussPolySection& xi, int m, int n);

/// Right action of a full series over alpha.
GaussPolySection act_right(const GaussPolySection& xi, const TwistedSeries& f);

/// Left action of the monomial U1^m U2^n of the theta-algebra.
GaussPolySection act_left_monomial(const GaussPolySection& xi, int m, int n);

/// Left action of a full series over theta (theta compatibility is checked
/// mod 1).
GaussPolySection act_left(const TwistedSeries& f, const GaussPolySection& xi);

/// Constant-curvature connection: axis 1 is multiplication by 2 pi i s / eps,
/// axis 2 is d/ds.
GaussPolySection nabla(const GaussPolySection& xi, int axis);

/// nabla_tau = holo_c1 nabla_1 + holo_c2 nabla_2 (conjugated = antiholomorphic).
GaussPolySection nabla_holo(const GaussPolySection& xi,
                            const ConformalStructure& cs,
                            bool conjugated = false);

// --- the alpha-valued inner product ------------------------------------------

/// Orderings of the coefficient formula for <xi, eta>_alpha. Exactly one makes
/// the product hermitian, right-linear, and compatible with the right action;
/// Canonical names it.
enum class HermitianOrdering {
  InverseZ2ThenZ1 = 0,  // c_{mn} = (xi, (eta Z2^{-n}) Z1^{-m})_{L2}
  InverseZ1ThenZ2 = 1,  // c_{mn} = (xi, (eta Z1^{-m}) Z2^{-n})_{L2}
  DirectZ2ThenZ1 = 2,   // c_{mn} = (xi, (eta Z2^{n}) Z1^{m})_{L2}
  DirectZ1ThenZ2 = 3,   // c_{mn} = (xi, (eta Z1^{m}) Z2^{n})_{L2}
};
inline constexpr HermitianOrdering kCanonicalOrdering =
    HermitianOrdering::InverseZ2ThenZ1;

struct InnerAlphaResult {
  TwistedSeries series;
  double tail_estimate = 0.0;  // l1 mass of the first discarded ring
};

/// <xi, eta>_alpha truncated to |m|, |n| <= half_width. Antilinear in xi.
InnerAlphaResult inner_alpha(const GaussPolySection& xi,
                             const GaussPolySection& eta, int half_width,
                             HermitianOrdering ordering = kCanonicalOrdering);

// --- least-squares extraction of theta-algebra endomorphisms ------------------

/// Deterministic battery of random single-term test sections.
std::vector<GaussPolySection> make_battery(const ModuleGeometry& geom,
                                           int count, std::uint64_t seed);

struct EndomorphismFit {
  TwistedSeries series;  // over theta
  double residual = 0.0;       // sqrt of the total squared L2 misfit
  double rel_residual = 0.0;   // residual / sqrt(sum ||target||^2)
};

/// Normal equations for the window |m|, |n| <= half_width against a fixed
/// battery: solve min sum_j || sum t_{mn} U1^m U2^n zeta_j - target_j ||^2.
/// The factorization depends only on (geom, half_width, battery) and is
/// reused across solves.
class EndomorphismSolver {
 public:
  EndomorphismSolver(ModuleGeometry geom, int half_width,
                     std::vector<GaussPolySection> battery,
                     double cond_bound = 1e9);
  ~EndomorphismSolver();
  EndomorphismSolver(EndomorphismSolver&&) noexcept;
  EndomorphismSolver& operator=(EndomorphismSolver&&) noexcept;

  const ModuleGeometry& geom() const { return geom_; }
  int half_width() const { return half_width_; }
  const std::vector<GaussPolySection>& battery() const { return battery_; }
  double condition() const { return condition_; }

  /// targets must be battery-sized and live on the same module.
  EndomorphismFit solve(const std::vector<GaussPolySection>& targets) const;

 private:
  ModuleGeometry geom_;
  int half_width_;
  std::vector<GaussPolySection> battery_;
  double condition_ = 0.0;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// <xi, eta>_theta: the theta-algebra element acting as
/// zeta -> xi <eta, zeta>_alpha, extracted with the solver. Antilinear in eta.
EndomorphismFit inner_theta(const GaussPolySection& xi,
                            const GaussPolySection& eta,
                            const EndomorphismSolver& solver);

/// Largest residual, over the given sections and all axis/generator pairs, of
/// nabla_u (U_v xi) - U_v nabla_u(xi) - delta_{uv} (2 pi i / (q eps)) U_v xi.
double induced_derivation_defect(const std::vector<GaussPolySection>& sections);

}  // namespace nct

#endif
