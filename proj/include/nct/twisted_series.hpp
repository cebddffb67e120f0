#ifndef NCT_TWISTED_SERIES_HPP
#define NCT_TWISTED_SERIES_HPP

#include <cmath>
#include <compare>
#include <complex>
#include <map>
#include <utility>

#include "nct/conformal.hpp"
#include "nct/errors.hpp"

namespace nct {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

/// Lattice exponent of a monomial U1^m U2^n.
struct Index {
  int m = 0;
  int n = 0;
  friend auto operator<=>(const Index&, const Index&) = default;
};

/// Accounting of coefficients discarded by a window truncation.
struct TailReport {
  double discarded_mass = 0.0;  // l1 mass of dropped coefficients
  Index max_index_touched{0, 0};

  void absorb(const TailReport& other) {
    discarded_mass += other.discarded_mass;
    if (std::abs(other.max_index_touched.m) > std::abs(max_index_touched.m))
      max_index_touched.m = other.max_index_touched.m;
    if (std::abs(other.max_index_touched.n) > std::abs(max_index_touched.n))
      max_index_touched.n = other.max_index_touched.n;
  }
};

/// Truncated twisted Fourier series sum a_{mn} U1^m U2^n with
/// U2 U1 = e^{2 pi i theta} U1 U2. Support lives on the finite window
/// |m|, |n| <= half_width. Immutable in spirit: operations return new values.
class TwistedSeries {
 public:
  TwistedSeries(double theta, int half_width);

  static TwistedSeries unit(double theta, int half_width);
  static TwistedSeries monomial(double theta, int half_width, int m, int n,
                                cplx c = cplx(1.0, 0.0));

  double theta() const { return theta_; }
  int half_width() const { return half_width_; }
  const std::map<Index, cplx>& coeffs() const { return coeffs_; }
  bool empty() const { return coeffs_.empty(); }

  cplx coeff(int m, int n) const;
  void set(int m, int n, cplx v);
  void add(int m, int n, cplx v);

  TwistedSeries& operator+=(const TwistedSeries& other);
  TwistedSeries& operator-=(const TwistedSeries& other);
  TwistedSeries& operator*=(cplx scalar);

  friend TwistedSeries operator+(TwistedSeries a, const TwistedSeries& b) {
    a += b;
    return a;
  }
  friend TwistedSeries operator-(TwistedSeries a, const TwistedSeries& b) {
    a -= b;
    return a;
  }
  friend TwistedSeries operator*(cplx s, TwistedSeries a) {
    a *= s;
    return a;
  }

  /// Drop stored coefficients with |c| below the absolute threshold.
  void prune(double abs_tol = 1e-300);

 private:
  double theta_;
  int half_width_;
  std::map<Index, cplx> coeffs_;
};

/// e^{2 pi i theta k}, computed from theta reduced mod 1 so that integer
/// shifts of theta yield identical phase tables.
cplx twist_phase(double theta, double k);

/// True when two series may be combined (equal theta to machine tolerance).
bool theta_compatible(const TwistedSeries& a, const TwistedSeries& b,
                      double tol = 1e-12);

/// Twisted convolution, re-truncated to the larger operand window.
std::pair<TwistedSeries, TailReport> multiply(const TwistedSeries& a,
                                              const TwistedSeries& b);

/// Twisted convolution on the full product support (no truncation).
TwistedSeries multiply_full(const TwistedSeries& a, const TwistedSeries& b);

/// Re-window a series, reporting the discarded l1 mass.
std::pair<TwistedSeries, TailReport> truncate(const TwistedSeries& a,
                                              int half_width);

/// (U1^m U2^n)^* = e^{2 pi i theta m n} U1^{-m} U2^{-n}, extended antilinearly.
TwistedSeries adjoint(const TwistedSeries& a);

/// The normalized trace: the (0,0) coefficient.
cplx trace(const TwistedSeries& a);

/// trace(a b) without forming the product.
cplx pair_trace(const TwistedSeries& a, const TwistedSeries& b);

/// trace(a b c) without forming products.
cplx triple_trace(const TwistedSeries& a, const TwistedSeries& b,
                  const TwistedSeries& c);

/// Canonical derivation: multiplies a_{mn} by 2 pi i m (axis 1) or 2 pi i n.
TwistedSeries derive(const TwistedSeries& a, int axis);

/// Holomorphic (or, with conjugated=true, antiholomorphic) derivation for the
/// conformal structure.
TwistedSeries holo_derive(const TwistedSeries& a, const ConformalStructure& cs,
                          bool conjugated = false);

/// Laplacian of the metric: a_{mn} -> -4 pi^2 g^{uv} v_u v_v a_{mn}.
TwistedSeries laplacian(const TwistedSeries& a, const ConformalStructure& cs);

/// l1 mass of the coefficients; a certified upper bound on the operator norm.
double l1_norm(const TwistedSeries& a);

/// Euclidean norm of the coefficient vector (= L2 norm in the trace
/// representation); a lower bound on the operator norm.
double coeff_norm(const TwistedSeries& a);

/// Largest |m| or |n| carrying a coefficient above rel_tol * max|coeff|.
int effective_radius(const TwistedSeries& a, double rel_tol = 1e-18);

/// Hermiticity defect ||a - a*|| in coefficient norm.
double hermiticity_defect(const TwistedSeries& a);

/// Largest singular value of left multiplication by `a` on the monomial basis
/// of the window lattice |m|,|n| <= window (Lanczos on the truncated
/// left-regular representation). window = 0 selects
/// max(half_width, 4 * effective_radius). An estimate, not a certified bound;
/// l1_norm certifies from above.
double norm_estimate(const TwistedSeries& a, int window = 0);

/// Spectral lower bound estimate for a hermitian element, via
/// c - ||c - a||_est with c an upper norm estimate.
double spectral_lower_bound(const TwistedSeries& a, int window = 0);

/// Retraction onto projections: x <- 3x^2 - 2x^3 until ||x^2 - x|| <= tol.
/// Requires a hermitian with spectrum inside (-1/2, 3/2).
TwistedSeries purify(const TwistedSeries& a, int max_iters = 60,
                     double tol = 1e-12);

/// Newton-Schulz inverse of a positive hermitian element:
/// x <- x(2 - a x), seeded with a* / ||a||_1^2.
TwistedSeries invert_newton_schulz(const TwistedSeries& a, int max_iters = 60,
                                   double tol = 1e-12);

}  // namespace nct

#endif
