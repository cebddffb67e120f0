#ifndef NCT_CONFORMAL_HPP
#define NCT_CONFORMAL_HPP

#include <array>
#include <complex>

#include "nct/errors.hpp"

namespace nct {

using cplx = std::complex<double>;

/// Conformal structure of the torus: the modulus tau with Im tau > 0, the
/// constant metric it induces, and the coefficients of the holomorphic and
/// antiholomorphic derivations in terms of the canonical ones.
///
/// Conventions:
///   g      = [[1, Re tau], [Re tau, |tau|^2]],  sqrt(det g) = Im tau
///   d_tau  = holo_c1 * d1 + holo_c2 * d2      = (-conj(tau) d1 + d2)/(tau - conj(tau))
///   dbar   = antiholo_c1 * d1 + antiholo_c2 * d2 = (tau d1 - d2)/(tau - conj(tau))
/// The pairs are constructed so that d_tau + dbar == d1 holds exactly.
struct ConformalStructure {
  cplx tau;
  std::array<std::array<double, 2>, 2> g;
  std::array<std::array<double, 2>, 2> ginv;
  double sqrt_det;
  cplx holo_c1, holo_c2;
  cplx antiholo_c1, antiholo_c2;

  explicit ConformalStructure(cplx tau_in) : tau(tau_in) {
    const double re = tau.real();
    const double im = tau.imag();
    if (!(im > 0.0)) {
      throw ParameterError("conformal structure requires Im tau > 0");
    }
    const double abs2 = re * re + im * im;
    g = {{{1.0, re}, {re, abs2}}};
    const double im2 = im * im;
    ginv = {{{abs2 / im2, -re / im2}, {-re / im2, 1.0 / im2}}};
    sqrt_det = im;

    // tau - conj(tau) is purely imaginary, so the reciprocal is exact in form.
    const cplx w(0.0, -0.5 / im);  // 1 / (tau - conj(tau))
    holo_c1 = -std::conj(tau) * w;
    holo_c2 = w;
    antiholo_c1 = 1.0 - holo_c1;  // equals tau * w up to rounding
    antiholo_c2 = -w;
  }

  /// g^{mu nu} v_mu v_nu for an integer frequency vector.
  double inverse_metric_quadratic(int m, int n) const {
    return ginv[0][0] * m * m + 2.0 * ginv[0][1] * m * n + ginv[1][1] * n * n;
  }
};

}  // namespace nct

#endif
