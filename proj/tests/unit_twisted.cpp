#include <cmath>
#include <complex>

#include "doctest.h"
#include "nct/rng.hpp"
#include "nct/twisted_series.hpp"

using namespace nct;

namespace {

TwistedSeries random_series(double theta, int hw, int support, Rng& rng) {
  TwistedSeries a(theta, hw);
  for (int m = -support; m <= support; ++m) {
    for (int n = -support; n <= support; ++n) {
      a.set(m, n, 0.5 * rng.cnormal());
    }
  }
  return a;
}

}  // namespace

TEST_CASE("monomial product phase against the reordering oracle") {
  // Moving U2^n across U1^m' costs one phase factor per crossing:
  // U2^n U1^{m'} = e^{2 pi i theta n m'} U1^{m'} U2^n.
  const double theta = 0.37;
  for (int m = -3; m <= 3; ++m) {
    for (int n = -3; n <= 3; ++n) {
      for (int mp = -3; mp <= 3; ++mp) {
        for (int np = -3; np <= 3; ++np) {
          const TwistedSeries prod =
              multiply_full(TwistedSeries::monomial(theta, 3, m, n),
                            TwistedSeries::monomial(theta, 3, mp, np));
          const cplx expect =
              std::polar(1.0, 2.0 * kPi * theta * n * mp);
          CHECK(prod.coeffs().size() == 1);
          CHECK(std::abs(prod.coeff(m + mp, n + np) - expect) <= 1e-14);
        }
      }
    }
  }
}

TEST_CASE("adjoint is an antilinear involution and antimultiplicative") {
  const double theta = 0.37;
  Rng rng(101);
  for (int t = 0; t < 10; ++t) {
    const TwistedSeries a = random_series(theta, 8, 3, rng);
    const TwistedSeries b = random_series(theta, 8, 3, rng);
    CHECK(coeff_norm(adjoint(adjoint(a)) - a) <= 1e-14);
    CHECK(coeff_norm(adjoint(multiply_full(a, b)) -
                     multiply_full(adjoint(b), adjoint(a))) <= 1e-12);
    // tr(a* a) = sum |c|^2 >= 0
    const double n2 = pair_trace(adjoint(a), a).real();
    CHECK(n2 == doctest::Approx(coeff_norm(a) * coeff_norm(a)).epsilon(1e-12));
  }
  // single monomial: (U1^m U2^n)* = e^{2 pi i theta m n} U1^{-m} U2^{-n}
  for (int m = -3; m <= 3; ++m) {
    for (int n = -3; n <= 3; ++n) {
      const TwistedSeries s =
          adjoint(TwistedSeries::monomial(theta, 3, m, n));
      const cplx expect = std::polar(1.0, 2.0 * kPi * theta * m * n);
      CHECK(std::abs(s.coeff(-m, -n) - expect) <= 1e-14);
    }
  }
}

TEST_CASE("associativity and trace identities") {
  const double theta = 0.37;
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    const TwistedSeries a = random_series(theta, 9, 3, rng);
    const TwistedSeries b = random_series(theta, 9, 3, rng);
    const TwistedSeries c = random_series(theta, 9, 3, rng);
    CHECK(coeff_norm(multiply_full(multiply_full(a, b), c) -
                     multiply_full(a, multiply_full(b, c))) <= 1e-11);
    CHECK(std::abs(pair_trace(a, b) - pair_trace(b, a)) <= 1e-12);
    CHECK(std::abs(pair_trace(a, b) - trace(multiply_full(a, b))) <= 1e-13);
    CHECK(std::abs(triple_trace(a, b, c) -
                   trace(multiply_full(multiply_full(a, b), c))) <= 1e-12);
    CHECK(trace(derive(a, 1)) == cplx(0.0, 0.0));
    CHECK(trace(derive(a, 2)) == cplx(0.0, 0.0));
  }
}

TEST_CASE("derivations satisfy the Leibniz rule") {
  const double theta = 0.37;
  Rng rng(13);
  for (int axis = 1; axis <= 2; ++axis) {
    const TwistedSeries a = random_series(theta, 8, 3, rng);
    const TwistedSeries b = random_series(theta, 8, 3, rng);
    const TwistedSeries lhs = derive(multiply_full(a, b), axis);
    const TwistedSeries rhs = multiply_full(derive(a, axis), b) +
                              multiply_full(a, derive(b, axis));
    CHECK(coeff_norm(lhs - rhs) <= 1e-11);
  }
}

TEST_CASE("truncation accounting") {
  const double theta = 0.37;
  Rng rng(19);
  const TwistedSeries a = random_series(theta, 6, 6, rng);
  auto [small, tail] = truncate(a, 3);
  CHECK(small.half_width() == 3);
  CHECK(tail.discarded_mass >= 0.0);
  CHECK(tail.discarded_mass ==
        doctest::Approx(l1_norm(a) - l1_norm(small)).epsilon(1e-12));
  auto [same, none] = truncate(a, 6);
  CHECK(none.discarded_mass == 0.0);

  // windowed multiply equals the truncation of the full product
  const TwistedSeries b = random_series(theta, 6, 6, rng);
  const TwistedSeries full = multiply_full(a, b);
  const auto prod = multiply(a, b);
  CHECK(coeff_norm(prod.first - truncate(full, 6).first) <= 1e-13);
  CHECK(prod.second.discarded_mass >= 0.0);
}

TEST_CASE("twist phase is periodic in theta for dyadic values") {
  const double th = 5.0 / 32.0;
  for (int k = -50; k <= 50; ++k) {
    CHECK(twist_phase(th, k) == twist_phase(th + 1.0, k));
  }
}

TEST_CASE("purify matches the scalar cubic recursion") {
  const double theta = 0.37;
  TwistedSeries a(theta, 4);
  a.set(0, 0, 0.8);
  const TwistedSeries p = purify(a, 60, 1e-14);
  double c = 0.8;
  for (int it = 0; it < 60 && std::abs(c * c - c) > 1e-14; ++it) {
    c = 3.0 * c * c - 2.0 * c * c * c;
  }
  CHECK(std::abs(p.coeff(0, 0) - c) <= 1e-15);
  CHECK(std::abs(c - 1.0) <= 1e-12);  // 0.8 is in the basin of 1
}

TEST_CASE("newton-schulz inverse") {
  const double theta = 0.37;
  // positive hermitian: 1 + 0.3 (U1 + U1*), spectrum in [0.4, 1.6]
  TwistedSeries a = TwistedSeries::unit(theta, 10);
  a += cplx(0.3) * TwistedSeries::monomial(theta, 10, 1, 0);
  a += adjoint(cplx(0.3) * TwistedSeries::monomial(theta, 10, 1, 0));
  const TwistedSeries inv = invert_newton_schulz(a, 80, 1e-13);
  CHECK(coeff_norm(multiply(a, inv).first - TwistedSeries::unit(theta, 10)) <=
        1e-10);

  // Laurent-series oracle for (1 - c (U1 + U1*))^{-1} with c = 0.2:
  // the coefficient of U1^j is r^{|j|} / sqrt(1 - 4c^2) with
  // r = (1 - sqrt(1 - 4c^2)) / (2c).
  const double c = 0.2;
  TwistedSeries g = TwistedSeries::unit(theta, 12);
  g -= cplx(c) * TwistedSeries::monomial(theta, 12, 1, 0);
  g -= adjoint(cplx(c) * TwistedSeries::monomial(theta, 12, 1, 0));
  const TwistedSeries ginv = invert_newton_schulz(g, 150, 1e-14);
  const double disc = std::sqrt(1.0 - 4.0 * c * c);
  const double r = (1.0 - disc) / (2.0 * c);
  for (int j = -5; j <= 5; ++j) {
    CHECK(std::abs(ginv.coeff(j, 0) - std::pow(r, std::abs(j)) / disc) <=
          1e-9);
  }

  // non-invertible input is rejected
  TwistedSeries z(theta, 4);
  z.set(1, 0, 1.0);
  z.set(-1, 0, 1.0);  // 2 cos generator: spectrum [-2, 2] crosses zero
  z = 0.5 * (z + adjoint(z));
  CHECK_THROWS_AS((void)invert_newton_schulz(z, 40, 1e-12),
                  InvertibilityError);
}

TEST_CASE("norm estimate sits between the certified bounds") {
  const double theta = 0.37;
  CHECK(norm_estimate(TwistedSeries::monomial(theta, 4, 1, 0)) ==
        doctest::Approx(1.0).epsilon(1e-6));
  CHECK(norm_estimate(cplx(2.5) * TwistedSeries::unit(theta, 4)) ==
        doctest::Approx(2.5).epsilon(1e-6));
  Rng rng(23);
  for (int t = 0; t < 5; ++t) {
    const TwistedSeries a = random_series(theta, 6, 2, rng);
    const double est = norm_estimate(a);
    CHECK(est >= coeff_norm(a) * (1.0 - 1e-4));
    CHECK(est <= l1_norm(a) * (1.0 + 1e-4));
  }
  CHECK(spectral_lower_bound(cplx(2.0) * TwistedSeries::unit(theta, 4)) ==
        doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("theta compatibility is enforced") {
  const TwistedSeries a = TwistedSeries::unit(0.37, 4);
  const TwistedSeries b = TwistedSeries::unit(0.52, 4);
  CHECK_THROWS_AS((void)multiply(a, b), ParameterError);
  CHECK(theta_compatible(a, a));
  CHECK(!theta_compatible(a, b));
}
