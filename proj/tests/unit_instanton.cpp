#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "nct/instanton.hpp"
#include "nct/rng.hpp"

using namespace nct;

TEST_CASE("amplitude normalization") {
  const std::vector<cplx> a =
      normalize_amplitudes({cplx(0.0, 2.0), cplx(1.0, -1.0)});
  double norm = 0.0;
  for (cplx c : a) norm += std::norm(c);
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(a[0].imag() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(a[0].real() > 0.0);
  CHECK_THROWS_AS((void)normalize_amplitudes({cplx(0.0), cplx(0.0)}),
                  ParameterError);
  // a global phase normalizes away completely
  const std::vector<cplx> b = normalize_amplitudes(
      {std::polar(1.0, 1.234) * cplx(0.0, 2.0),
       std::polar(1.0, 1.234) * cplx(1.0, -1.0)});
  CHECK(std::abs(a[0] - b[0]) <= 1e-14);
  CHECK(std::abs(a[1] - b[1]) <= 1e-14);
}

TEST_CASE("gaussian section guards") {
  const ModuleGeometry good = ModuleGeometry::create(0, 1, -1.0 / 0.37);
  CHECK_THROWS_AS(
      (void)gaussian_section(good, cplx(0.3, -0.8), cplx(0.0), {}),
      ParameterError);
  // eps < 0 flips the orientation and loses integrability
  const ModuleGeometry flipped = ModuleGeometry::create(0, 1, 1.0 / 0.37);
  CHECK_THROWS_AS(
      (void)gaussian_section(flipped, cplx(0.0, 1.0), cplx(0.0), {}),
      IntegrabilityError);
  CHECK_THROWS_AS(
      (void)gaussian_section(good, cplx(0.0, 1.0), cplx(0.0),
                             {cplx(1.0), cplx(1.0)}),
      ParameterError);  // wrong amplitude count
}

TEST_CASE("gaussian sections solve the antiholomorphic equation") {
  Rng rng(79);
  for (int t = 0; t < 5; ++t) {
    const ModuleGeometry geom = (t % 2 == 0)
                                    ? ModuleGeometry::create(0, 1, -1.0 / 0.37)
                                    : ModuleGeometry::create(1, 2, -0.3);
    const cplx tau(rng.uniform(-0.4, 0.4), 0.6 + rng.uniform());
    const cplx lam = rng.cnormal();
    std::vector<cplx> amps;
    for (int k = 0; k < geom.q; ++k) amps.push_back(rng.cnormal());
    const ConformalStructure cs(tau);
    const GaussPolySection psi = gaussian_section(geom, tau, lam, amps);
    const GaussPolySection res =
        compress(sub(nabla_holo(psi, cs, true), scale(lam, psi)), 0.0);
    CHECK(l2_norm(res) <= 1e-12 * l2_norm(psi));
  }
}

TEST_CASE("gauge shifts and moduli reduction") {
  const ConformalStructure cs(cplx(0.3, 0.8));
  const auto [w1, w2] = moduli_lattice(cs);
  CHECK(std::abs(w1 - gauge_transform_lambda(cplx(0.0), 1, 0, cs)) == 0.0);
  // shifts compose additively
  const cplx lam(0.7, -0.4);
  const cplx two_step =
      gauge_transform_lambda(gauge_transform_lambda(lam, 1, 0, cs), 0, 1, cs);
  CHECK(std::abs(two_step - (lam + w1 + w2)) <= 1e-14);

  Rng rng(83);
  for (int t = 0; t < 25; ++t) {
    const cplx l0 = 4.0 * rng.cnormal();
    const ModuliPoint r1 = moduli_reduce(l0, {cplx(1.0)}, cs);
    const ModuliPoint r2 = moduli_reduce(r1.lambda, r1.amplitudes, cs);
    CHECK(std::abs(r1.lambda - r2.lambda) <= 1e-9);
    // lattice translates land on the same representative
    const ModuliPoint r3 = moduli_reduce(l0 + w1 - 2.0 * w2, {cplx(1.0)}, cs);
    CHECK(std::abs(r1.lambda - r3.lambda) <= 1e-9);
  }
}

TEST_CASE("small instanton build") {
  InstantonConfig ic;
  ic.geometry = ModuleGeometry::create(0, 1, -1.0 / 0.37);
  ic.half_width = 8;
  const ProjectionBuilder builder(ic);
  const BuildResult res = builder.build();
  CHECK(res.ls_rel_residual <= 1e-5);
  CHECK(res.gram_lower_bound > 0.0);
  CHECK(res.post_purify_idempotency <= 1e-6);
  CHECK(res.post_purify_idempotency <= res.pre_purify_idempotency);
  CHECK(res.report.trace == doctest::Approx(0.37).epsilon(1e-5));
  CHECK(res.report.charge_rounded == kInstantonChargeSign);
  CHECK(std::abs(res.report.charge_raw + 1.0) <= 1e-4);
  CHECK(res.report.action == doctest::Approx(2.0).epsilon(1e-2));
  CHECK(res.report.sd_residual < res.report.asd_residual);

  // gauge invariance of the projection: psi -> psi g for unitary g
  const BuildResult shifted = builder.build(
      ic.tau, gauge_transform_lambda(0.0, 1, 0, ConformalStructure(ic.tau)),
      {}, false);
  CHECK(l1_norm(res.projection - shifted.projection) <= 1e-6);

  // window too small for the tolerance
  InstantonConfig tiny = ic;
  tiny.half_width = 4;
  CHECK_THROWS_AS((void)build_projection(tiny), WindowError);
}

TEST_CASE("moduli scan flags equivalent pairs and failures") {
  InstantonConfig ic;
  ic.geometry = ModuleGeometry::create(0, 1, -1.0 / 0.37);
  ic.half_width = 8;
  const ConformalStructure cs(ic.tau);
  const auto [w1, w2] = moduli_lattice(cs);
  std::vector<ScanSample> samples(2);
  samples[0].lambda = cplx(0.3, 0.1);
  samples[1].lambda = samples[0].lambda + w2;
  samples[1].equivalent_to = 0;
  const std::vector<ScanRow> rows = moduli_scan(ic, samples);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].build_ok);
  CHECK(rows[1].build_ok);
  CHECK(rows[1].distance_to_equivalent >= 0.0);
  CHECK(rows[1].distance_to_equivalent <= 1e-6);
  CHECK(std::abs(rows[0].reduced.lambda - rows[1].reduced.lambda) <= 1e-9);
}
