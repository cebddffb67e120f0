#include "nct/heisenberg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>

#include "nct/rng.hpp"

namespace nct {

namespace {

constexpr double kTwoPi = 2.0 * kPi;

int mod_q(int k, int q) {
  int m = k % q;
  return m < 0 ? m + q : m;
}

/// Distance between two reals on the circle R/Z.
double circle_dist(double x, double y) {
  double d = std::fmod(x - y, 1.0);
  if (d < 0.0) d += 1.0;
  return std::min(d, 1.0 - d);
}

/// t(s - d): the translation lands entirely in the exponent constants.
GaussPolyTerm shifted(const GaussPolyTerm& t, double d) {
  GaussPolyTerm out;
  out.alpha_exp = t.alpha_exp;
  out.beta_exp = t.beta_exp - 2.0 * t.alpha_exp * d;
  out.gamma_exp = t.gamma_exp + t.alpha_exp * d * d - t.beta_exp * d;
  const std::size_t deg = t.poly.size();
  out.poly.assign(deg, cplx(0.0, 0.0));
  // P(s - d) by the binomial theorem, row by row of Pascal's triangle.
  for (std::size_t i = 0; i < deg; ++i) {
    double binom = 1.0;
    double power = 1.0;
    for (std::size_t j = 0; j <= i; ++j) {
      const std::size_t k = i - j;  // target power of s
      out.poly[k] += t.poly[i] * binom * power;
      binom *= static_cast<double>(i - j) / static_cast<double>(j + 1);
      power *= -d;
    }
  }
  return out;
}

/// t(s) * scalar * e^{beta_add s} for a modulus-one scalar.
GaussPolyTerm phased(const GaussPolyTerm& t, cplx beta_add, cplx scalar) {
  GaussPolyTerm out;
  out.alpha_exp = t.alpha_exp;
  out.beta_exp = t.beta_exp + beta_add;
  out.gamma_exp = t.gamma_exp;
  out.poly.reserve(t.poly.size());
  for (cplx c : t.poly) out.poly.push_back(c * scalar);
  return out;
}

/// Exact integral over R of conj(x)(s) y(s) ds.
cplx term_pair_integral(const GaussPolyTerm& x, const GaussPolyTerm& y) {
  if (x.poly.empty() || y.poly.empty()) return 0.0;
  const cplx a = std::conj(x.alpha_exp) + y.alpha_exp;
  const cplx b = std::conj(x.beta_exp) + y.beta_exp;
  const cplx g = std::conj(x.gamma_exp) + y.gamma_exp;
  if (!(a.real() < 0.0)) {
    throw IntegrabilityError(
        "gaussian pair integral requires Re(alpha) < 0 for integrability");
  }
  const std::size_t deg = x.poly.size() + y.poly.size() - 1;
  std::vector<cplx> conv(deg, cplx(0.0, 0.0));
  for (std::size_t i = 0; i < x.poly.size(); ++i) {
    const cplx xc = std::conj(x.poly[i]);
    for (std::size_t j = 0; j < y.poly.size(); ++j) {
      conv[i + j] += xc * y.poly[j];
    }
  }
  // All exponential scales meet here, inside one exponent.
  const cplx expo = g - b * b / (4.0 * a);
  if (expo.real() > 700.0) {
    throw Error("gaussian pair integral overflows double range");
  }
  cplx total = 0.0;
  cplx mom_prev2 = 0.0, mom_prev = 0.0;
  for (std::size_t j = 0; j < deg; ++j) {
    cplx mom;
    if (j == 0) {
      mom = std::sqrt(kPi / (-a)) * std::exp(expo);
    } else if (j == 1) {
      mom = -b * mom_prev / (2.0 * a);
    } else {
      mom = -(static_cast<double>(j - 1) * mom_prev2 + b * mom_prev) /
            (2.0 * a);
    }
    total += conv[j] * mom;
    mom_prev2 = mom_prev;
    mom_prev = mom;
  }
  return total;
}

void check_same_module(const GaussPolySection& x, const GaussPolySection& y,
                       const char* who) {
  if (!x.geom.same_module(y.geom)) {
    throw ParameterError(std::string(who) +
                         ": sections live on different modules");
  }
}

/// One pass of the inner_alpha coefficient for a single lattice index.
cplx inner_alpha_coeff(const GaussPolySection& xi, const GaussPolySection& eta,
                       int m, int n, HermitianOrdering ordering) {
  switch (ordering) {
    case HermitianOrdering::InverseZ2ThenZ1:
      return l2_inner(
          xi, act_right_monomial(act_right_monomial(eta, 0, -n), -m, 0));
    case HermitianOrdering::InverseZ1ThenZ2:
      return l2_inner(
          xi, act_right_monomial(act_right_monomial(eta, -m, 0), 0, -n));
    case HermitianOrdering::DirectZ2ThenZ1:
      return l2_inner(
          xi, act_right_monomial(act_right_monomial(eta, 0, n), m, 0));
    case HermitianOrdering::DirectZ1ThenZ2:
      return l2_inner(
          xi, act_right_monomial(act_right_monomial(eta, m, 0), 0, n));
  }
  throw ParameterError("inner_alpha: unknown ordering");
}

}  // namespace

ModuleGeometry ModuleGeometry::create(int r, int q, double alpha) {
  if (q < 1) {
    throw ParameterError("module geometry requires q >= 1");
  }
  if (std::gcd(std::abs(r), q) != 1) {
    throw ParameterError("module geometry requires gcd(r, q) = 1");
  }
  const double denom = static_cast<double>(r) - q * alpha;
  if (std::abs(denom) < 1e-12) {
    throw ParameterError("module geometry requires r - q alpha != 0");
  }

  // Extended gcd on (r, q), then the canonical Bezout pair: a r + b q = 1
  // with |a| minimal, ties resolved toward the smaller a.
  long long old_r = r, cur_r = q;
  long long old_s = 1, cur_s = 0;
  while (cur_r != 0) {
    const long long quot = old_r / cur_r;
    long long tmp = old_r - quot * cur_r;
    old_r = cur_r;
    cur_r = tmp;
    tmp = old_s - quot * cur_s;
    old_s = cur_s;
    cur_s = tmp;
  }
  long long g = old_r, a0 = old_s;
  if (g < 0) {
    g = -g;
    a0 = -a0;
  }
  // g == 1 by the gcd check above.
  long long best_a = a0;
  const long long t0 = std::llround(-static_cast<double>(a0) / q);
  for (long long t = t0 - 1; t <= t0 + 1; ++t) {
    const long long cand = a0 + t * q;
    if (std::abs(cand) < std::abs(best_a) ||
        (std::abs(cand) == std::abs(best_a) && cand < best_a)) {
      best_a = cand;
    }
  }
  const long long best_b = (1 - best_a * r) / q;

  ModuleGeometry gm;
  gm.r = r;
  gm.q = q;
  gm.alpha = alpha;
  gm.a = static_cast<int>(best_a);
  gm.b = static_cast<int>(best_b);
  gm.epsilon = static_cast<double>(r) / q - alpha;
  gm.theta = (best_a * alpha + best_b) / denom;
  return gm;
}

void GaussPolySection::add_term(int k, GaussPolyTerm t) {
  if (k < 0 || k >= static_cast<int>(comps.size())) {
    throw ParameterError("section component index out of range");
  }
  if (!(t.alpha_exp.real() < 0.0)) {
    throw IntegrabilityError(
        "gaussian term requires Re(alpha_exp) < 0 for integrability");
  }
  comps[static_cast<std::size_t>(k)].push_back(std::move(t));
}

cplx gauss_moment(int j, cplx alpha, cplx beta) {
  if (!(alpha.real() < 0.0)) {
    throw IntegrabilityError(
        "gaussian moment requires Re(alpha) < 0 for integrability");
  }
  if (j < 0) throw ParameterError("gaussian moment order must be >= 0");
  const cplx i0 = std::sqrt(kPi / (-alpha)) * std::exp(-beta * beta /
                                                       (4.0 * alpha));
  if (j == 0) return i0;
  cplx prev2 = 0.0, prev = i0;
  for (int jj = 1; jj <= j; ++jj) {
    const cplx cur =
        -(static_cast<double>(jj - 1) * prev2 + beta * prev) / (2.0 * alpha);
    prev2 = prev;
    prev = cur;
  }
  return prev;
}

GaussPolySection add(const GaussPolySection& x, const GaussPolySection& y) {
  check_same_module(x, y, "add");
  GaussPolySection out = x;
  for (std::size_t k = 0; k < out.comps.size(); ++k) {
    out.comps[k].insert(out.comps[k].end(), y.comps[k].begin(),
                        y.comps[k].end());
  }
  return out;
}

GaussPolySection scale(cplx c, const GaussPolySection& x) {
  GaussPolySection out = x;
  for (auto& comp : out.comps) {
    for (auto& term : comp) {
      for (auto& coef : term.poly) coef *= c;
    }
  }
  return out;
}

GaussPolySection sub(const GaussPolySection& x, const GaussPolySection& y) {
  return add(x, scale(cplx(-1.0, 0.0), y));
}

cplx l2_inner(const GaussPolySection& x, const GaussPolySection& y) {
  check_same_module(x, y, "l2_inner");
  cplx total = 0.0;
  for (std::size_t k = 0; k < x.comps.size(); ++k) {
    for (const auto& tx : x.comps[k]) {
      for (const auto& ty : y.comps[k]) {
        total += term_pair_integral(tx, ty);
      }
    }
  }
  return total;
}

double l2_norm(const GaussPolySection& x) {
  return std::sqrt(std::max(0.0, l2_inner(x, x).real()));
}

GaussPolySection compress(const GaussPolySection& x, double rel_tol) {
  GaussPolySection out = GaussPolySection::zero(x.geom);
  for (std::size_t k = 0; k < x.comps.size(); ++k) {
    auto& merged = out.comps[k];
    for (const auto& raw : x.comps[k]) {
      if (raw.poly.empty()) continue;
      // Canonical split: the phase of the constant prefactor lives in the
      // polynomial, not in gamma. Operator orderings that only differ in
      // this split then merge (and cancel) exactly.
      GaussPolyTerm t = raw;
      if (t.gamma_exp.imag() != 0.0) {
        const cplx ph = std::polar(1.0, t.gamma_exp.imag());
        for (cplx& c : t.poly) c *= ph;
        t.gamma_exp = cplx(t.gamma_exp.real(), 0.0);
      }
      bool placed = false;
      for (auto& m : merged) {
        const double sa = 1.0 + std::abs(m.alpha_exp);
        const double sb = 1.0 + std::abs(m.beta_exp);
        const double sg = 1.0 + std::abs(m.gamma_exp);
        if (std::abs(m.alpha_exp - t.alpha_exp) <= 1e-12 * sa &&
            std::abs(m.beta_exp - t.beta_exp) <= 1e-12 * sb &&
            std::abs(m.gamma_exp - t.gamma_exp) <= 1e-12 * sg) {
          if (m.poly.size() < t.poly.size()) m.poly.resize(t.poly.size());
          for (std::size_t j = 0; j < t.poly.size(); ++j) m.poly[j] += t.poly[j];
          placed = true;
          break;
        }
      }
      if (!placed) merged.push_back(t);
    }
  }
  if (rel_tol > 0.0) {
    const double floor = rel_tol * l2_norm(out);
    for (auto& comp : out.comps) {
      std::erase_if(comp, [floor](const GaussPolyTerm& t) {
        const double tn =
            std::sqrt(std::max(0.0, term_pair_integral(t, t).real()));
        return tn <= floor;
      });
    }
  }
  return out;
}

GaussPolySection act_right_monomial(const GaussPolySection& xi, int m, int n) {
  const ModuleGeometry& g = xi.geom;
  GaussPolySection out = GaussPolySection::zero(g);
  const double d = m * g.epsilon;
  for (int k = 0; k < g.q; ++k) {
    const auto& src = xi.comps[static_cast<std::size_t>(mod_q(k - m * g.r, g.q))];
    // phase of Z2^n at component k: e^{2 pi i n (s - k/q)}
    const cplx beta_add(0.0, kTwoPi * n);
    const cplx scalar = std::polar(1.0, -kTwoPi * n * k / g.q);
    auto& dst = out.comps[static_cast<std::size_t>(k)];
    dst.reserve(src.size());
    for (const auto& t : src) {
      dst.push_back(phased(m != 0 ? shifted(t, d) : t, beta_add, scalar));
    }
  }
  return out;
}

GaussPolySection act_right(const GaussPolySection& xi, const TwistedSeries& f) {
  if (circle_dist(f.theta(), xi.geom.alpha) > 1e-9) {
    throw ParameterError(
        "act_right: series parameter does not match the module alpha (mod 1)");
  }
  GaussPolySection out = GaussPolySection::zero(xi.geom);
  for (const auto& [idx, c] : f.coeffs()) {
    out = add(out, scale(c, act_right_monomial(xi, idx.m, idx.n)));
  }
  return compress(out, 0.0);
}

GaussPolySection act_left_monomial(const GaussPolySection& xi, int m, int n) {
  const ModuleGeometry& g = xi.geom;
  // U2^n first: component k gains e^{2 pi i n (s/eps - a k)/q}.
  GaussPolySection mid = GaussPolySection::zero(g);
  const cplx beta_add(0.0, kTwoPi * n / (g.q * g.epsilon));
  for (int k = 0; k < g.q; ++k) {
    const cplx scalar =
        std::polar(1.0, -kTwoPi * static_cast<double>(n) * g.a * k / g.q);
    auto& dst = mid.comps[static_cast<std::size_t>(k)];
    const auto& src = xi.comps[static_cast<std::size_t>(k)];
    dst.reserve(src.size());
    for (const auto& t : src) dst.push_back(phased(t, beta_add, scalar));
  }
  if (m == 0) return mid;
  // Then U1^m: xi(s - m/q, k - m).
  GaussPolySection out = GaussPolySection::zero(g);
  const double d = static_cast<double>(m) / g.q;
  for (int k = 0; k < g.q; ++k) {
    const auto& src = mid.comps[static_cast<std::size_t>(mod_q(k - m, g.q))];
    auto& dst = out.comps[static_cast<std::size_t>(k)];
    dst.reserve(src.size());
    for (const auto& t : src) dst.push_back(shifted(t, d));
  }
  return out;
}

GaussPolySection act_left(const TwistedSeries& f, const GaussPolySection& xi) {
  if (circle_dist(f.theta(), xi.geom.theta) > 1e-9) {
    throw ParameterError(
        "act_left: series parameter does not match the module theta (mod 1)");
  }
  GaussPolySection out = GaussPolySection::zero(xi.geom);
  for (const auto& [idx, c] : f.coeffs()) {
    out = add(out, scale(c, act_left_monomial(xi, idx.m, idx.n)));
  }
  return compress(out, 0.0);
}

GaussPolySection nabla(const GaussPolySection& xi, int axis) {
  if (axis != 1 && axis != 2) {
    throw ParameterError("nabla axis must be 1 or 2");
  }
  GaussPolySection out = GaussPolySection::zero(xi.geom);
  if (axis == 1) {
    const cplx c(0.0, kTwoPi / xi.geom.epsilon);
    for (std::size_t k = 0; k < xi.comps.size(); ++k) {
      for (const auto& t : xi.comps[k]) {
        GaussPolyTerm nt;
        nt.alpha_exp = t.alpha_exp;
        nt.beta_exp = t.beta_exp;
        nt.gamma_exp = t.gamma_exp;
        nt.poly.assign(t.poly.size() + 1, cplx(0.0, 0.0));
        for (std::size_t j = 0; j < t.poly.size(); ++j) {
          nt.poly[j + 1] = c * t.poly[j];
        }
        out.comps[k].push_back(std::move(nt));
      }
    }
    return out;
  }
  // d/ds (P e^{alpha s^2 + beta s}) = (P' + (2 alpha s + beta) P) e^{...}
  for (std::size_t k = 0; k < xi.comps.size(); ++k) {
    for (const auto& t : xi.comps[k]) {
      GaussPolyTerm nt;
      nt.alpha_exp = t.alpha_exp;
      nt.beta_exp = t.beta_exp;
      nt.gamma_exp = t.gamma_exp;
      nt.poly.assign(t.poly.size() + 1, cplx(0.0, 0.0));
      for (std::size_t j = 0; j < t.poly.size(); ++j) {
        if (j + 1 < t.poly.size()) {
          nt.poly[j] += static_cast<double>(j + 1) * t.poly[j + 1];
        }
        nt.poly[j] += t.beta_exp * t.poly[j];
        nt.poly[j + 1] += 2.0 * t.alpha_exp * t.poly[j];
      }
      out.comps[k].push_back(std::move(nt));
    }
  }
  return out;
}

GaussPolySection nabla_holo(const GaussPolySection& xi,
                            const ConformalStructure& cs, bool conjugated) {
  const cplx c1 = conjugated ? cs.antiholo_c1 : cs.holo_c1;
  const cplx c2 = conjugated ? cs.antiholo_c2 : cs.holo_c2;
  return compress(add(scale(c1, nabla(xi, 1)), scale(c2, nabla(xi, 2))), 0.0);
}

InnerAlphaResult inner_alpha(const GaussPolySection& xi,
                             const GaussPolySection& eta, int half_width,
                             HermitianOrdering ordering) {
  check_same_module(xi, eta, "inner_alpha");
  if (half_width < 0) throw ParameterError("inner_alpha window must be >= 0");
  InnerAlphaResult res{TwistedSeries(xi.geom.alpha, half_width), 0.0};
  for (int m = -half_width; m <= half_width; ++m) {
    for (int n = -half_width; n <= half_width; ++n) {
      const cplx c = inner_alpha_coeff(xi, eta, m, n, ordering);
      if (c != cplx(0.0, 0.0)) res.series.set(m, n, c);
    }
  }
  // First discarded ring, as a tail-mass estimate for the window choice.
  const int ring = half_width + 1;
  for (int m = -ring; m <= ring; ++m) {
    for (int n = -ring; n <= ring; ++n) {
      if (std::max(std::abs(m), std::abs(n)) != ring) continue;
      res.tail_estimate += std::abs(inner_alpha_coeff(xi, eta, m, n, ordering));
    }
  }
  return res;
}

std::vector<GaussPolySection> make_battery(const ModuleGeometry& geom,
                                           int count, std::uint64_t seed) {
  if (count < 1) throw ParameterError("battery needs at least one section");
  Rng rng(seed);
  const double eps_mag = std::abs(geom.epsilon);
  std::vector<GaussPolySection> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) {
    GaussPolySection s = GaussPolySection::zero(geom);
    for (int k = 0; k < geom.q; ++k) {
      GaussPolyTerm t;
      t.alpha_exp = cplx(-(0.4 + 1.5 * rng.uniform()) * kPi / eps_mag,
                         2.0 * (rng.uniform() - 0.5));
      t.beta_exp = cplx(3.0 * (rng.uniform() - 0.5),
                        6.0 * (rng.uniform() - 0.5));
      t.poly = {cplx(0.1 + rng.uniform(), 0.1 + rng.uniform())};
      s.add_term(k, std::move(t));
    }
    out.push_back(std::move(s));
  }
  return out;
}

struct EndomorphismSolver::Impl {
  Eigen::LDLT<Eigen::MatrixXcd> ldlt;
  std::vector<GaussPolySection> acted;  // U^{mn} zeta_j, index j * N + idx
};

EndomorphismSolver::EndomorphismSolver(ModuleGeometry geom, int half_width,
                                       std::vector<GaussPolySection> battery,
                                       double cond_bound)
    : geom_(geom),
      half_width_(half_width),
      battery_(std::move(battery)),
      impl_(std::make_unique<Impl>()) {
  if (half_width < 1) throw ParameterError("solver window must be >= 1");
  if (battery_.empty()) throw ParameterError("solver requires a battery");
  for (const auto& z : battery_) {
    if (!z.geom.same_module(geom_)) {
      throw ParameterError("battery section on a different module");
    }
  }
  const int M = half_width_;
  const int side = 2 * M + 1;
  const int N = side * side;

  // K_{pq} = sum_j <zeta_j, U^{pq} zeta_j> over the doubled window; the normal
  // matrix is A_{(mn),(m'n')} = e^{2 pi i theta n (m - m')} K_{m'-m, n'-n}
  // because the monomials act unitarily on L2.
  const int dside = 4 * M + 1;
  std::vector<cplx> K(static_cast<std::size_t>(dside) * dside, cplx(0.0, 0.0));
  for (int p = -2 * M; p <= 2 * M; ++p) {
    for (int qq = -2 * M; qq <= 2 * M; ++qq) {
      cplx v = 0.0;
      for (const auto& z : battery_) {
        v += l2_inner(z, act_left_monomial(z, p, qq));
      }
      K[static_cast<std::size_t>(p + 2 * M) * dside + (qq + 2 * M)] = v;
    }
  }

  Eigen::MatrixXcd A(N, N);
  auto flat = [M, side](int m, int n) { return (m + M) * side + (n + M); };
  for (int m = -M; m <= M; ++m) {
    for (int n = -M; n <= M; ++n) {
      const int row = flat(m, n);
      for (int mp = -M; mp <= M; ++mp) {
        const cplx ph = twist_phase(geom_.theta, static_cast<double>(n) *
                                                     (m - mp));
        for (int np = -M; np <= M; ++np) {
          A(row, flat(mp, np)) =
              ph * K[static_cast<std::size_t>(mp - m + 2 * M) * dside +
                     (np - n + 2 * M)];
        }
      }
    }
  }
  // Hermitize against rounding before factorizing.
  A = 0.5 * (A + A.adjoint()).eval();

  impl_->ldlt.compute(A);
  if (impl_->ldlt.info() != Eigen::Success) {
    throw BasisError("normal matrix factorization failed");
  }

  // Condition estimate: power iteration for the top eigenvalue, inverse
  // iteration through the factorization for the bottom one.
  Rng rng(0xbadc0ffeULL);
  Eigen::VectorXcd v(N);
  for (int i = 0; i < N; ++i) v(i) = rng.cnormal();
  v.normalize();
  double lam_max = 0.0;
  for (int it = 0; it < 80; ++it) {
    v = (A * v).eval();
    lam_max = v.norm();
    if (lam_max == 0.0) break;
    v /= lam_max;
  }
  Eigen::VectorXcd w(N);
  for (int i = 0; i < N; ++i) w(i) = rng.cnormal();
  w.normalize();
  double inv_norm = 0.0;
  for (int it = 0; it < 80; ++it) {
    w = impl_->ldlt.solve(w).eval();
    inv_norm = w.norm();
    if (!std::isfinite(inv_norm) || inv_norm == 0.0) break;
    w /= inv_norm;
  }
  const double lam_min = inv_norm > 0.0 ? 1.0 / inv_norm : 0.0;
  if (!(lam_min > 0.0) || !std::isfinite(inv_norm)) {
    throw BasisError("battery does not separate the window (singular normal "
                     "matrix); enlarge or reseed the battery");
  }
  condition_ = lam_max / lam_min;
  if (condition_ > cond_bound) {
    throw BasisError("normal matrix condition " + std::to_string(condition_) +
                     " exceeds the bound; enlarge or reseed the battery");
  }

  // Pre-acted battery for fast right-hand sides.
  impl_->acted.reserve(static_cast<std::size_t>(battery_.size()) * N);
  for (const auto& z : battery_) {
    for (int m = -M; m <= M; ++m) {
      for (int n = -M; n <= M; ++n) {
        impl_->acted.push_back(act_left_monomial(z, m, n));
      }
    }
  }
}

EndomorphismSolver::~EndomorphismSolver() = default;
EndomorphismSolver::EndomorphismSolver(EndomorphismSolver&&) noexcept = default;
EndomorphismSolver& EndomorphismSolver::operator=(EndomorphismSolver&&) noexcept =
    default;

EndomorphismFit EndomorphismSolver::solve(
    const std::vector<GaussPolySection>& targets) const {
  if (targets.size() != battery_.size()) {
    throw ParameterError("solver: one target per battery section required");
  }
  const int M = half_width_;
  const int side = 2 * M + 1;
  const int N = side * side;

  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(N);
  double target_sq = 0.0;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    check_same_module(targets[j], battery_[j], "solver");
    target_sq += std::max(0.0, l2_inner(targets[j], targets[j]).real());
    for (int idx = 0; idx < N; ++idx) {
      b(idx) += l2_inner(impl_->acted[j * static_cast<std::size_t>(N) +
                                      static_cast<std::size_t>(idx)],
                         targets[j]);
    }
  }
  const Eigen::VectorXcd t = impl_->ldlt.solve(b);
  const double misfit_sq =
      std::max(0.0, target_sq - (t.adjoint() * b)(0).real());

  EndomorphismFit fit{TwistedSeries(geom_.theta, M), 0.0, 0.0};
  for (int m = -M; m <= M; ++m) {
    for (int n = -M; n <= M; ++n) {
      const cplx c = t((m + M) * side + (n + M));
      if (c != cplx(0.0, 0.0)) fit.series.set(m, n, c);
    }
  }
  fit.residual = std::sqrt(misfit_sq);
  fit.rel_residual =
      target_sq > 0.0 ? fit.residual / std::sqrt(target_sq) : fit.residual;
  return fit;
}

EndomorphismFit inner_theta(const GaussPolySection& xi,
                            const GaussPolySection& eta,
                            const EndomorphismSolver& solver) {
  check_same_module(xi, eta, "inner_theta");
  std::vector<GaussPolySection> targets;
  targets.reserve(solver.battery().size());
  for (const auto& zeta : solver.battery()) {
    const auto inner = inner_alpha(eta, zeta, solver.half_width());
    targets.push_back(compress(act_right(xi, inner.series), 1e-17));
  }
  return solver.solve(targets);
}

double induced_derivation_defect(
    const std::vector<GaussPolySection>& sections) {
  if (sections.empty()) return 0.0;
  const ModuleGeometry& g = sections.front().geom;
  const cplx rate(0.0, kTwoPi / (g.q * g.epsilon));
  double worst = 0.0;
  for (const auto& xi : sections) {
    for (int u = 1; u <= 2; ++u) {
      for (int v = 1; v <= 2; ++v) {
        const GaussPolySection uxi =
            act_left_monomial(xi, v == 1 ? 1 : 0, v == 2 ? 1 : 0);
        GaussPolySection resid = sub(
            nabla(uxi, u),
            act_left_monomial(nabla(xi, u), v == 1 ? 1 : 0, v == 2 ? 1 : 0));
        if (u == v) resid = sub(resid, scale(rate, uxi));
        worst = std::max(worst, l2_norm(compress(resid, 0.0)));
      }
    }
  }
  return worst;
}

}  // namespace nct
