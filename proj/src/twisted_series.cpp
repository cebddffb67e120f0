#include "nct/twisted_series.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "nct/rng.hpp"

namespace nct {

TwistedSeries::TwistedSeries(double theta, int half_width)
    : theta_(theta), half_width_(half_width) {
  if (half_width < 0) throw ParameterError("half_width must be >= 0");
  if (!std::isfinite(theta)) throw ParameterError("theta must be finite");
}

TwistedSeries TwistedSeries::unit(double theta, int half_width) {
  TwistedSeries s(theta, half_width);
  s.set(0, 0, cplx(1.0, 0.0));
  return s;
}

TwistedSeries TwistedSeries::monomial(double theta, int half_width, int m,
                                      int n, cplx c) {
  TwistedSeries s(theta, half_width);
  s.set(m, n, c);
  return s;
}

cplx TwistedSeries::coeff(int m, int n) const {
  auto it = coeffs_.find(Index{m, n});
  return it == coeffs_.end() ? cplx(0.0, 0.0) : it->second;
}

void TwistedSeries::set(int m, int n, cplx v) {
  if (std::abs(m) > half_width_ || std::abs(n) > half_width_) {
    throw ParameterError("coefficient index outside declared window");
  }
  if (v == cplx(0.0, 0.0)) {
    coeffs_.erase(Index{m, n});
  } else {
    coeffs_[Index{m, n}] = v;
  }
}

void TwistedSeries::add(int m, int n, cplx v) { set(m, n, coeff(m, n) + v); }

TwistedSeries& TwistedSeries::operator+=(const TwistedSeries& other) {
  if (!theta_compatible(*this, other)) {
    throw ParameterError("theta mismatch in series addition");
  }
  half_width_ = std::max(half_width_, other.half_width_);
  for (const auto& [idx, v] : other.coeffs_) {
    auto [it, inserted] = coeffs_.try_emplace(idx, v);
    if (!inserted) it->second += v;
  }
  return *this;
}

TwistedSeries& TwistedSeries::operator-=(const TwistedSeries& other) {
  if (!theta_compatible(*this, other)) {
    throw ParameterError("theta mismatch in series subtraction");
  }
  half_width_ = std::max(half_width_, other.half_width_);
  for (const auto& [idx, v] : other.coeffs_) {
    auto [it, inserted] = coeffs_.try_emplace(idx, -v);
    if (!inserted) it->second -= v;
  }
  return *this;
}

TwistedSeries& TwistedSeries::operator*=(cplx scalar) {
  for (auto& [idx, v] : coeffs_) v *= scalar;
  return *this;
}

void TwistedSeries::prune(double abs_tol) {
  for (auto it = coeffs_.begin(); it != coeffs_.end();) {
    if (std::abs(it->second) <= abs_tol) {
      it = coeffs_.erase(it);
    } else {
      ++it;
    }
  }
}

cplx twist_phase(double theta, double k) {
  double tr = theta - std::floor(theta);
  double x = tr * k;
  x -= std::floor(x);
  return std::polar(1.0, 2.0 * kPi * x);
}

bool theta_compatible(const TwistedSeries& a, const TwistedSeries& b,
                      double tol) {
  return std::abs(a.theta() - b.theta()) <= tol;
}

namespace {

// Phase cache for e^{2 pi i theta k} over the integer range needed by one
// convolution; filled lazily.
class PhaseTable {
 public:
  PhaseTable(double theta, long long max_abs_k)
      : theta_(theta), offset_(max_abs_k),
        values_(2 * max_abs_k + 1, cplx(0.0, 0.0)),
        filled_(2 * max_abs_k + 1, false) {}

  cplx get(long long k) {
    std::size_t i = static_cast<std::size_t>(k + offset_);
    if (!filled_[i]) {
      values_[i] = twist_phase(theta_, static_cast<double>(k));
      filled_[i] = true;
    }
    return values_[i];
  }

 private:
  double theta_;
  long long offset_;
  std::vector<cplx> values_;
  std::vector<bool> filled_;
};

TwistedSeries convolve(const TwistedSeries& a, const TwistedSeries& b,
                       int out_window) {
  TwistedSeries out(a.theta(), out_window);
  long long wa = a.half_width(), wb = b.half_width();
  PhaseTable phases(a.theta(), std::max<long long>(1, wa * wb));
  std::map<Index, cplx> acc;
  for (const auto& [ia, ca] : a.coeffs()) {
    for (const auto& [ib, cb] : b.coeffs()) {
      // (U1^m U2^n)(U1^m' U2^n') = e^{2 pi i theta n m'} U1^{m+m'} U2^{n+n'}
      cplx v = ca * cb * phases.get(static_cast<long long>(ia.n) * ib.m);
      Index t{ia.m + ib.m, ia.n + ib.n};
      auto [it, inserted] = acc.try_emplace(t, v);
      if (!inserted) it->second += v;
    }
  }
  for (const auto& [idx, v] : acc) {
    if (v != cplx(0.0, 0.0)) out.set(idx.m, idx.n, v);
  }
  return out;
}

}  // namespace

TwistedSeries multiply_full(const TwistedSeries& a, const TwistedSeries& b) {
  if (!theta_compatible(a, b)) {
    throw ParameterError("theta mismatch in series product");
  }
  return convolve(a, b, a.half_width() + b.half_width());
}

std::pair<TwistedSeries, TailReport> multiply(const TwistedSeries& a,
                                              const TwistedSeries& b) {
  TwistedSeries full = multiply_full(a, b);
  return truncate(full, std::max(a.half_width(), b.half_width()));
}

std::pair<TwistedSeries, TailReport> truncate(const TwistedSeries& a,
                                              int half_width) {
  TwistedSeries out(a.theta(), half_width);
  TailReport report;
  for (const auto& [idx, v] : a.coeffs()) {
    if (std::abs(idx.m) <= half_width && std::abs(idx.n) <= half_width) {
      out.set(idx.m, idx.n, v);
    } else {
      report.discarded_mass += std::abs(v);
      if (std::max(std::abs(idx.m), std::abs(idx.n)) >
          std::max(std::abs(report.max_index_touched.m),
                   std::abs(report.max_index_touched.n))) {
        report.max_index_touched = idx;
      }
    }
  }
  return {std::move(out), report};
}

TwistedSeries adjoint(const TwistedSeries& a) {
  TwistedSeries out(a.theta(), a.half_width());
  for (const auto& [idx, v] : a.coeffs()) {
    cplx phase = twist_phase(a.theta(), static_cast<double>(idx.m) * idx.n);
    out.set(-idx.m, -idx.n, std::conj(v) * phase);
  }
  return out;
}

cplx trace(const TwistedSeries& a) { return a.coeff(0, 0); }

cplx pair_trace(const TwistedSeries& a, const TwistedSeries& b) {
  if (!theta_compatible(a, b)) {
    throw ParameterError("theta mismatch in pair_trace");
  }
  cplx tot(0.0, 0.0);
  for (const auto& [ia, ca] : a.coeffs()) {
    cplx cb = b.coeff(-ia.m, -ia.n);
    if (cb == cplx(0.0, 0.0)) continue;
    tot += ca * cb * twist_phase(a.theta(), -static_cast<double>(ia.n) * ia.m);
  }
  return tot;
}

cplx triple_trace(const TwistedSeries& a, const TwistedSeries& b,
                  const TwistedSeries& c) {
  if (!theta_compatible(a, b) || !theta_compatible(a, c)) {
    throw ParameterError("theta mismatch in triple_trace");
  }
  cplx tot(0.0, 0.0);
  for (const auto& [ia, ca] : a.coeffs()) {
    for (const auto& [ib, cb] : b.coeffs()) {
      cplx cc = c.coeff(-(ia.m + ib.m), -(ia.n + ib.n));
      if (cc == cplx(0.0, 0.0)) continue;
      double k = static_cast<double>(ia.n) * ib.m -
                 static_cast<double>(ia.n + ib.n) * (ia.m + ib.m);
      tot += ca * cb * cc * twist_phase(a.theta(), k);
    }
  }
  return tot;
}

TwistedSeries derive(const TwistedSeries& a, int axis) {
  if (axis != 1 && axis != 2) throw ParameterError("axis must be 1 or 2");
  TwistedSeries out(a.theta(), a.half_width());
  for (const auto& [idx, v] : a.coeffs()) {
    int k = (axis == 1) ? idx.m : idx.n;
    if (k == 0) continue;
    out.set(idx.m, idx.n, v * cplx(0.0, 2.0 * kPi * k));
  }
  return out;
}

TwistedSeries holo_derive(const TwistedSeries& a, const ConformalStructure& cs,
                          bool conjugated) {
  cplx c1 = conjugated ? cs.antiholo_c1 : cs.holo_c1;
  cplx c2 = conjugated ? cs.antiholo_c2 : cs.holo_c2;
  TwistedSeries out = c1 * derive(a, 1);
  out += c2 * derive(a, 2);
  return out;
}

TwistedSeries laplacian(const TwistedSeries& a, const ConformalStructure& cs) {
  TwistedSeries out(a.theta(), a.half_width());
  for (const auto& [idx, v] : a.coeffs()) {
    double quad = cs.inverse_metric_quadratic(idx.m, idx.n);
    if (quad == 0.0) continue;
    out.set(idx.m, idx.n, v * (-4.0 * kPi * kPi * quad));
  }
  return out;
}

double l1_norm(const TwistedSeries& a) {
  double tot = 0.0;
  for (const auto& [idx, v] : a.coeffs()) tot += std::abs(v);
  return tot;
}

double coeff_norm(const TwistedSeries& a) {
  double tot = 0.0;
  for (const auto& [idx, v] : a.coeffs()) tot += std::norm(v);
  return std::sqrt(tot);
}

int effective_radius(const TwistedSeries& a, double rel_tol) {
  double mx = 0.0;
  for (const auto& [idx, v] : a.coeffs()) mx = std::max(mx, std::abs(v));
  if (mx == 0.0) return 0;
  int rad = 0;
  for (const auto& [idx, v] : a.coeffs()) {
    if (std::abs(v) > rel_tol * mx) {
      rad = std::max({rad, std::abs(idx.m), std::abs(idx.n)});
    }
  }
  return rad;
}

double hermiticity_defect(const TwistedSeries& a) {
  return coeff_norm(a - adjoint(a));
}

namespace {

// Dense state vector over the window lattice |m|,|n| <= W.
struct WindowRep {
  int W;
  int side;  // 2W+1

  explicit WindowRep(int window) : W(window), side(2 * window + 1) {}

  std::size_t dim() const {
    return static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
  }
  std::size_t flat(int m, int n) const {
    return static_cast<std::size_t>(m + W) * side + (n + W);
  }
};

// y += (a * x) truncated to the window; x, y flat vectors on the lattice.
void apply_left_mult(const TwistedSeries& a, const WindowRep& rep,
                     const std::vector<cplx>& x, std::vector<cplx>& y) {
  std::fill(y.begin(), y.end(), cplx(0.0, 0.0));
  const int W = rep.W;
  std::vector<cplx> row(static_cast<std::size_t>(rep.side));
  for (const auto& [ia, ca] : a.coeffs()) {
    // phase depends only on n_a * j where j is the U1 exponent of the basis
    for (int j = -W; j <= W; ++j) {
      row[static_cast<std::size_t>(j + W)] =
          ca * twist_phase(a.theta(), static_cast<double>(ia.n) * j);
    }
    int jlo = std::max(-W, -W - ia.m), jhi = std::min(W, W - ia.m);
    int klo = std::max(-W, -W - ia.n), khi = std::min(W, W - ia.n);
    for (int j = jlo; j <= jhi; ++j) {
      const cplx f = row[static_cast<std::size_t>(j + W)];
      const cplx* src = &x[rep.flat(j, klo)];
      cplx* dst = &y[rep.flat(j + ia.m, klo + ia.n)];
      for (int k = 0; k <= khi - klo; ++k) dst[k] += f * src[k];
    }
  }
}

double vec_norm(const std::vector<cplx>& v) {
  double t = 0.0;
  for (const cplx& z : v) t += std::norm(z);
  return std::sqrt(t);
}

cplx vec_dot(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  cplx t(0.0, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) t += std::conj(a[i]) * b[i];
  return t;
}

// Largest eigenvalue of the symmetric tridiagonal matrix (alpha, beta) by
// bisection on the Sturm count.
double tridiag_max_eig(const std::vector<double>& alpha,
                       const std::vector<double>& beta) {
  std::size_t n = alpha.size();
  double hi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = std::abs(alpha[i]);
    if (i > 0) r += std::abs(beta[i - 1]);
    if (i + 1 < n) r += std::abs(beta[i]);
    hi = std::max(hi, r);
  }
  double lo = -hi;
  auto count_below = [&](double x) {
    // number of eigenvalues < x
    int count = 0;
    double d = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      double b2 = (i > 0) ? beta[i - 1] * beta[i - 1] : 0.0;
      d = alpha[i] - x - (d != 0.0 ? b2 / d : b2 / 1e-300);
      if (d < 0.0) ++count;
    }
    return count;
  };
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi));
       ++it) {
    double mid = 0.5 * (lo + hi);
    if (count_below(mid) >= static_cast<int>(n)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace

double norm_estimate(const TwistedSeries& a, int window) {
  if (a.empty()) return 0.0;
  TwistedSeries work = a;
  work.prune(1e-250);
  {
    double mx = 0.0;
    for (const auto& [idx, v] : work.coeffs()) mx = std::max(mx, std::abs(v));
    // The dropped l1 mass is far below the stagnation tolerance of the
    // Lanczos loop, so it cannot move the reported estimate.
    work.prune(1e-13 * mx);
  }
  if (work.empty()) return 0.0;
  const int rad = effective_radius(work, 0.0);
  // All surviving coefficients live within |m|,|n| <= rad; re-window so the
  // lattice is sized by the actual support, not the declared window.
  work = truncate(work, rad).first;
  if (window == 0) {
    window = rad + std::max(rad / 2, 8);
  }
  if (window < rad) {
    throw ParameterError("norm_estimate window must cover the series support");
  }
  // Cap the lattice dimension; the estimate stays monotone from below.
  while ((2 * window + 1) * (2 * window + 1) > 140000 && window > rad + 4) {
    --window;
  }

  WindowRep rep(window);
  const std::size_t d = rep.dim();
  TwistedSeries astar = adjoint(work);

  // Lanczos on B = L_{a*} T L_a with full reorthogonalization.
  Rng rng(0x5eedULL);
  std::vector<cplx> v(d);
  for (auto& z : v) z = cplx(rng.normal(), rng.normal());
  double nv = vec_norm(v);
  for (auto& z : v) z /= nv;

  std::vector<std::vector<cplx>> basis;
  std::vector<double> alpha, beta;
  std::vector<cplx> tmp(d), w(d);
  const int max_iter = static_cast<int>(std::min<std::size_t>(d, 60));
  double prev = -1.0;
  for (int it = 0; it < max_iter; ++it) {
    basis.push_back(v);
    apply_left_mult(work, rep, v, tmp);
    apply_left_mult(astar, rep, tmp, w);
    double al = vec_dot(v, w).real();
    alpha.push_back(al);
    // w -= alpha v + beta v_prev, then full reorthogonalization
    for (std::size_t i = 0; i < d; ++i) w[i] -= al * v[i];
    if (!beta.empty()) {
      const auto& vp = basis[basis.size() - 2];
      double b = beta.back();
      for (std::size_t i = 0; i < d; ++i) w[i] -= b * vp[i];
    }
    for (const auto& u : basis) {
      cplx c = vec_dot(u, w);
      for (std::size_t i = 0; i < d; ++i) w[i] -= c * u[i];
    }
    double b = vec_norm(w);
    double cur = tridiag_max_eig(alpha, beta);
    if (b < 1e-14 * std::max(1.0, std::abs(al))) break;
    if (it >= 8 && std::abs(cur - prev) < 3e-6 * std::max(cur, 1e-300)) break;
    prev = cur;
    beta.push_back(b);
    for (std::size_t i = 0; i < d; ++i) v[i] = w[i] / b;
  }
  double lam = tridiag_max_eig(alpha, beta);
  return lam > 0.0 ? std::sqrt(lam) : 0.0;
}

double spectral_lower_bound(const TwistedSeries& a, int window) {
  double c = norm_estimate(a, window);
  if (c == 0.0) return 0.0;
  TwistedSeries shifted = TwistedSeries::unit(a.theta(), a.half_width());
  shifted *= cplx(c, 0.0);
  shifted -= a;
  return c - norm_estimate(shifted, window);
}

namespace {

TwistedSeries hermitize(const TwistedSeries& a) {
  TwistedSeries out = a + adjoint(a);
  out *= cplx(0.5, 0.0);
  return out;
}

}  // namespace

TwistedSeries purify(const TwistedSeries& a, int max_iters, double tol) {
  const double scale = std::max(1.0, l1_norm(a));
  if (hermiticity_defect(a) > 1e-8 * scale) {
    throw ParameterError("purify requires a hermitian input");
  }
  // Spectrum of a hermitian x lies in (-1/2, 3/2) when ||x^2 - x|| < 3/4.
  {
    TwistedSeries defect = multiply(a, a).first - a;
    double est = norm_estimate(defect);
    if (est >= 0.75) {
      throw ConvergenceError(
          "purify spectral precondition violated: ||a^2 - a|| estimate " +
              std::to_string(est) + " >= 0.75",
          est);
    }
  }
  TwistedSeries x = a;
  const int M = a.half_width();
  double res = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    TwistedSeries x2 = multiply(x, x).first;
    res = l1_norm(x2 - x);
    if (res <= tol) return x;
    TwistedSeries x3 = multiply(x2, x).first;
    TwistedSeries next = cplx(3.0, 0.0) * x2 - cplx(2.0, 0.0) * x3;
    x = hermitize(truncate(next, M).first);
  }
  TwistedSeries x2 = multiply(x, x).first;
  res = l1_norm(x2 - x);
  if (res <= tol) return x;
  // The cheap l1 monitor may floor on truncation tails; fall back to the
  // operator-norm estimate before declaring failure.
  if (norm_estimate(x2 - x) <= tol) return x;
  throw ConvergenceError("purify iteration budget exhausted, residual " +
                             std::to_string(res),
                         res);
}

TwistedSeries invert_newton_schulz(const TwistedSeries& a, int max_iters,
                                   double tol) {
  const double scale = std::max(1.0, l1_norm(a));
  if (hermiticity_defect(a) > 1e-8 * scale) {
    throw ParameterError("invert_newton_schulz requires a hermitian input");
  }
  double lb = spectral_lower_bound(a);
  if (lb <= 0.0) {
    throw InvertibilityError(
        "element is not numerically positive (spectral lower bound " +
        std::to_string(lb) + "): Gram invertibility check failed");
  }
  const int M = a.half_width();
  const double l1 = l1_norm(a);
  TwistedSeries x = adjoint(a);
  x *= cplx(1.0 / (l1 * l1), 0.0);
  const TwistedSeries one = TwistedSeries::unit(a.theta(), M);
  double res = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    TwistedSeries ax = multiply(a, x).first;
    res = l1_norm(one - ax);
    if (res <= tol) return x;
    TwistedSeries two_minus = cplx(2.0, 0.0) * one - ax;
    x = truncate(multiply_full(x, two_minus), M).first;
  }
  {
    TwistedSeries ax = multiply(a, x).first;
    res = l1_norm(one - ax);
    if (res <= tol) return x;
    if (norm_estimate(ax - one) <= tol) return x;
  }
  throw ConvergenceError(
      "Newton-Schulz iteration budget exhausted, residual " +
          std::to_string(res),
      res);
}

}  // namespace nct
