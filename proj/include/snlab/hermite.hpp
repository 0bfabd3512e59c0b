#pragma once

#include <snlab/errors.hpp>
#include <snlab/matrix.hpp>
#include <snlab/spectral.hpp>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace snlab {

inline constexpr std::size_t kMaxHermiteDegree = 60;
inline constexpr std::size_t kMaxExpansionOrder = 40;
inline constexpr std::size_t kDefaultExpansionOrder = 30;
inline constexpr std::size_t kQuadratureNodes = 200;

/// Probabilist's Hermite polynomial q_i(x): q_0 = 1, q_1 = x,
/// q_{i+1} = x q_i - i q_{i-1}.
inline double hermite_poly(std::size_t i, double x) {
  if (i > kMaxHermiteDegree)
    throw RangeError("hermite_poly: degree " + std::to_string(i) + " exceeds " +
                     std::to_string(kMaxHermiteDegree));
  if (i == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (std::size_t k = 1; k < i; ++k) {
    const double next = x * cur - static_cast<double>(k) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// q_0(x) .. q_n(x) in one pass.
inline std::vector<double> hermite_polys(std::size_t n, double x) {
  std::vector<double> q(n + 1);
  q[0] = 1.0;
  if (n >= 1) q[1] = x;
  for (std::size_t k = 1; k < n; ++k) q[k + 1] = x * q[k] - static_cast<double>(k) * q[k - 1];
  return q;
}

inline double factorial(std::size_t n) noexcept {
  double f = 1.0;
  for (std::size_t k = 2; k <= n; ++k) f *= static_cast<double>(k);
  return f;
}

/// Gauss-Hermite rule for the standard normal weight e^{-x^2/2}/sqrt(2 pi):
/// sum_k w_k f(x_k) approximates E[f(Z)], Z ~ N(0, 1).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

/// Number of eigenvalues below `x` of the physicist Jacobi matrix (zero diagonal,
/// off-diagonal sqrt(k/2)), by the Sturm sign count of its LDL^T factorization.
inline std::size_t jacobi_count_below(std::size_t n, double x) {
  std::size_t count = 0;
  double d = -x;
  if (d < 0.0) ++count;
  for (std::size_t k = 1; k < n; ++k) {
    if (d == 0.0) d = 1e-300;
    d = -x - 0.5 * static_cast<double>(k) / d;
    if (d < 0.0) ++count;
  }
  return count;
}

/// Orthonormal physicist Hermite recurrence at z: returns (p_n(z), p_{n-1}(z)).
inline std::pair<double, double> orthonormal_hermite(std::size_t n, double z) {
  double p1 = 1.0 / std::pow(std::numbers::pi, 0.25);
  double p2 = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double p3 = p2;
    p2 = p1;
    const double jd = static_cast<double>(j);
    p1 = z * std::sqrt(2.0 / (jd + 1.0)) * p2 - std::sqrt(jd / (jd + 1.0)) * p3;
  }
  return {p1, p2};
}

}  // namespace detail

/// Nodes located by Sturm-sequence bisection on the Jacobi matrix, polished by Newton
/// steps on the orthonormal recurrence, then rescaled to the probabilist weight.
inline GaussHermiteRule gauss_hermite_rule(std::size_t n) {
  if (n == 0) throw ArgumentError("gauss_hermite_rule: need at least one node");
  const double nd = static_cast<double>(n);
  // Gershgorin: all roots lie in [-R, R].
  const double radius = 2.0 * std::sqrt(0.5 * nd) + 1.0;
  std::vector<double> z(n);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lo = -radius;
    double hi = radius;
    // i-th smallest root: count_below(x) <= i on the left, > i on the right.
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (detail::jacobi_count_below(n, mid) > i)
        hi = mid;
      else
        lo = mid;
    }
    double r = 0.5 * (lo + hi);
    for (int it = 0; it < 3; ++it) {
      const auto [p, pm1] = detail::orthonormal_hermite(n, r);
      const double dp = std::sqrt(2.0 * nd) * pm1;
      if (dp == 0.0) break;
      const double step = p / dp;
      if (std::abs(step) > hi - lo + 1e-12) break;
      r -= step;
    }
    const double pp = std::sqrt(2.0 * nd) * detail::orthonormal_hermite(n, r).second;
    z[i] = r;
    w[i] = 2.0 / (pp * pp);
  }
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double scale = 1.0 / std::sqrt(std::numbers::pi);
  for (std::size_t i = 0; i < n; ++i) {
    rule.nodes[i] = std::numbers::sqrt2 * z[i];
    rule.weights[i] = scale * w[i];
  }
  return rule;
}

inline const GaussHermiteRule& default_rule() {
  static const GaussHermiteRule rule = gauss_hermite_rule(kQuadratureNodes);
  return rule;
}

/// E[f(Z)] for Z ~ N(0, 1) under the 200-node rule.
template <typename F>
double gaussian_expectation(F&& f) {
  const auto& rule = default_rule();
  double s = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) s += rule.weights[k] * f(rule.nodes[k]);
  return s;
}

/// Truncated Hermite expansion phi ~ sum_i (c_i / i!) q_i.
struct HermiteExpansion {
  std::vector<double> coeffs;      // c_0 .. c_K
  std::size_t order = 0;           // K
  double hermite_norm = 0.0;       // sqrt(sum_{i<=K} c_i^2)
  double tail_mass = 0.0;          // c_inf^2 = sum_{i=2}^{K} c_i^2 / i!
  double truncation_residual = 0.0;  // E[phi(Z)^2] - sum_{i<=K} c_i^2 / i!

  [[nodiscard]] double c(std::size_t i) const { return i < coeffs.size() ? coeffs[i] : 0.0; }

  /// Evaluates the truncated series at x.
  [[nodiscard]] double operator()(double x) const {
    const auto q = hermite_polys(order, x);
    double s = 0.0;
    for (std::size_t i = 0; i <= order; ++i) s += coeffs[i] / factorial(i) * q[i];
    return s;
  }

  /// Smallest order >= `from` with c_i != 0, or 0 if none up to K.
  [[nodiscard]] std::size_t next_nonzero(std::size_t from) const {
    for (std::size_t i = from; i <= order; ++i)
      if (coeffs[i] != 0.0) return i;
    return 0;
  }
};

inline constexpr double kCoefficientZero = 1e-12;

/// Builds the expansion record from raw coefficients; applies the zero floor and
/// derives the norm and tail mass. `second_moment` is E[phi(Z)^2] when known.
///
/// The floor compares c_i / sqrt(i!) (the coefficient in the orthonormal basis) with
/// 1e-12: quadrature noise in c_i grows like eps sqrt(i!), so an absolute floor would
/// keep noise of order 0.1 at i = 30.
inline HermiteExpansion make_expansion(std::vector<double> coeffs, double second_moment) {
  if (coeffs.empty()) throw ArgumentError("make_expansion: no coefficients");
  HermiteExpansion e;
  e.order = coeffs.size() - 1;
  for (std::size_t i = 0; i < coeffs.size(); ++i)
    if (std::abs(coeffs[i]) < kCoefficientZero * std::sqrt(factorial(i))) coeffs[i] = 0.0;
  e.coeffs = std::move(coeffs);
  double norm2 = 0.0;
  double parseval = 0.0;
  for (std::size_t i = 0; i <= e.order; ++i) {
    const double c2 = e.coeffs[i] * e.coeffs[i];
    norm2 += c2;
    parseval += c2 / factorial(i);
    if (i >= 2) e.tail_mass += c2 / factorial(i);
  }
  e.hermite_norm = std::sqrt(norm2);
  e.truncation_residual = std::max(0.0, second_moment - parseval);
  return e;
}

/// c_i = E[phi(Z) q_i(Z)] by 200-node Gauss-Hermite quadrature, i = 0..K.
template <typename F>
HermiteExpansion hermite_coefficients(F&& phi, std::size_t order = kDefaultExpansionOrder) {
  if (order == 0 || order > kMaxExpansionOrder)
    throw RangeError("hermite_coefficients: order must be in [1, " +
                     std::to_string(kMaxExpansionOrder) + "]");
  const auto& rule = default_rule();
  std::vector<double> c(order + 1, 0.0);
  double second = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double x = rule.nodes[k];
    const double v = phi(x);
    if (!std::isfinite(v))
      throw EvaluationError("hermite_coefficients: non-finite activation value at node " +
                            std::to_string(x));
    const auto q = hermite_polys(order, x);
    const double wv = rule.weights[k] * v;
    for (std::size_t i = 0; i <= order; ++i) c[i] += wv * q[i];
    second += wv * v;
  }
  return make_expansion(std::move(c), second);
}

inline constexpr std::size_t kDefaultGramOrder = 8;

/// E[phi(X^T W^T) phi(W X)] for W with i.i.d. N(0, 1) entries and d1 rows:
/// d1 (c_0^2 11^T + c_1^2 X^T X + sum_{i=2}^{t_max} c_i^2 / i! (X^T X)^{o i}).
inline Matrix expected_gram(const Matrix& x, const HermiteExpansion& e, std::size_t d1,
                            std::size_t t_max) {
  if (x.empty()) throw DimensionError("expected_gram: empty data matrix");
  if (t_max > e.order)
    throw ArgumentError("expected_gram: t_max exceeds the expansion order");
  for (double norm : column_norms(x))
    if (std::abs(norm - 1.0) > 1e-8)
      throw PreconditionError("expected_gram: data columns must have unit norm");
  const Matrix base = matmul_tn(x, x);
  const std::size_t n = x.cols();
  Matrix g(n, n, e.c(0) * e.c(0));
  Matrix power(n, n, 1.0);
  for (std::size_t i = 1; i <= t_max; ++i) {
    power = hadamard(std::move(power), base);
    const double weight = e.c(i) * e.c(i) / factorial(i);
    if (weight != 0.0) g.axpy(weight, power);
  }
  g *= static_cast<double>(d1);
  return g;
}

inline Matrix expected_gram(const Matrix& x, const HermiteExpansion& e, std::size_t d1) {
  return expected_gram(x, e, d1, std::min(e.order, kDefaultGramOrder));
}

}  // namespace snlab
