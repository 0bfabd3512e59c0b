#pragma once

#include <snlab/activation.hpp>
#include <snlab/errors.hpp>
#include <snlab/hermite.hpp>
#include <snlab/matrix.hpp>
#include <snlab/random.hpp>
#include <snlab/shallow_net.hpp>
#include <snlab/spectral.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace snlab {

/// Constants of the near-isometry / smoothness / PL argument for one (Theta_0, X, phi).
struct TheoryConstants {
  double mu_phi = 0.0;    // sigma_min(phi(W0 X))
  double nu_phi = 0.0;    // phi'_max sigma_max(X) sigma_max(V0) + sigma_max(phi(W0 X))
  double beta_phi = 0.0;  // sqrt(2) sigma_max(X) (phi'_max + phi''_max chi_max)
  double rho_phi = 0.0;   // mu / (2 beta)
  double alpha_f = 2.0;
  double beta_f = 2.0;
  double chi_max = 0.0;
  double eta = 0.0;  // set by learning_rate

  // Ingredients, kept for reports.
  double sigma_max_x = 0.0;
  double sigma_max_v0 = 0.0;
  double sigma_max_features = 0.0;
};

struct Dims {
  std::size_t d0 = 0;
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::size_t n = 0;
};

/// Initialization scale: W0 ~ N(0, omega1^2), V0 ~ N(0, omega2^2).
struct InitScheme {
  double omega1 = 1.0;
  double omega2 = 1.0;
  double product_budget = 1.0;

  [[nodiscard]] bool within_budget() const noexcept {
    return omega1 * omega2 <= product_budget * (1.0 + 1e-9);
  }

  /// omega2 / omega1 = ratio with omega1 omega2 = budget.
  static InitScheme from_ratio(double ratio, double budget) {
    if (!(ratio > 0.0) || !(budget > 0.0))
      throw ArgumentError("InitScheme::from_ratio: ratio and budget must be positive");
    return {std::sqrt(budget / ratio), std::sqrt(budget * ratio), budget};
  }
};

/// Constants of the concentration events; the universal constant C is explicit.
struct ProbeParams {
  double delta1 = 0.5;
  double delta2 = 0.5;
  double delta3 = 3.0;
  double delta4 = 3.0;
  double k3 = 1.0;
  double C = 1.0;

  void validate() const {
    if (!(delta1 > 0.0 && delta1 < 1.0) || !(delta2 > 0.0 && delta2 < 1.0))
      throw ArgumentError("ProbeParams: delta1 and delta2 must lie in (0, 1)");
    if (!(delta3 >= 0.0) || !(delta4 > 0.0) || !(C > 0.0))
      throw ArgumentError("ProbeParams: delta3 >= 0, delta4 > 0 and C > 0 required");
  }
};

/// Measures the constants at Theta_0 without requiring mu_phi > 0; rho_phi is 0 when mu_phi is.
inline TheoryConstants measure_constants(const NetParams& theta0, const Matrix& x,
                                         const ActivationProfile& phi, double chi_max) {
  if (!(chi_max > 0.0)) throw ArgumentError("constants_at_init: chi_max must be positive");
  detail::check_shapes(theta0, x, "constants_at_init");
  const Matrix features = apply_activation(matmul(theta0.W, x), phi);
  const auto fx = svd_extremes(features);
  TheoryConstants c;
  c.sigma_max_x = sigma_max(x);
  c.sigma_max_v0 = sigma_max(theta0.V);
  c.sigma_max_features = fx.sigma_max;
  // As a map on R^n the feature matrix is singular when d1 < n.
  c.mu_phi = features.rows() < features.cols() ? 0.0 : fx.sigma_min;
  c.nu_phi = phi.phi_dot_max * c.sigma_max_x * c.sigma_max_v0 + fx.sigma_max;
  c.beta_phi = std::numbers::sqrt2 * c.sigma_max_x * (phi.phi_dot_max + phi.phi_ddot_max * chi_max);
  c.chi_max = chi_max;
  c.rho_phi = c.mu_phi / (2.0 * c.beta_phi);
  return c;
}

inline TheoryConstants constants_at_init(const NetParams& theta0, const Matrix& x,
                                         const ActivationProfile& phi, double chi_max) {
  auto c = measure_constants(theta0, x, phi, chi_max);
  if (c.mu_phi == 0.0)
    throw DegenerateCertificateError(
        "constants_at_init: sigma_min(phi(W0 X)) = 0 (d1 = " + std::to_string(theta0.d1()) +
        ", n = " + std::to_string(x.cols()) + ", sigma_max = " +
        std::to_string(c.sigma_max_features) + "); the width or data rank is too small");
  return c;
}

struct InitCertificate {
  bool satisfied = false;
  double margin = 0.0;  // rhs / h0
  double rhs = 0.0;     // C_init alpha_f mu^6 / (beta^2 nu^2)
};

inline constexpr double kDefaultCInit = 1e-2;
inline constexpr double kDefaultCEta = 1.0;

/// Initial-loss condition h0 <= C_init alpha_f mu^6 / (beta^2 nu^2).
inline InitCertificate certify_init(double h0, const TheoryConstants& c,
                                    double c_init = kDefaultCInit) {
  if (!(c_init > 0.0)) throw ArgumentError("certify_init: C_init must be positive");
  const double mu3 = c.mu_phi * c.mu_phi * c.mu_phi;
  const double rhs = c_init * c.alpha_f * mu3 * mu3 / (c.beta_phi * c.beta_phi * c.nu_phi * c.nu_phi);
  return {h0 <= rhs, rhs / std::max(h0, 1e-300), rhs};
}

/// eta = C_eta / (beta_Phi ||Df(Z0)|| + beta_f mu^2 + beta_f nu^2).
inline double learning_rate(const TheoryConstants& c, double grad_f_norm_at_init,
                            double c_eta = kDefaultCEta) {
  if (!(c_eta > 0.0)) throw ArgumentError("learning_rate: C_eta must be positive");
  const double denom = c.beta_phi * grad_f_norm_at_init + c.beta_f * c.mu_phi * c.mu_phi +
                       c.beta_f * c.nu_phi * c.nu_phi;
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw DegenerateCertificateError("learning_rate: step-size denominator is zero");
  return c_eta / denom;
}

struct SpectralBand {
  double lower = 0.0;
  double upper = 0.0;
};

/// High-probability band for sigma_min / sigma_max of phi(W0 X):
///   lower = omega1^{r1} sqrt((1 - delta1) c_t^2 / t! d1) sigma_min(X^{*t})
///   upper = sqrt(1 + delta2) omega1^{r2} (sqrt((c1^2 + c_inf^2) d1) sigma_max(X) + |c0| sqrt(d1 n))
inline SpectralBand gram_bounds(const Matrix& x, const HermiteExpansion& e, std::size_t d1,
                                std::size_t t, double omega1, double r1, double r2,
                                const ProbeParams& probes) {
  if (t == 0 || t > e.order) throw ArgumentError("gram_bounds: order t out of range");
  if (e.c(t) == 0.0)
    throw UnusableOrderError("gram_bounds: c_" + std::to_string(t) +
                                 " = 0; use the next order with a nonzero coefficient",
                             e.next_nonzero(t + 1));
  const double smin_t = khatri_rao_extremes(x, t).sigma_min;
  if (!(smin_t > 0.0))
    throw PreconditionError("gram_bounds: sigma_min(X^{*t}) = 0 for t = " + std::to_string(t));
  const double d1d = static_cast<double>(d1);
  const double ct = e.c(t);
  const double c1 = e.c(1);
  SpectralBand b;
  b.lower = std::pow(omega1, r1) *
            std::sqrt((1.0 - probes.delta1) * ct * ct / factorial(t) * d1d) * smin_t;
  b.upper = std::sqrt(1.0 + probes.delta2) * std::pow(omega1, r2) *
            (std::sqrt((c1 * c1 + e.tail_mass) * d1d) * sigma_max(x) +
             std::abs(e.c(0)) * std::sqrt(d1d * static_cast<double>(x.cols())));
  return b;
}

inline constexpr double kKhatriRaoRankTolerance = 1e-8;

/// Smallest t >= 1 with c_t != 0 and sigma_min(X^{*t}) > 1e-8; 0 when none up to `t_max`.
struct OrderSelection {
  std::size_t t = 0;
  double sigma_min_xt = 0.0;
};

inline OrderSelection select_order(const Matrix& x, const HermiteExpansion& e, std::size_t t_max) {
  for (std::size_t t = 1; t <= std::min(t_max, e.order); ++t) {
    if (e.c(t) == 0.0) continue;
    const double s = khatri_rao_extremes(x, t).sigma_min;
    if (s > kKhatriRaoRankTolerance) return {t, s};
  }
  return {};
}

/// Hermite expansion of a -> phi(omega1 a), i.e. of the activation seen by unit-variance weights.
inline HermiteExpansion scaled_expansion(const ActivationProfile& phi, double omega1,
                                         std::size_t order = kDefaultExpansionOrder) {
  return hermite_coefficients([&](double a) { return phi.eval(omega1 * a); }, order);
}

struct GramDiagnostics {
  Matrix empirical_gram;
  Matrix expected_gram;
  double rel_frobenius_error = 0.0;
  double sigma_min_emp = 0.0;
  double sigma_max_emp = 0.0;
  double lower_bound = 0.0;  // omega1^{2 r1} d1 c_t^2 / t! sigma_min(X^{*t})^2
  double upper_bound = 0.0;  // omega1^{2 r2} d1 (n c0^2 + (c1^2 + c_inf^2) sigma_max(X)^2)
  std::size_t num_samples = 0;
};

inline constexpr std::size_t kMonteCarloBlocks = 64;

/// Averages phi(X^T W0^T) phi(W0 X) over `num_samples` draws W0 ~ N(0, omega1^2) and compares
/// with the Hermite-series expectation (computed from the expansion of a -> phi(omega1 a)).
/// Samples are split into a fixed number of blocks reduced in block order, so the result is
/// independent of `workers`.
inline GramDiagnostics monte_carlo_gram(const Matrix& x, const ActivationProfile& phi,
                                        double omega1, std::size_t d1, std::size_t num_samples,
                                        const RngStream& rng, unsigned workers = 1) {
  if (num_samples < 100) throw ArgumentError("monte_carlo_gram: need at least 100 samples");
  if (!(omega1 >= 0.0)) throw ArgumentError("monte_carlo_gram: omega1 must be >= 0");
  const std::size_t n = x.cols();
  const std::size_t blocks = std::min(kMonteCarloBlocks, num_samples);
  std::vector<Matrix> partial(blocks, Matrix(n, n));

  auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * num_samples / blocks;
    const std::size_t end = (b + 1) * num_samples / blocks;
    Matrix& acc = partial[b];
    for (std::size_t s = begin; s < end; ++s) {
      const Matrix w = gaussian_matrix(d1, x.rows(), omega1, rng.child(s));
      const Matrix f = apply_activation(matmul(w, x), phi);
      acc += matmul_tn(f, f);
    }
  };
  workers = std::max(1U, workers);
  if (workers == 1) {
    for (std::size_t b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::vector<std::thread> pool;
    for (unsigned wk = 0; wk < workers; ++wk)
      pool.emplace_back([&, wk] {
        for (std::size_t b = wk; b < blocks; b += workers) run_block(b);
      });
    for (auto& th : pool) th.join();
  }
  Matrix mean(n, n);
  for (const auto& p : partial) mean += p;
  mean *= 1.0 / static_cast<double>(num_samples);

  GramDiagnostics g;
  g.num_samples = num_samples;
  const auto scaled = scaled_expansion(phi, omega1);
  g.expected_gram = expected_gram(x, scaled, d1);
  g.rel_frobenius_error = frobenius_norm(mean - g.expected_gram) / frobenius_norm(g.expected_gram);
  const auto ev = symmetric_eigenvalues(mean);
  g.sigma_max_emp = ev.front();
  g.sigma_min_emp = std::max(ev.back(), 0.0);
  g.empirical_gram = std::move(mean);

  const auto base = hermite_coefficients(phi.eval);
  const double d1d = static_cast<double>(d1);
  const auto order = select_order(x, base, kDefaultGramOrder);
  if (order.t != 0) {
    const double ct = base.c(order.t);
    g.lower_bound = std::pow(omega1, 2.0 * phi.r1) * d1d * ct * ct / factorial(order.t) *
                    order.sigma_min_xt * order.sigma_min_xt;
  }
  const double sx = sigma_max(x);
  g.upper_bound = std::pow(omega1, 2.0 * phi.r2) * d1d *
                  (static_cast<double>(n) * base.c(0) * base.c(0) +
                   (base.c(1) * base.c(1) + base.tail_mass) * sx * sx);
  return g;
}

struct WidthCertificate {
  std::size_t t = 0;
  double sigma_min_xt = 0.0;
  double sigma_max_x = 0.0;
  double xi = 0.0;
  double d1_required = 0.0;
  std::size_t d1_actual = 0;
  bool satisfied = false;
  /// |c0| sqrt(n) >= sqrt(c1^2 + c_inf^2) sigma_max(X): the c0 term dominates nu_Phi.
  bool c0_dominant = false;
  /// c0 = 0; the width analysis needs a non-odd activation.
  bool odd_activation = false;
  /// Order estimate n^{2/3} sigma_max(X)^2 / sigma_min(X^{*t})^{10/3} of the width needed
  /// when sigma_max(V_k) is bounded through the trajectory length instead of chi_max.
  double d1_order_without_chi_bound = 0.0;
};

inline constexpr std::size_t kMaxKhatriRaoOrder = 8;

/// d1 = xi sigma_max(X)^2 sqrt(n) / sigma_min(X^{*t})^3.
inline double width_from_geometry(double xi, double sigma_max_x, double sigma_min_xt,
                                  std::size_t n) {
  return xi * sigma_max_x * sigma_max_x * std::sqrt(static_cast<double>(n)) /
         (sigma_min_xt * sigma_min_xt * sigma_min_xt);
}

/// Width requirement d1 >= xi sigma_max(X)^2 sqrt(n) / sigma_min(X^{*t})^3 with
/// xi = sqrt(delta3^2 c0^2 (1 + delta2) delta4^4 (phi'_max + phi''_max chi_max)^2 t!^3
///           / (omega1^{6 r1 - 2 r2} (1 - delta1)^3 c_t^6)).
inline WidthCertificate width_requirement(const Matrix& x, const HermiteExpansion& e,
                                          const ActivationProfile& phi, const ProbeParams& probes,
                                          double omega1, double chi_max, std::size_t d1_actual,
                                          std::optional<OrderSelection> cached = std::nullopt) {
  probes.validate();
  for (double c : column_norms(x))
    if (std::abs(c - 1.0) > kUnitNormTolerance)
      throw PreconditionError("width_requirement: X columns must have unit norm");
  const auto order = cached ? *cached : select_order(x, e, kMaxKhatriRaoOrder);
  if (order.t == 0)
    throw InfeasibleDataError("width_requirement: no order t <= " +
                              std::to_string(kMaxKhatriRaoOrder) +
                              " gives c_t != 0 and a full-rank X^{*t}");
  WidthCertificate w;
  w.t = order.t;
  w.sigma_min_xt = order.sigma_min_xt;
  w.sigma_max_x = sigma_max(x);
  const double n = static_cast<double>(x.cols());
  const double c0 = e.c(0);
  const double ct = e.c(w.t);
  const double tf = factorial(w.t);
  const double lip = phi.phi_dot_max + phi.phi_ddot_max * chi_max;
  const double d4sq = probes.delta4 * probes.delta4;
  const double one_minus = 1.0 - probes.delta1;
  const double num = probes.delta3 * probes.delta3 * c0 * c0 * (1.0 + probes.delta2) * d4sq * d4sq *
                     lip * lip * tf * tf * tf;
  const double den = std::pow(omega1, 6.0 * phi.r1 - 2.0 * phi.r2) * one_minus * one_minus *
                     one_minus * std::pow(ct, 6.0);
  w.xi = std::sqrt(num / den);
  w.d1_required = width_from_geometry(w.xi, w.sigma_max_x, w.sigma_min_xt, x.cols());
  w.d1_actual = d1_actual;
  w.satisfied = static_cast<double>(d1_actual) >= w.d1_required;
  w.odd_activation = c0 == 0.0;
  w.c0_dominant = std::abs(c0) * std::sqrt(n) >=
                  std::sqrt(e.c(1) * e.c(1) + e.tail_mass) * w.sigma_max_x;
  w.d1_order_without_chi_bound =
      std::pow(n, 2.0 / 3.0) * w.sigma_max_x * w.sigma_max_x / std::pow(w.sigma_min_xt, 10.0 / 3.0);
  return w;
}

struct FailureProbability {
  double p1 = 0.0;
  double p2 = 0.0;
  double p3 = 0.0;
  double p4 = 0.0;
  double p5 = 0.0;
  double psi = 0.0;  // min(p1 + ... + p5, 1)
};

/// Extreme eigenvalues of the expected Gram at unit width (d1 = 1); the expected Gram at
/// width d1 is d1 times this matrix.
inline SpectralExtremes expected_gram_extremes(const Matrix& x, const HermiteExpansion& e) {
  const auto ev = symmetric_eigenvalues(expected_gram(x, e, 1));
  return {ev.front(), std::max(ev.back(), 0.0)};
}

/// psi = p1 + p2 + p3 + p4 + p5 with
///   p1 = d1^{-C delta4 d0} + d1^{-C delta4 d2},
///   p2 = exp(-C (delta1 lambda_min(E M0) / kappa)^2), p3 = exp(-C (delta2 lambda_max(E M0) / kappa)^2),
///   kappa = 4 phi'_max^2 sigma_max(X)^2 delta4 sqrt(d0 log d1),
///   p4 = exp(-C d1), p5 = exp(-C delta3^2).
/// `unit_gram` holds the expected-Gram extremes at unit width; they are scaled by d1.
inline FailureProbability failure_probability(const Dims& dims, const Matrix& x,
                                              const ActivationProfile& phi,
                                              const ProbeParams& probes,
                                              const SpectralExtremes& unit_gram) {
  probes.validate();
  const double d0 = static_cast<double>(dims.d0);
  const double d1 = static_cast<double>(dims.d1);
  const double d2 = static_cast<double>(dims.d2);
  const double sx = sigma_max(x);
  FailureProbability f;
  f.p1 = std::pow(d1, -probes.C * probes.delta4 * d0) + std::pow(d1, -probes.C * probes.delta4 * d2);
  const double kappa = 4.0 * phi.phi_dot_max * phi.phi_dot_max * sx * sx * probes.delta4 *
                       std::sqrt(d0 * std::log(d1));
  auto tail = [&](double delta, double lambda) {
    if (kappa == 0.0) return lambda > 0.0 ? 0.0 : 1.0;
    const double z = delta * d1 * lambda / kappa;
    return std::exp(-probes.C * z * z);
  };
  f.p2 = tail(probes.delta1, unit_gram.sigma_min);
  f.p3 = tail(probes.delta2, unit_gram.sigma_max);
  f.p4 = std::exp(-probes.C * d1);
  f.p5 = std::exp(-probes.C * probes.delta3 * probes.delta3);
  f.psi = std::min(1.0, f.p1 + f.p2 + f.p3 + f.p4 + f.p5);
  return f;
}

enum class LazyRegime { NonLazyPossible, LazyAsymptotic, Inconclusive };

inline const char* to_string(LazyRegime r) {
  switch (r) {
    case LazyRegime::NonLazyPossible: return "non-lazy possible";
    case LazyRegime::LazyAsymptotic: return "lazy guaranteed asymptotically";
    case LazyRegime::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

inline constexpr double kLazyRatioThreshold = 10.0;

/// Data geometry entering the lazy-training bounds.
struct LazyGeometry {
  double sigma_max_x = 0.0;
  double sigma_min_xt = 0.0;
};

struct LazyRegimeReport {
  double omega1 = 0.0;
  double omega2 = 0.0;
  double ratio = 0.0;
  /// Bound before the regime split, with the trajectory-length bound substituted for chi_max.
  double bound_general = 0.0;
  /// Simplified bound for omega2 >> omega1.
  double bound_large_ratio = 0.0;
  /// Simplified bound for omega1 >> omega2 (infinite when c0 = 0).
  double bound_small_ratio = 0.0;
  /// max of the two regime bounds; each is a valid upper bound in its own regime.
  double bound = 0.0;
  LazyRegime regime = LazyRegime::Inconclusive;
  bool odd_activation = false;
  std::string note =
      "necessary-condition analysis: a diverging bound permits non-lazy training but does not "
      "establish it; a vanishing bound implies lazy training asymptotically";
};

inline LazyRegimeReport lazy_regime_report(double omega1, double omega2, const Dims& dims,
                                           const LazyGeometry& geo, const ActivationProfile& phi,
                                           const HermiteExpansion& e, const ProbeParams& probes) {
  if (!(omega1 > 0.0) || !(omega2 > 0.0))
    throw ArgumentError("lazy_regime_report: omega1 and omega2 must be positive");
  LazyRegimeReport r;
  r.omega1 = omega1;
  r.omega2 = omega2;
  r.ratio = omega2 / omega1;
  const double sx = geo.sigma_max_x;
  const double st = geo.sigma_min_xt;
  const double d0 = static_cast<double>(dims.d0);
  const double d1 = static_cast<double>(dims.d1);
  const double n = static_cast<double>(dims.n);
  const double c0 = std::abs(e.c(0));
  const double pd = phi.phi_dot_max;
  const double pdd = phi.phi_ddot_max;
  const double w1r1 = std::pow(omega1, phi.r1);
  const double w1r2 = std::pow(omega1, phi.r2);
  r.odd_activation = c0 == 0.0;

  const double denom_base = omega2 * pd * sx * std::sqrt(d1) +
                            w1r2 * c0 * std::sqrt((1.0 + probes.delta2) * d1 * n);
  const double chi = (omega2 * pd * sx + w1r2 * c0 * std::sqrt(n)) * sx /
                         (w1r1 * w1r1 * std::sqrt(d1) * st * st) +
                     omega2 * std::sqrt(d1);
  r.bound_general = std::numbers::sqrt2 * sx * (pd + pdd * chi) / (denom_base * denom_base);

  const double large_den = st * sx * std::pow(omega1, phi.r1 - 1.0) / std::sqrt(d0 * d1) +
                           std::pow(omega1, phi.r1 + phi.r2) * st * c0 * std::sqrt(n);
  r.bound_large_ratio = sx * sx * omega2 / std::pow(d1, 1.5) / (large_den * large_den);

  const double small_den = w1r2 * c0 * std::sqrt(d1 * n);
  r.bound_small_ratio = small_den > 0.0
                            ? std::numbers::sqrt2 * sx * (pd + omega2 * pdd * std::sqrt(d1)) /
                                  (small_den * small_den)
                            : std::numeric_limits<double>::infinity();
  r.bound = std::max(r.bound_large_ratio, r.bound_small_ratio);

  if (r.ratio >= kLazyRatioThreshold)
    r.regime = LazyRegime::NonLazyPossible;
  else if (r.ratio <= 1.0 / kLazyRatioThreshold)
    r.regime = LazyRegime::LazyAsymptotic;
  else
    r.regime = LazyRegime::Inconclusive;
  return r;
}

}  // namespace snlab
