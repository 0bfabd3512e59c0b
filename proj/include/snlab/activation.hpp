#pragma once

#include <snlab/errors.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

namespace snlab {

/// (phi(x), phi'(x), phi''(x))
struct ActivationValues {
  double value = 0.0;
  double slope = 0.0;
  double curvature = 0.0;
};

using ScalarFn = double (*)(double);
using TripleFn = ActivationValues (*)(double);

struct DerivativeBounds {
  double phi_dot_max = 0.0;
  double phi_ddot_max = 0.0;
  /// False when a supremum was attained at the edge of the search interval.
  bool certified = true;
};

struct HomogeneityExponents {
  double r1 = 0.0;
  double r2 = 0.0;
  /// Largest change of either exponent between the full grid and a half-resolution grid.
  double uncertainty = 0.0;
  std::size_t excluded = 0;
  std::size_t evaluated = 0;
};

/// A smooth activation with its derivative handles and certified constants.
/// Handles are plain function pointers, so profiles are cheap to copy and
/// safe to evaluate concurrently.
struct ActivationProfile {
  std::string name;
  ScalarFn eval = nullptr;
  ScalarFn deriv1 = nullptr;
  ScalarFn deriv2 = nullptr;
  TripleFn all = nullptr;  // optional fused evaluation
  double phi_dot_max = 0.0;
  double phi_ddot_max = 0.0;
  bool bounds_certified = false;
  double r1 = 0.0;
  double r2 = 0.0;
  double homogeneity_uncertainty = 0.0;
  bool zero_at_origin = false;

  [[nodiscard]] ActivationValues values(double x) const {
    if (all) return all(x);
    return {eval(x), deriv1(x), deriv2(x)};
  }
};

/// (phi(x), phi'(x), phi''(x)); rejects non-finite x.
inline ActivationValues eval_all(const ActivationProfile& phi, double x) {
  if (!std::isfinite(x)) throw ArgumentError("eval_all: non-finite input");
  return phi.values(x);
}

namespace detail {

inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double gelu(double x) { return x * normal_cdf(x); }
inline double gelu_d1(double x) { return normal_cdf(x) + x * normal_pdf(x); }
inline double gelu_d2(double x) { return normal_pdf(x) * (2.0 - x * x); }
inline ActivationValues gelu_all(double x) {
  const double cdf = normal_cdf(x);
  const double pdf = normal_pdf(x);
  return {x * cdf, cdf + x * pdf, pdf * (2.0 - x * x)};
}

inline double tanh_f(double x) { return std::tanh(x); }
inline double tanh_d1(double x) {
  const double t = std::tanh(x);
  return 1.0 - t * t;
}
inline double tanh_d2(double x) {
  const double t = std::tanh(x);
  return -2.0 * t * (1.0 - t * t);
}
inline ActivationValues tanh_all(double x) {
  const double t = std::tanh(x);
  const double s = 1.0 - t * t;
  return {t, s, -2.0 * t * s};
}

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double softplus_raw(double x) {
  // log(1 + e^x) without overflow
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double softplus_shifted(double x) { return softplus_raw(x) - std::numbers::ln2; }
inline double softplus_d1(double x) { return logistic(x); }
inline double softplus_d2(double x) {
  const double s = logistic(x);
  return s * (1.0 - s);
}
inline ActivationValues softplus_all(double x) {
  const double s = logistic(x);
  return {softplus_shifted(x), s, s * (1.0 - s)};
}

inline double sigmoid_shifted(double x) { return logistic(x) - 0.5; }
inline double sigmoid_d1(double x) {
  const double s = logistic(x);
  return s * (1.0 - s);
}
inline double sigmoid_d2(double x) {
  const double s = logistic(x);
  return s * (1.0 - s) * (1.0 - 2.0 * s);
}
inline ActivationValues sigmoid_all(double x) {
  const double s = logistic(x);
  const double d = s * (1.0 - s);
  return {s - 0.5, d, d * (1.0 - 2.0 * s)};
}

inline double identity_f(double x) { return x; }
inline double one_f(double) { return 1.0; }
inline double zero_f(double) { return 0.0; }

inline double square_f(double x) { return x * x; }
inline double square_d1(double x) { return 2.0 * x; }
inline double two_f(double) { return 2.0; }

inline double cube_f(double x) { return x * x * x; }
inline double cube_d1(double x) { return 3.0 * x * x; }
inline double cube_d2(double x) { return 6.0 * x; }

}  // namespace detail

inline constexpr double kBoundGridHalfWidth = 20.0;
inline constexpr std::size_t kBoundGridPoints = 100000;
inline constexpr double kBoundSafetyMargin = 1.01;

namespace detail {

/// Golden-section maximisation of |f| on [a, b].
template <typename F>
double golden_max_abs(F&& f, double a, double b) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = std::abs(f(c));
  double fd = std::abs(f(d));
  for (int it = 0; it < 80 && (b - a) > 1e-13; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = std::abs(f(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = std::abs(f(d));
    }
  }
  return std::max({fc, fd, std::abs(f(0.5 * (a + b)))});
}

struct GridSup {
  double value = 0.0;
  bool at_boundary = false;
};

template <typename F>
GridSup grid_sup_abs(F&& f) {
  const double lo = -kBoundGridHalfWidth;
  const double h = 2.0 * kBoundGridHalfWidth / static_cast<double>(kBoundGridPoints - 1);
  std::size_t arg = 0;
  double best = -1.0;
  for (std::size_t k = 0; k < kBoundGridPoints; ++k) {
    const double v = std::abs(f(lo + h * static_cast<double>(k)));
    if (v > best) {
      best = v;
      arg = k;
    }
  }
  GridSup out;
  // A tie with an interior point (e.g. a constant derivative) is not a boundary maximum.
  const double tol = 1e-12 * std::max(1.0, best);
  const bool left = arg == 0;
  const bool right = arg == kBoundGridPoints - 1;
  if (left || right) {
    const double inner = std::abs(f(lo + h * static_cast<double>(left ? 1 : kBoundGridPoints - 2)));
    out.at_boundary = inner < best - tol;
  }
  const double a = lo + h * static_cast<double>(arg == 0 ? 0 : arg - 1);
  const double b = lo + h * static_cast<double>(std::min(arg + 1, kBoundGridPoints - 1));
  out.value = std::max(best, golden_max_abs(f, a, b));
  return out;
}

}  // namespace detail

/// Numerical sup |phi'| and sup |phi''| over [-20, 20] (1e5-point grid refined by
/// golden section), inflated by a 1% margin. `certified` is false when either
/// supremum sits on the grid boundary, which suggests an unbounded derivative.
inline DerivativeBounds derivative_bounds(ScalarFn deriv1, ScalarFn deriv2) {
  const auto s1 = detail::grid_sup_abs(deriv1);
  const auto s2 = detail::grid_sup_abs(deriv2);
  return {kBoundSafetyMargin * s1.value, kBoundSafetyMargin * s2.value,
          !(s1.at_boundary || s2.at_boundary)};
}

inline DerivativeBounds derivative_bounds(const ActivationProfile& phi) {
  return derivative_bounds(phi.deriv1, phi.deriv2);
}

namespace detail {

struct ExponentScan {
  double r1 = -INFINITY;
  double r2 = INFINITY;
  std::size_t excluded = 0;
  std::size_t evaluated = 0;
};

inline ExponentScan scan_exponents(ScalarFn f, std::size_t tau_points, std::size_t a_points) {
  ExponentScan s;
  const double log_lo = std::log(1e-3);
  for (std::size_t i = 0; i < tau_points; ++i) {
    // log-spaced tau in [1e-3, 1), never reaching 1
    const double tau = std::exp(log_lo * (1.0 - static_cast<double>(i) / static_cast<double>(tau_points)));
    const double log_tau = std::log(tau);
    for (std::size_t j = 0; j < a_points; ++j) {
      // symmetric grid on [-10, 10] skipping 0
      const double frac = static_cast<double>(j) / static_cast<double>(a_points - 1);
      const double a = -10.0 + 20.0 * frac;
      if (a == 0.0) continue;
      ++s.evaluated;
      const double fa = std::abs(f(a));
      const double fta = std::abs(f(tau * a));
      if (fa == 0.0 || fta == 0.0) {
        ++s.excluded;
        continue;
      }
      const double e = std::log(fta / fa) / log_tau;
      s.r1 = std::max(s.r1, e);
      s.r2 = std::min(s.r2, e);
    }
  }
  return s;
}

}  // namespace detail

/// Grid estimates of the tightest r1 >= r2 with
/// tau^{r1} |phi(a)| <= |phi(tau a)| <= tau^{r2} |phi(a)| for tau in [1e-3, 1), a in [-10, 10].
inline HomogeneityExponents homogeneity_exponents(ScalarFn f) {
  constexpr std::size_t kTau = 64;
  constexpr std::size_t kA = 400;
  const auto fine = detail::scan_exponents(f, kTau, kA);
  if (fine.evaluated == 0 || 2 * fine.excluded > fine.evaluated)
    throw EstimationError("homogeneity_exponents: more than half of the grid points excluded");
  const auto coarse = detail::scan_exponents(f, kTau / 2, kA / 2);
  HomogeneityExponents h;
  h.r1 = fine.r1;
  h.r2 = fine.r2;
  h.excluded = fine.excluded;
  h.evaluated = fine.evaluated;
  h.uncertainty = std::max(std::abs(fine.r1 - coarse.r1), std::abs(fine.r2 - coarse.r2));
  return h;
}

inline HomogeneityExponents homogeneity_exponents(const ActivationProfile& phi) {
  return homogeneity_exponents(phi.eval);
}

/// Fills in the certified constants of a profile from its handles.
inline ActivationProfile certify_profile(ActivationProfile p) {
  const auto b = derivative_bounds(p);
  p.phi_dot_max = b.phi_dot_max;
  p.phi_ddot_max = b.phi_ddot_max;
  p.bounds_certified = b.certified;
  const auto h = homogeneity_exponents(p);
  p.r1 = h.r1;
  p.r2 = h.r2;
  p.homogeneity_uncertainty = h.uncertainty;
  p.zero_at_origin = std::abs(p.eval(0.0)) <= 1e-15;
  return p;
}

inline constexpr std::array<std::string_view, 7> kActivationNames = {
    "gelu", "tanh", "softplus-shifted", "sigmoid-shifted", "identity", "square", "cube"};

/// Catalog lookup by name; throws ArgumentError for unknown names.
inline ActivationProfile make_activation(std::string_view name) {
  using namespace detail;
  ActivationProfile p;
  p.name = std::string(name);
  if (name == "gelu") {
    p.eval = gelu;
    p.deriv1 = gelu_d1;
    p.deriv2 = gelu_d2;
    p.all = gelu_all;
  } else if (name == "tanh") {
    p.eval = tanh_f;
    p.deriv1 = tanh_d1;
    p.deriv2 = tanh_d2;
    p.all = tanh_all;
  } else if (name == "softplus-shifted") {
    p.eval = softplus_shifted;
    p.deriv1 = softplus_d1;
    p.deriv2 = softplus_d2;
    p.all = softplus_all;
  } else if (name == "sigmoid-shifted") {
    p.eval = sigmoid_shifted;
    p.deriv1 = sigmoid_d1;
    p.deriv2 = sigmoid_d2;
    p.all = sigmoid_all;
  } else if (name == "identity") {
    p.eval = identity_f;
    p.deriv1 = one_f;
    p.deriv2 = zero_f;
  } else if (name == "square") {
    p.eval = square_f;
    p.deriv1 = square_d1;
    p.deriv2 = two_f;
  } else if (name == "cube") {
    p.eval = cube_f;
    p.deriv1 = cube_d1;
    p.deriv2 = cube_d2;
  } else {
    throw ArgumentError("unknown activation '" + std::string(name) + "'");
  }
  return certify_profile(std::move(p));
}

/// Catalog entry cached per name; computing the certified constants costs a few ms.
inline const ActivationProfile& activation(std::string_view name) {
  static const std::array<ActivationProfile, kActivationNames.size()> catalog = [] {
    std::array<ActivationProfile, kActivationNames.size()> c;
    for (std::size_t i = 0; i < kActivationNames.size(); ++i) c[i] = make_activation(kActivationNames[i]);
    return c;
  }();
  for (std::size_t i = 0; i < kActivationNames.size(); ++i)
    if (kActivationNames[i] == name) return catalog[i];
  throw ArgumentError("unknown activation '" + std::string(name) + "'");
}

}  // namespace snlab
