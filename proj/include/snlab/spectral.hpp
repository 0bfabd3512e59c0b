#pragma once

#include <snlab/errors.hpp>
#include <snlab/matrix.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace snlab {

struct SpectralExtremes {
  double sigma_max = 0.0;
  double sigma_min = 0.0;
};

/// Relative floor below which a singular value is reported as exactly zero.
inline constexpr double kSingularFloor = 1e-13;

/// All min(rows, cols) singular values of `m`, sorted descending.
///
/// One-sided Jacobi (Hestenes): columns of the taller orientation are rotated
/// pairwise until mutually orthogonal; the column norms are then the singular
/// values. This keeps high relative accuracy for small singular values, which
/// a Gram-matrix eigensolver would lose by squaring the condition number.
inline std::vector<double> singular_values(const Matrix& m) {
  if (m.empty()) throw DimensionError("singular_values: empty matrix");
  if (!m.all_finite()) throw ArgumentError("singular_values: non-finite entry");

  // Work column-major on the orientation with rows >= cols.
  const bool flip = m.rows() < m.cols();
  const std::size_t rows = flip ? m.cols() : m.rows();
  const std::size_t cols = flip ? m.rows() : m.cols();
  std::vector<std::vector<double>> c(cols, std::vector<double>(rows));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (flip)
        c[i][j] = m(i, j);
      else
        c[j][i] = m(i, j);
    }

  const double eps = std::numeric_limits<double>::epsilon();
  std::vector<double> norms(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (double v : c[j]) s += v * v;
    norms[j] = s;
  }

  for (int sweep = 0; sweep < 80; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double alpha = norms[p];
        double beta = norms[q];
        double gamma = 0.0;
        const double* cp = c[p].data();
        const double* cq = c[q].data();
        for (std::size_t k = 0; k < rows; ++k) gamma += cp[k] * cq[k];
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        double* wp = c[p].data();
        double* wq = c[q].data();
        double np = 0.0;
        double nq = 0.0;
        for (std::size_t k = 0; k < rows; ++k) {
          const double a = wp[k];
          const double b = wq[k];
          wp[k] = cs * a - sn * b;
          wq[k] = sn * a + cs * b;
          np += wp[k] * wp[k];
          nq += wq[k] * wq[k];
        }
        norms[p] = np;
        norms[q] = nq;
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sv(cols);
  for (std::size_t j = 0; j < cols; ++j) sv[j] = std::sqrt(norms[j]);
  std::sort(sv.begin(), sv.end(), std::greater<>());
  const double floor = kSingularFloor * sv.front();
  for (double& s : sv)
    if (s < floor) s = 0.0;
  return sv;
}

inline SpectralExtremes svd_extremes(const Matrix& m) {
  const auto sv = singular_values(m);
  return {sv.front(), sv.back()};
}

inline double sigma_max(const Matrix& m) { return svd_extremes(m).sigma_max; }
inline double sigma_min(const Matrix& m) { return svd_extremes(m).sigma_min; }

/// Checks sigma_{i+j-1}(A + B) <= sigma_i(A) + sigma_j(B) (1-based, descending order)
/// within an additive 1e-9.
inline bool weyl_check(const Matrix& a, const Matrix& b, std::size_t i, std::size_t j) {
  if (!a.same_shape(b))
    throw DimensionError("weyl_check: " + a.shape_string() + " vs " + b.shape_string());
  if (a.empty()) throw DimensionError("weyl_check: empty matrix");
  const std::size_t k = std::min(a.rows(), a.cols());
  if (i < 1 || j < 1 || i + j - 1 > k)
    throw IndexError("weyl_check: need i, j >= 1 and i + j - 1 <= " + std::to_string(k));
  const auto sa = singular_values(a);
  const auto sb = singular_values(b);
  const auto ss = singular_values(a + b);
  return ss[i + j - 2] <= sa[i - 1] + sb[j - 1] + 1e-9;
}

/// Eigenvalues of a symmetric matrix (cyclic Jacobi), sorted descending.
inline std::vector<double> symmetric_eigenvalues(Matrix a) {
  if (a.rows() != a.cols()) throw DimensionError("symmetric_eigenvalues: matrix not square");
  if (a.empty()) throw DimensionError("symmetric_eigenvalues: empty matrix");
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    double diag = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      diag += a(p, p) * a(p, p);
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off <= 1e-32 * diag || off == 0.0) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t =
            std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = cs * akp - sn * akq;
          a(k, q) = sn * akp + cs * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = cs * apk - sn * aqk;
          a(q, k) = sn * apk + cs * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

/// Gram matrix (X^{*t})^T X^{*t} of the column-wise t-fold Khatri-Rao power,
/// formed as the entrywise t-th power of X^T X. t = 0 gives the all-ones matrix.
inline Matrix khatri_rao_gram(const Matrix& x, std::size_t t) {
  if (x.empty()) throw DimensionError("khatri_rao_gram: empty matrix");
  Matrix g = matmul_tn(x, x);
  for (double& v : g.data()) {
    double p = 1.0;
    for (std::size_t k = 0; k < t; ++k) p *= v;
    v = p;
  }
  return g;
}

/// Extreme singular values of X^{*t} from its Gram eigenvalues.
inline SpectralExtremes khatri_rao_extremes(const Matrix& x, std::size_t t) {
  const auto ev = symmetric_eigenvalues(khatri_rao_gram(x, t));
  const double top = std::sqrt(std::max(ev.front(), 0.0));
  double bottom = std::sqrt(std::max(ev.back(), 0.0));
  if (bottom < 1e-7 * top) bottom = 0.0;
  return {top, bottom};
}

}  // namespace snlab
