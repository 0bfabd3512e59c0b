#pragma once

#include <snlab/activation.hpp>
#include <snlab/errors.hpp>
#include <snlab/matrix.hpp>
#include <snlab/spectral.hpp>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

namespace snlab {

/// Layer weights Theta = (W, V) with W: d1 x d0 and V: d2 x d1. The same shape
/// carries tangents (Delta_W, Delta_V) and gradients; inner products sum over
/// both blocks.
struct NetParams {
  Matrix W;
  Matrix V;

  [[nodiscard]] std::size_t d0() const noexcept { return W.cols(); }
  [[nodiscard]] std::size_t d1() const noexcept { return W.rows(); }
  [[nodiscard]] std::size_t d2() const noexcept { return V.rows(); }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return W.size() + V.size(); }

  [[nodiscard]] bool consistent() const noexcept { return W.rows() == V.cols(); }

  [[nodiscard]] bool same_shape(const NetParams& o) const noexcept {
    return W.same_shape(o.W) && V.same_shape(o.V);
  }

  static NetParams zeros_like(const NetParams& p) {
    return {Matrix(p.W.rows(), p.W.cols()), Matrix(p.V.rows(), p.V.cols())};
  }

  NetParams& operator+=(const NetParams& o) {
    W += o.W;
    V += o.V;
    return *this;
  }
  NetParams& operator-=(const NetParams& o) {
    W -= o.W;
    V -= o.V;
    return *this;
  }
  NetParams& operator*=(double s) {
    W *= s;
    V *= s;
    return *this;
  }
  NetParams& axpy(double s, const NetParams& o) {
    W.axpy(s, o.W);
    V.axpy(s, o.V);
    return *this;
  }
  friend NetParams operator+(NetParams a, const NetParams& b) { return a += b; }
  friend NetParams operator-(NetParams a, const NetParams& b) { return a -= b; }
  friend NetParams operator*(double s, NetParams a) { return a *= s; }

  [[nodiscard]] bool all_finite() const noexcept { return W.all_finite() && V.all_finite(); }
};

inline double dot(const NetParams& a, const NetParams& b) { return dot(a.W, b.W) + dot(a.V, b.V); }
inline double squared_norm(const NetParams& a) { return squared_norm(a.W) + squared_norm(a.V); }
inline double norm(const NetParams& a) { return std::sqrt(squared_norm(a)); }

/// Training inputs X (d0 x n, unit-norm columns) and labels Y (d2 x n, ||Y|| <= 1).
struct Dataset {
  Matrix X;
  Matrix Y;

  [[nodiscard]] std::size_t n() const noexcept { return X.cols(); }
};

inline constexpr double kUnitNormTolerance = 1e-8;

/// Validates the data assumptions and returns the dataset.
inline Dataset make_dataset(Matrix x, Matrix y) {
  if (x.cols() != y.cols())
    throw DimensionError("make_dataset: X has " + std::to_string(x.cols()) + " columns, Y has " +
                         std::to_string(y.cols()));
  for (double c : column_norms(x))
    if (std::abs(c - 1.0) > kUnitNormTolerance)
      throw PreconditionError("make_dataset: X columns must have unit Euclidean norm");
  if (frobenius_norm(y) > 1.0 + kUnitNormTolerance)
    throw PreconditionError("make_dataset: labels must satisfy ||Y|| <= 1");
  return {std::move(x), std::move(y)};
}

namespace detail {

inline void check_shapes(const NetParams& theta, const Matrix& x, const char* op) {
  if (!theta.consistent())
    throw DimensionError(std::string(op) + ": W is " + theta.W.shape_string() + " but V is " +
                         theta.V.shape_string());
  if (theta.W.cols() != x.rows())
    throw DimensionError(std::string(op) + ": W is " + theta.W.shape_string() + " but X is " +
                         x.shape_string());
}

}  // namespace detail

/// Entrywise activation and slope of the pre-activations WX.
struct HiddenLayer {
  Matrix act;    // phi(WX)
  Matrix slope;  // phi'(WX)
};

inline HiddenLayer hidden_layer(const Matrix& w, const Matrix& x, const ActivationProfile& phi) {
  Matrix pre = matmul(w, x);
  Matrix slope(pre.rows(), pre.cols());
  auto p = pre.data();
  auto s = slope.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto v = phi.values(p[i]);
    p[i] = v.value;
    s[i] = v.slope;
  }
  return {std::move(pre), std::move(slope)};
}

inline Matrix apply_activation(const Matrix& pre, const ActivationProfile& phi) {
  Matrix out = pre;
  for (double& v : out.data()) v = phi.eval(v);
  return out;
}

/// Z = V phi(WX).
inline Matrix forward(const NetParams& theta, const Matrix& x, const ActivationProfile& phi) {
  detail::check_shapes(theta, x, "forward");
  return matmul(theta.V, apply_activation(matmul(theta.W, x), phi));
}

/// h(Theta) = ||V phi(WX) - Y||_F^2.
inline double loss(const NetParams& theta, const Dataset& data, const ActivationProfile& phi) {
  detail::check_shapes(theta, data.X, "loss");
  const Matrix z = forward(theta, data.X, phi);
  if (!z.same_shape(data.Y))
    throw DimensionError("loss: output " + z.shape_string() + " vs labels " +
                         data.Y.shape_string());
  return squared_norm(z - data.Y);
}

/// D Phi(Theta){Delta} = V (phi'(WX) o (Delta_W X)) + Delta_V phi(WX).
inline Matrix jacobian_apply(const NetParams& theta, const NetParams& delta, const Matrix& x,
                             const ActivationProfile& phi) {
  detail::check_shapes(theta, x, "jacobian_apply");
  if (!theta.same_shape(delta))
    throw DimensionError("jacobian_apply: tangent shape does not match parameters");
  const auto h = hidden_layer(theta.W, x, phi);
  Matrix out = matmul(theta.V, hadamard(h.slope, matmul(delta.W, x)));
  out += matmul(delta.V, h.act);
  return out;
}

/// D Phi*(Theta){Delta} = ((phi'(WX) o V^T Delta) X^T, Delta phi(X^T W^T)).
inline NetParams jacobian_adjoint(const NetParams& theta, const Matrix& cotangent,
                                  const Matrix& x, const ActivationProfile& phi) {
  detail::check_shapes(theta, x, "jacobian_adjoint");
  if (cotangent.rows() != theta.d2() || cotangent.cols() != x.cols())
    throw DimensionError("jacobian_adjoint: cotangent is " + cotangent.shape_string() +
                         ", expected " + std::to_string(theta.d2()) + "x" +
                         std::to_string(x.cols()));
  const auto h = hidden_layer(theta.W, x, phi);
  Matrix back = hadamard(matmul_tn(theta.V, cotangent), h.slope);
  return {matmul_nt(back, x), matmul_nt(cotangent, h.act)};
}

/// grad h(Theta) = D Phi*(Theta){2 (Z - Y)}.
inline NetParams gradient(const NetParams& theta, const Dataset& data,
                          const ActivationProfile& phi) {
  detail::check_shapes(theta, data.X, "gradient");
  const Matrix z = forward(theta, data.X, phi);
  if (!z.same_shape(data.Y))
    throw DimensionError("gradient: output " + z.shape_string() + " vs labels " +
                         data.Y.shape_string());
  return jacobian_adjoint(theta, 2.0 * (z - data.Y), data.X, phi);
}

/// Loss and gradient from one hidden-layer evaluation (used by the optimizers).
struct LossAndGradient {
  double loss = 0.0;
  NetParams grad;
};

inline LossAndGradient loss_and_gradient(const NetParams& theta, const Matrix& x, const Matrix& y,
                                         const ActivationProfile& phi) {
  detail::check_shapes(theta, x, "loss_and_gradient");
  const auto h = hidden_layer(theta.W, x, phi);
  Matrix residual = matmul(theta.V, h.act);
  if (!residual.same_shape(y))
    throw DimensionError("loss_and_gradient: output " + residual.shape_string() +
                         " vs labels " + y.shape_string());
  residual -= y;
  const double l = squared_norm(residual);
  residual *= 2.0;
  Matrix back = hadamard(matmul_tn(theta.V, residual), h.slope);
  return {l, {matmul_nt(back, x), matmul_nt(residual, h.act)}};
}

/// The Jacobian D Phi(Theta) as a (d2 n) x (d1 d0 + d2 d1) matrix. Output index
/// is row-major over Z; parameter index lists W row-major, then V row-major.
inline Matrix jacobian_matrix(const NetParams& theta, const Matrix& x,
                              const ActivationProfile& phi) {
  detail::check_shapes(theta, x, "jacobian_matrix");
  const std::size_t d0 = theta.d0();
  const std::size_t d1 = theta.d1();
  const std::size_t d2 = theta.d2();
  const std::size_t n = x.cols();
  const auto h = hidden_layer(theta.W, x, phi);
  Matrix j(d2 * n, d1 * d0 + d2 * d1);
  for (std::size_t r = 0; r < d2; ++r) {
    for (std::size_t a = 0; a < n; ++a) {
      const std::size_t row = r * n + a;
      // dZ[r,a]/dW[c,k] = V[r,c] phi'(WX)[c,a] X[k,a]
      for (std::size_t c = 0; c < d1; ++c) {
        const double s = theta.V(r, c) * h.slope(c, a);
        for (std::size_t k = 0; k < d0; ++k) j(row, c * d0 + k) = s * x(k, a);
      }
      // dZ[r,a]/dV[r,c] = phi(WX)[c,a]
      for (std::size_t c = 0; c < d1; ++c) j(row, d1 * d0 + r * d1 + c) = h.act(c, a);
    }
  }
  return j;
}

inline constexpr std::size_t kMaterializeLimit = 4096;

/// Extreme singular values of D Phi*(Theta). Materializes the Jacobian when the
/// parameter count is at most 4096; otherwise forms the (d2 n) x (d2 n) kernel
/// D Phi D Phi* column by column and takes square roots of its extreme eigenvalues.
inline SpectralExtremes adjoint_extremes(const NetParams& theta, const Matrix& x,
                                         const ActivationProfile& phi) {
  if (theta.parameter_count() <= kMaterializeLimit) return svd_extremes(jacobian_matrix(theta, x, phi));
  const std::size_t d2 = theta.d2();
  const std::size_t n = x.cols();
  const std::size_t m = d2 * n;
  Matrix kernel(m, m);
  Matrix e(d2, n);
  for (std::size_t col = 0; col < m; ++col) {
    e.data()[col] = 1.0;
    const Matrix k = jacobian_apply(theta, jacobian_adjoint(theta, e, x, phi), x, phi);
    for (std::size_t row = 0; row < m; ++row) kernel(row, col) = k.data()[row];
    e.data()[col] = 0.0;
  }
  // Symmetrize against roundoff before the eigensolve.
  Matrix sym = kernel;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) sym(i, j) = 0.5 * (kernel(i, j) + kernel(j, i));
  const auto ev = symmetric_eigenvalues(sym);
  return {std::sqrt(std::max(ev.front(), 0.0)), std::sqrt(std::max(ev.back(), 0.0))};
}

}  // namespace snlab
