#pragma once

#include <snlab/activation.hpp>
#include <snlab/certificates.hpp>
#include <snlab/errors.hpp>
#include <snlab/matrix.hpp>
#include <snlab/shallow_net.hpp>
#include <snlab/spectral.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace snlab {

struct TrainingTrace {
  std::vector<double> losses;
  std::vector<double> grad_norms;
  double path_length = 0.0;
  std::vector<double> dist_from_init;
  double chi_running_max = 0.0;
  std::optional<std::vector<double>> lazy_deviation;
  std::optional<double> fitted_rate;
  NetParams final_params;

  [[nodiscard]] std::size_t iterations() const noexcept {
    return losses.empty() ? 0 : losses.size() - 1;
  }
  [[nodiscard]] double max_dist_from_init() const {
    return dist_from_init.empty() ? 0.0
                                  : *std::max_element(dist_from_init.begin(), dist_from_init.end());
  }
};

struct FlowTrace {
  std::vector<double> times;
  std::vector<double> losses;
  double path_length = 0.0;
  std::vector<double> dist_from_init;
  NetParams final_params;
};

inline constexpr double kDefaultStopLoss = 1e-10;

/// sigma_max(V) from the largest eigenvalue of V V^T (V has few rows).
inline double top_singular_value(const Matrix& v) {
  const auto ev = symmetric_eigenvalues(matmul_nt(v, v));
  return std::sqrt(std::max(ev.front(), 0.0));
}

/// The network linearized at Theta_0:
///   Z~(Theta_0 + delta) = Phi(Theta_0) + D Phi(Theta_0){delta}.
/// Activations and slopes at W_0 X are frozen at construction.
class LinearizedModel {
 public:
  LinearizedModel(const NetParams& theta0, const Matrix& x, const ActivationProfile& phi)
      : v0_(theta0.V), x_(x) {
    detail::check_shapes(theta0, x, "LinearizedModel");
    auto h = hidden_layer(theta0.W, x, phi);
    act0_ = std::move(h.act);
    slope0_ = std::move(h.slope);
    z0_ = matmul(v0_, act0_);
  }

  /// Loss ||Z~ - Y||^2 and its gradient in delta, on all columns or on `cols`.
  [[nodiscard]] LossAndGradient loss_and_gradient(const NetParams& delta, const Matrix& y,
                                                  std::span<const std::size_t> cols = {}) const {
    if (cols.empty()) return evaluate(delta, y, x_, act0_, slope0_, z0_);
    return evaluate(delta, y, select_columns(x_, cols), select_columns(act0_, cols),
                    select_columns(slope0_, cols), select_columns(z0_, cols));
  }

  [[nodiscard]] double loss(const NetParams& delta, const Matrix& y) const {
    Matrix r = predict(delta, x_, act0_, slope0_, z0_);
    r -= y;
    return squared_norm(r);
  }

 private:
  [[nodiscard]] Matrix predict(const NetParams& delta, const Matrix& x, const Matrix& act,
                               const Matrix& slope, const Matrix& z0) const {
    Matrix z = z0;
    z += matmul(v0_, hadamard(slope, matmul(delta.W, x)));
    z += matmul(delta.V, act);
    return z;
  }

  [[nodiscard]] LossAndGradient evaluate(const NetParams& delta, const Matrix& y, const Matrix& x,
                                         const Matrix& act, const Matrix& slope,
                                         const Matrix& z0) const {
    Matrix r = predict(delta, x, act, slope, z0);
    if (!r.same_shape(y)) throw DimensionError("LinearizedModel: labels shape mismatch");
    r -= y;
    const double l = squared_norm(r);
    r *= 2.0;
    Matrix back = hadamard(matmul_tn(v0_, r), slope);
    return {l, {matmul_nt(back, x), matmul_nt(r, act)}};
  }

  Matrix v0_;
  Matrix x_;
  Matrix act0_;
  Matrix slope0_;
  Matrix z0_;
};

namespace detail {

inline void check_finite_loss(double l, std::size_t i, const char* op) {
  if (!std::isfinite(l))
    throw DivergenceError(std::string(op) + ": non-finite loss at iteration " + std::to_string(i),
                          i);
}

}  // namespace detail

/// Full-batch gradient descent Theta_{i+1} = Theta_i - eta grad h(Theta_i). Stops after the
/// first recorded loss <= stop_loss or after max_iters updates. With `track_lazy`, the
/// linearized twin is stepped alongside and |h - h~| is recorded at every iterate.
inline TrainingTrace gd_train(const NetParams& theta0, const Dataset& data,
                              const ActivationProfile& phi, double eta, std::size_t max_iters,
                              double stop_loss = kDefaultStopLoss, bool track_lazy = false) {
  if (!(eta > 0.0)) throw ArgumentError("gd_train: eta must be positive");
  if (max_iters == 0) throw ArgumentError("gd_train: max_iters must be positive");
  detail::check_shapes(theta0, data.X, "gd_train");

  TrainingTrace tr;
  NetParams theta = theta0;
  std::optional<LinearizedModel> twin;
  NetParams delta;
  if (track_lazy) {
    twin.emplace(theta0, data.X, phi);
    delta = NetParams::zeros_like(theta0);
    tr.lazy_deviation.emplace();
  }
  tr.chi_running_max = top_singular_value(theta.V);

  for (std::size_t i = 0;; ++i) {
    auto lg = loss_and_gradient(theta, data.X, data.Y, phi);
    detail::check_finite_loss(lg.loss, i, "gd_train");
    tr.losses.push_back(lg.loss);
    tr.grad_norms.push_back(norm(lg.grad));
    tr.dist_from_init.push_back(i == 0 ? 0.0 : norm(theta - theta0));
    std::optional<LossAndGradient> tg;
    if (twin) {
      tg = twin->loss_and_gradient(delta, data.Y);
      tr.lazy_deviation->push_back(std::abs(lg.loss - tg->loss));
    }
    if (lg.loss <= stop_loss || i == max_iters) break;

    theta.axpy(-eta, lg.grad);
    tr.path_length += eta * tr.grad_norms.back();
    if (!theta.all_finite())
      throw DivergenceError("gd_train: non-finite parameters at iteration " + std::to_string(i + 1),
                            i + 1);
    tr.chi_running_max = std::max(tr.chi_running_max, top_singular_value(theta.V));
    if (twin) delta.axpy(-eta, tg->grad);
  }
  tr.final_params = std::move(theta);
  return tr;
}

/// Integrates d gamma/dt = -grad h(gamma) with classical fixed-step RK4. The last step is
/// shortened to land on t_end.
inline FlowTrace gradient_flow(const NetParams& theta0, const Dataset& data,
                               const ActivationProfile& phi, double dt, double t_end) {
  if (!(dt > 0.0) || !(t_end > 0.0))
    throw ArgumentError("gradient_flow: dt and t_end must be positive");
  detail::check_shapes(theta0, data.X, "gradient_flow");
  auto field = [&](const NetParams& p) {
    return loss_and_gradient(p, data.X, data.Y, phi);
  };

  FlowTrace ft;
  NetParams gamma = theta0;
  auto k1 = field(gamma);
  ft.times.push_back(0.0);
  ft.losses.push_back(k1.loss);
  ft.dist_from_init.push_back(0.0);
  const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  double t = 0.0;
  for (std::size_t s = 1; s <= steps; ++s) {
    const double h = s == steps ? t_end - t : dt;
    const auto k2 = field(gamma + (-0.5 * h) * k1.grad);
    const auto k3 = field(gamma + (-0.5 * h) * k2.grad);
    const auto k4 = field(gamma + (-h) * k3.grad);
    NetParams step = k1.grad;
    step.axpy(2.0, k2.grad).axpy(2.0, k3.grad) += k4.grad;
    step *= -h / 6.0;
    gamma += step;
    if (!gamma.all_finite())
      throw DivergenceError("gradient_flow: non-finite state at step " + std::to_string(s), s);
    ft.path_length += norm(step);
    t = s == steps ? t_end : static_cast<double>(s) * dt;
    k1 = field(gamma);
    detail::check_finite_loss(k1.loss, s, "gradient_flow");
    ft.times.push_back(t);
    ft.losses.push_back(k1.loss);
    ft.dist_from_init.push_back(norm(gamma - theta0));
  }
  ft.final_params = std::move(gamma);
  return ft;
}

struct RateCertificate {
  bool monotone = false;
  double fitted_rate = 0.0;
  /// Uncentered: 1 - SS_res / sum y^2, the usual figure for a fit through the origin.
  double r_squared = 0.0;
  /// 1 - SS_res / SS_tot about the mean of y; reported for comparison.
  double r_squared_centered = 0.0;
  /// eta alpha_f mu^2: the contraction the theory guarantees up to the constant C.
  double theory_factor = 0.0;
  std::size_t fitted_points = 0;
};

inline constexpr double kRateFloor = 1e-14;

/// Fits log losses[i] = log losses[0] + i log(1 - r) by least squares (intercept fixed at
/// losses[0]) over the iterates with loss > 1e-14.
inline RateCertificate rate_certificate(const TrainingTrace& trace, const TheoryConstants& c,
                                        double eta) {
  const auto& l = trace.losses;
  if (l.size() < 10) throw ArgumentError("rate_certificate: need at least 10 recorded losses");
  if (!(l.front() > 0.0)) throw ArgumentError("rate_certificate: initial loss must be positive");
  RateCertificate rc;
  rc.theory_factor = eta * c.alpha_f * c.mu_phi * c.mu_phi;
  rc.monotone = true;
  for (std::size_t i = 1; i < l.size(); ++i)
    if (l[i] > l[i - 1] * (1.0 + 1e-12)) rc.monotone = false;

  const double log0 = std::log(l.front());
  std::vector<double> y;
  for (std::size_t i = 0; i < l.size() && l[i] > kRateFloor; ++i) y.push_back(std::log(l[i]) - log0);
  rc.fitted_points = y.size();
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double di = static_cast<double>(i);
    sxy += di * y[i];
    sxx += di * di;
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  rc.fitted_rate = -std::expm1(slope);

  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_res = 0.0;
  double ss_raw = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - slope * static_cast<double>(i);
    ss_res += e * e;
    ss_raw += y[i] * y[i];
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  auto ratio = [ss_res](double ss) { return ss > 0.0 ? 1.0 - ss_res / ss : (ss_res == 0.0 ? 1.0 : 0.0); };
  rc.r_squared = ratio(ss_raw);
  rc.r_squared_centered = ratio(ss_tot);
  return rc;
}

struct ConfinementResult {
  bool confined = false;
  double length_bound = 0.0;
  double max_dist = 0.0;
  double radius = 0.0;
};

inline constexpr double kDefaultLengthSlack = 10.0;

/// Trajectory length against K_len nu sqrt(h0) / (mu^2 sqrt(alpha_f)), and distance from
/// Theta_0 against rho.
inline ConfinementResult confinement_check(const TrainingTrace& trace, const TheoryConstants& c,
                                           double h0, double k_len = kDefaultLengthSlack) {
  ConfinementResult r;
  r.length_bound = k_len * c.nu_phi * std::sqrt(std::max(h0, 0.0)) /
                   (c.mu_phi * c.mu_phi * std::sqrt(c.alpha_f));
  r.max_dist = trace.max_dist_from_init();
  r.radius = c.rho_phi;
  r.confined = trace.path_length <= r.length_bound && r.max_dist <= c.rho_phi;
  return r;
}

}  // namespace snlab
