#pragma once

#include <snlab/activation.hpp>
#include <snlab/certificates.hpp>
#include <snlab/errors.hpp>
#include <snlab/optimizers.hpp>
#include <snlab/random.hpp>
#include <snlab/shallow_net.hpp>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace snlab {

/// W0 ~ N(0, omega1^2) of shape d1 x d0 and V0 ~ N(0, omega2^2) of shape d2 x d1.
/// A scheme outside its product budget is allowed; callers report it.
inline NetParams init_weights(const Dims& dims, const InitScheme& scheme, const RngStream& rng) {
  if (!(scheme.omega1 >= 0.0) || !(scheme.omega2 >= 0.0))
    throw ArgumentError("init_weights: omega1 and omega2 must be nonnegative");
  if (dims.d0 == 0 || dims.d1 == 0 || dims.d2 == 0)
    throw ArgumentError("init_weights: layer widths must be positive");
  return {gaussian_matrix(dims.d1, dims.d0, scheme.omega1, rng.child(0)),
          gaussian_matrix(dims.d2, dims.d1, scheme.omega2, rng.child(1))};
}

/// Minibatch SGD on h. Each epoch draws a fresh permutation from rng.child(epoch) and walks it
/// in consecutive batches; indices inside a batch are sorted so that batch_size = n reproduces
/// full-batch descent exactly. The batch gradient is rescaled by n / |B| to estimate the
/// full gradient. The trace holds one record per epoch, taken on the full batch.
inline TrainingTrace sgd_train(const NetParams& theta0, const Dataset& data,
                               const ActivationProfile& phi, double lr, std::size_t batch_size,
                               std::size_t epochs, const RngStream& rng, double stop_loss = 0.0,
                               bool track_lazy = false) {
  const std::size_t n = data.n();
  if (!(lr > 0.0)) throw ArgumentError("sgd_train: learning rate must be positive");
  if (batch_size == 0 || batch_size > n)
    throw ArgumentError("sgd_train: batch_size must lie in [1, n]");
  if (epochs == 0) throw ArgumentError("sgd_train: epochs must be positive");
  detail::check_shapes(theta0, data.X, "sgd_train");

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

  auto record = [&](std::size_t epoch) {
    const auto lg = loss_and_gradient(theta, data.X, data.Y, phi);
    if (!std::isfinite(lg.loss))
      throw DivergenceError("sgd_train: non-finite loss at epoch " + std::to_string(epoch), epoch);
    tr.losses.push_back(lg.loss);
    tr.grad_norms.push_back(norm(lg.grad));
    tr.dist_from_init.push_back(epoch == 0 ? 0.0 : norm(theta - theta0));
    if (twin) tr.lazy_deviation->push_back(std::abs(lg.loss - twin->loss(delta, data.Y)));
    return lg.loss;
  };

  if (record(0) <= stop_loss) {
    tr.final_params = std::move(theta);
    return tr;
  }
  std::vector<std::size_t> batch;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto order = random_permutation(n, rng.child(epoch));
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t stop = std::min(n, start + batch_size);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(stop));
      std::sort(batch.begin(), batch.end());
      const double scale = static_cast<double>(n) / static_cast<double>(batch.size());
      const Matrix yb = select_columns(data.Y, batch);
      auto lg = batch.size() == n ? loss_and_gradient(theta, data.X, data.Y, phi)
                                  : loss_and_gradient(theta, select_columns(data.X, batch), yb, phi);
      if (twin) {
        const auto tg = twin->loss_and_gradient(delta, batch.size() == n ? data.Y : yb,
                                                batch.size() == n ? std::span<const std::size_t>{}
                                                                  : std::span<const std::size_t>(batch));
        delta.axpy(-lr * scale, tg.grad);
      }
      theta.axpy(-lr * scale, lg.grad);
      tr.path_length += lr * scale * norm(lg.grad);
      if (!theta.all_finite())
        throw DivergenceError("sgd_train: non-finite parameters in epoch " + std::to_string(epoch),
                              epoch);
    }
    tr.chi_running_max = std::max(tr.chi_running_max, top_singular_value(theta.V));
    if (record(epoch) <= stop_loss) break;
  }
  tr.final_params = std::move(theta);
  return tr;
}

}  // namespace snlab
