#pragma once

#include <snlab/activation.hpp>
#include <snlab/certificates.hpp>
#include <snlab/errors.hpp>
#include <snlab/harness/config.hpp>
#include <snlab/harness/data.hpp>
#include <snlab/harness/training.hpp>
#include <snlab/hermite.hpp>
#include <snlab/optimizers.hpp>
#include <snlab/random.hpp>
#include <snlab/shallow_net.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace snlab {

/// Training split plus an optional held-out split. Labels are empty for regression data.
struct Problem {
  Dataset train;
  std::optional<Dataset> test;
  std::vector<std::uint8_t> train_labels;
  std::vector<std::uint8_t> test_labels;
};

inline constexpr const char* kLabelScalingNote =
    "labels are one-hot and scaled by 1/sqrt(n) per split so that ||Y||_F = 1";

namespace detail {

inline LabeledData take_columns(const LabeledData& all, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx;
  for (std::size_t j = begin; j < end; ++j) idx.push_back(j);
  LabeledData out;
  out.labels.assign(all.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    all.labels.begin() + static_cast<std::ptrdiff_t>(end));
  out.data = make_dataset(select_columns(all.data.X, idx),
                          one_hot_labels(out.labels, all.data.Y.rows()));
  return out;
}

inline Problem split_problem(const LabeledData& all, std::size_t n_train) {
  const std::size_t total = all.labels.size();
  if (n_train == 0 || n_train > total)
    throw ConfigError("dataset has " + std::to_string(total) + " items, cannot take n = " +
                      std::to_string(n_train));
  Problem p;
  auto tr = take_columns(all, 0, n_train);
  p.train = std::move(tr.data);
  p.train_labels = std::move(tr.labels);
  if (n_train < total) {
    auto te = take_columns(all, n_train, total);
    p.test = std::move(te.data);
    p.test_labels = std::move(te.labels);
  }
  return p;
}

}  // namespace detail

/// Builds the data named by the config. Sphere data pairs unit-norm inputs with Gaussian
/// targets scaled to ||Y||_F = 1; digit and IDX data carry class labels and a test split.
inline Problem make_problem(const ExperimentConfig& cfg, const RngStream& rng) {
  if (cfg.data_source == "sphere") {
    Problem p;
    Matrix y = gaussian_matrix(cfg.d2, cfg.n, 1.0, rng.child(1));
    y *= 1.0 / frobenius_norm(y);
    p.train = make_dataset(sample_unit_sphere_data(cfg.n, cfg.d0, rng.child(0)), std::move(y));
    return p;
  }
  if (cfg.data_source == "digits")
    return detail::split_problem(synthetic_digits(cfg.n + cfg.n_test, rng.child(0), cfg.digit_noise),
                                 cfg.n);
  if (cfg.data_source == "idx")
    return detail::split_problem(load_idx(cfg.images_path, cfg.labels_path, cfg.n + cfg.n_test),
                                 cfg.n);
  throw ConfigError("unknown data source \"" + cfg.data_source + "\"");
}

/// Layer sizes implied by the data and a hidden width.
inline Dims problem_dims(const Problem& p, std::size_t d1) {
  return {p.train.X.rows(), d1, p.train.Y.rows(), p.train.X.cols()};
}

/// Quantities that depend on X and the activation only, computed once per dataset.
struct DataGeometry {
  HermiteExpansion expansion;
  std::optional<OrderSelection> order;  // empty: no usable order up to the search limit
  double sigma_max_x = 0.0;
};

inline DataGeometry data_geometry(const Matrix& x, const ActivationProfile& phi) {
  DataGeometry g;
  g.expansion = hermite_coefficients(phi.eval);
  const auto o = select_order(x, g.expansion, kMaxKhatriRaoOrder);
  if (o.t != 0) g.order = o;
  g.sigma_max_x = sigma_max(x);
  return g;
}

/// Certificates that depend on the data and omega1 but not on the draw of weights.
struct SchemeCertificates {
  std::optional<WidthCertificate> width;
  std::string width_note;
  std::optional<FailureProbability> psi;
  std::optional<LazyRegimeReport> lazy;
};

inline SchemeCertificates scheme_certificates(const Matrix& x, const ActivationProfile& phi,
                                              const DataGeometry& geo, const Dims& dims,
                                              const InitScheme& scheme,
                                              const ExperimentConfig& cfg) {
  SchemeCertificates s;
  if (!geo.order) {
    s.width_note = "no order t <= " + std::to_string(kMaxKhatriRaoOrder) +
                   " gives c_t != 0 and a full-rank X^{*t}";
  } else if (scheme.omega1 > 0.0) {
    s.width = width_requirement(x, geo.expansion, phi, cfg.probes, scheme.omega1, cfg.chi_max,
                                dims.d1, geo.order);
  }
  if (scheme.omega1 > 0.0) {
    const auto unit = expected_gram_extremes(x, scaled_expansion(phi, scheme.omega1));
    s.psi = failure_probability(dims, x, phi, cfg.probes, unit);
  }
  if (geo.order && scheme.omega1 > 0.0 && scheme.omega2 > 0.0)
    s.lazy = lazy_regime_report(scheme.omega1, scheme.omega2, dims,
                                {geo.sigma_max_x, geo.order->sigma_min_xt}, phi, geo.expansion,
                                cfg.probes);
  return s;
}

/// Certificates of one initialization.
struct RunCertificates {
  TheoryConstants constants;
  double h0 = 0.0;
  double eta = 0.0;  // learning_rate at init
  std::optional<InitCertificate> init;  // empty when mu = 0
};

inline RunCertificates run_certificates(const NetParams& theta0, const Dataset& data,
                                        const ActivationProfile& phi,
                                        const ExperimentConfig& cfg) {
  RunCertificates r;
  r.constants = measure_constants(theta0, data.X, phi, cfg.chi_max);
  r.h0 = loss(theta0, data, phi);
  r.eta = learning_rate(r.constants, 2.0 * std::sqrt(r.h0), cfg.c_eta);
  if (r.constants.mu_phi > 0.0 && r.h0 > 0.0) r.init = certify_init(r.h0, r.constants, cfg.c_init);
  return r;
}

/// Hidden width: the configured one, or the certified requirement capped at d1_cap.
inline std::size_t resolve_width(const ExperimentConfig& cfg, const Problem& p,
                                 const ActivationProfile& phi, const DataGeometry& geo) {
  if (cfg.d1) return *cfg.d1;
  if (!cfg.omega1) throw ConfigError("config.dims.d1 = \"auto\" needs config.init.omega1");
  if (!geo.order)
    throw InfeasibleDataError("d1 = \"auto\": the data admit no width certificate");
  const auto w = width_requirement(p.train.X, geo.expansion, phi, cfg.probes, *cfg.omega1,
                                   cfg.chi_max, 1, geo.order);
  const double need = std::ceil(w.d1_required);
  return need >= static_cast<double>(cfg.d1_cap) ? cfg.d1_cap
                                                 : std::max<std::size_t>(1, static_cast<std::size_t>(need));
}

/// Everything a single `train` run produces.
struct RunReport {
  Dims dims;
  InitScheme scheme;
  RunCertificates certs;
  SchemeCertificates scheme_certs;
  double eta = 0.0;
  double stop_loss = 0.0;
  TrainingTrace trace;
  std::optional<RateCertificate> rate;
  std::optional<ConfinementResult> confinement;
};

inline double stop_loss_for(const ExperimentConfig& cfg, double h0) {
  return cfg.stop_loss_relative ? *cfg.stop_loss_relative * h0 : cfg.stop_loss;
}

/// One training run from the config: data, init, certificates, descent, post-hoc checks.
/// Streams: child(0) data, child(1) weights, child(2) minibatch order.
inline RunReport run_training(const ExperimentConfig& cfg) {
  const RngStream rng(cfg.seed);
  const auto& phi = activation(cfg.activation);
  const Problem p = make_problem(cfg, rng.child(0));
  const auto geo = data_geometry(p.train.X, phi);
  RunReport r;
  r.dims = problem_dims(p, resolve_width(cfg, p, phi, geo));
  r.scheme = cfg.scheme(r.dims.d1);
  const NetParams theta0 = init_weights(r.dims, r.scheme, rng.child(1));
  r.certs = run_certificates(theta0, p.train, phi, cfg);
  r.scheme_certs = scheme_certificates(p.train.X, phi, geo, r.dims, r.scheme, cfg);
  r.eta = cfg.eta.value_or(r.certs.eta);
  r.stop_loss = stop_loss_for(cfg, r.certs.h0);
  if (cfg.method == "sgd")
    r.trace = sgd_train(theta0, p.train, phi, r.eta, std::min(cfg.batch_size, r.dims.n), cfg.epochs,
                        rng.child(2), r.stop_loss, true);
  else
    r.trace = gd_train(theta0, p.train, phi, r.eta, cfg.max_iters, r.stop_loss, true);
  if (r.trace.losses.size() >= 10 && r.certs.h0 > 0.0) {
    r.rate = rate_certificate(r.trace, r.certs.constants, r.eta);
    r.trace.fitted_rate = r.rate->fitted_rate;
  }
  if (r.certs.constants.mu_phi > 0.0)
    r.confinement = confinement_check(r.trace, r.certs.constants, r.certs.h0);
  return r;
}

}  // namespace snlab
