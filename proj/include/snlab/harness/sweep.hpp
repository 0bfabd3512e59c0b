#pragma once

#include <snlab/activation.hpp>
#include <snlab/certificates.hpp>
#include <snlab/errors.hpp>
#include <snlab/harness/config.hpp>
#include <snlab/harness/data.hpp>
#include <snlab/harness/experiment.hpp>
#include <snlab/harness/training.hpp>
#include <snlab/optimizers.hpp>
#include <snlab/random.hpp>
#include <snlab/shallow_net.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace snlab {

/// Index of the largest output per column.
inline std::vector<std::uint8_t> predict_classes(const NetParams& theta, const Matrix& x,
                                                 const ActivationProfile& phi) {
  const Matrix out = forward(theta, x, phi);
  std::vector<std::uint8_t> cls(out.cols());
  for (std::size_t j = 0; j < out.cols(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < out.rows(); ++i)
      if (out(i, j) > out(best, j)) best = i;
    cls[j] = static_cast<std::uint8_t>(best);
  }
  return cls;
}

inline double accuracy(const std::vector<std::uint8_t>& predicted,
                       const std::vector<std::uint8_t>& labels) {
  if (predicted.size() != labels.size())
    throw DimensionError("accuracy: prediction and label counts differ");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < labels.size(); ++j) hits += predicted[j] == labels[j];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

struct TeacherReport {
  NetParams params;
  double eta = 0.0;
  std::size_t epochs = 0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

inline constexpr std::size_t kTeacherCheckEvery = 10;

/// He-initialized teacher with the student's architecture, trained by SGD on the true labels
/// until its train accuracy reaches cfg.teacher_accuracy. Accuracy is checked every
/// kTeacherCheckEvery epochs; missing the target within cfg.teacher_epochs throws TeacherError.
inline TeacherReport train_teacher(const ExperimentConfig& cfg, const Problem& p,
                                   const ActivationProfile& phi, const RngStream& rng) {
  if (p.train_labels.empty())
    throw ConfigError("teacher-student needs labeled data (data.source \"digits\" or \"idx\")");
  const Dims dims = problem_dims(p, cfg.d1.value_or(64));
  const double d0 = static_cast<double>(dims.d0);
  const double d1 = static_cast<double>(dims.d1);
  const InitScheme he{std::sqrt(2.0 / d0), std::sqrt(2.0 / d1), 2.0 / std::sqrt(d0 * d1)};
  TeacherReport t;
  t.params = init_weights(dims, he, rng.child(0));
  t.eta = cfg.teacher_eta.value_or(run_certificates(t.params, p.train, phi, cfg).eta);
  const std::size_t batch = std::min(cfg.batch_size, dims.n);
  for (std::size_t chunk = 0; t.epochs < cfg.teacher_epochs; ++chunk) {
    const std::size_t e = std::min(kTeacherCheckEvery, cfg.teacher_epochs - t.epochs);
    auto tr = sgd_train(t.params, p.train, phi, t.eta, batch, e, rng.child(1).child(chunk));
    t.params = std::move(tr.final_params);
    t.epochs += e;
    t.final_loss = tr.losses.back();
    t.train_accuracy = accuracy(predict_classes(t.params, p.train.X, phi), p.train_labels);
    if (t.train_accuracy >= cfg.teacher_accuracy) return t;
  }
  throw TeacherError("teacher reached train accuracy " + std::to_string(t.train_accuracy) +
                     " (target " + std::to_string(cfg.teacher_accuracy) + ") after " +
                     std::to_string(t.epochs) + " epochs at eta " + std::to_string(t.eta) +
                     ", final loss " + std::to_string(t.final_loss));
}

/// Replaces the labels of both splits with the teacher's predicted classes.
inline Problem relabel(const Problem& p, const NetParams& teacher, const ActivationProfile& phi) {
  Problem out;
  out.train_labels = predict_classes(teacher, p.train.X, phi);
  out.train = make_dataset(p.train.X, one_hot_labels(out.train_labels, p.train.Y.rows()));
  if (p.test) {
    out.test_labels = predict_classes(teacher, p.test->X, phi);
    out.test = make_dataset(p.test->X, one_hot_labels(out.test_labels, p.test->Y.rows()));
  }
  return out;
}

struct SweepRecord {
  double ratio = 0.0;
  std::size_t ratio_index = 0;
  std::size_t seed = 0;
  double omega1 = 0.0;
  double omega2 = 0.0;
  bool within_budget = true;
  double eta = 0.0;
  double h0 = 0.0;
  double mu = 0.0;
  std::optional<InitCertificate> init;
  std::size_t steps = 0;
  double final_train_loss = 0.0;
  std::optional<double> final_test_loss;
  std::optional<double> train_accuracy;
  std::optional<double> test_accuracy;
  double lazy_deviation_final = 0.0;
  double lazy_deviation_max = 0.0;
  std::optional<double> fitted_rate;
  std::optional<bool> confined;
  bool reached_threshold = false;
};

struct SweepAggregate {
  double ratio = 0.0;
  double median_train_loss = 0.0;
  std::optional<double> median_test_loss;
  double median_lazy_deviation = 0.0;
  double lazy_band_lower = 0.0;  // mean -+ 1.96 sd / sqrt(k)
  double lazy_band_upper = 0.0;
  bool all_reached = false;
};

struct SweepReport {
  Dims dims;
  double product_budget = 0.0;
  std::string method;
  double train_threshold = 0.0;
  std::string label_scaling = kLabelScalingNote;
  std::optional<TeacherReport> teacher;
  std::vector<double> ratios;
  std::vector<SchemeCertificates> ratio_certificates;  // one per ratio
  std::vector<SweepRecord> records;                    // ratio-major, seed-minor
  std::vector<SweepAggregate> aggregates;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline SweepRecord sweep_point(const ExperimentConfig& cfg, const Problem& p,
                               const ActivationProfile& phi, const Dims& dims,
                               const InitScheme& scheme, const RngStream& rng) {
  SweepRecord r;
  r.omega1 = scheme.omega1;
  r.omega2 = scheme.omega2;
  r.within_budget = scheme.within_budget();
  const NetParams theta0 = init_weights(dims, scheme, rng.child(0));
  const auto certs = run_certificates(theta0, p.train, phi, cfg);
  r.h0 = certs.h0;
  r.mu = certs.constants.mu_phi;
  r.init = certs.init;
  r.eta = cfg.eta.value_or(certs.eta);
  const double stop = stop_loss_for(cfg, certs.h0);
  const auto tr = cfg.method == "sgd"
                      ? sgd_train(theta0, p.train, phi, r.eta, std::min(cfg.batch_size, dims.n),
                                  cfg.epochs, rng.child(1), stop, true)
                      : gd_train(theta0, p.train, phi, r.eta, cfg.max_iters, stop, true);
  r.steps = tr.losses.size() - 1;
  r.final_train_loss = tr.losses.back();
  r.reached_threshold = r.final_train_loss <= cfg.train_threshold;
  r.lazy_deviation_final = tr.lazy_deviation->back();
  r.lazy_deviation_max = *std::max_element(tr.lazy_deviation->begin(), tr.lazy_deviation->end());
  if (tr.losses.size() >= 10 && certs.h0 > 0.0)
    r.fitted_rate = rate_certificate(tr, certs.constants, r.eta).fitted_rate;
  if (certs.constants.mu_phi > 0.0)
    r.confined = confinement_check(tr, certs.constants, certs.h0).confined;
  if (p.test) r.final_test_loss = loss(tr.final_params, *p.test, phi);
  if (!p.train_labels.empty())
    r.train_accuracy = accuracy(predict_classes(tr.final_params, p.train.X, phi), p.train_labels);
  if (p.test && !p.test_labels.empty())
    r.test_accuracy = accuracy(predict_classes(tr.final_params, p.test->X, phi), p.test_labels);
  return r;
}

}  // namespace detail

/// Trains students for every (ratio, seed) pair at the fixed product budget. Points run on
/// cfg.workers threads; point p uses stream rng.child(p) and records are merged in point order,
/// so the report does not depend on the worker count.
inline SweepReport ratio_sweep(const ExperimentConfig& cfg, const Problem& p,
                               const ActivationProfile& phi, const RngStream& rng) {
  SweepReport rep;
  rep.dims = problem_dims(p, cfg.d1.value_or(64));
  rep.product_budget = cfg.budget_for(rep.dims.d1);
  rep.method = cfg.method;
  rep.train_threshold = cfg.train_threshold;
  rep.ratios = cfg.ratios;

  const auto geo = data_geometry(p.train.X, phi);
  std::vector<InitScheme> schemes;
  for (double r : cfg.ratios) {
    schemes.push_back(cfg.scheme_for(r, rep.dims.d1));
    rep.ratio_certificates.push_back(
        scheme_certificates(p.train.X, phi, geo, rep.dims, schemes.back(), cfg));
  }

  const std::size_t k = cfg.seeds_per_point;
  const std::size_t total = cfg.ratios.size() * k;
  std::vector<std::optional<SweepRecord>> slots(total);
  std::vector<std::exception_ptr> errors(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      try {
        auto rec = detail::sweep_point(cfg, p, phi, rep.dims, schemes[i / k], rng.child(i));
        rec.ratio = cfg.ratios[i / k];
        rec.ratio_index = i / k;
        rec.seed = i % k;
        slots[i] = std::move(rec);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t workers = cfg.workers ? cfg.workers : std::max(1U, std::thread::hardware_concurrency());
  workers = std::min(workers, total);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < total; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    rep.records.push_back(std::move(*slots[i]));
  }

  for (std::size_t ri = 0; ri < cfg.ratios.size(); ++ri) {
    SweepAggregate a;
    a.ratio = cfg.ratios[ri];
    std::vector<double> train, test, lazy;
    a.all_reached = true;
    for (std::size_t s = 0; s < k; ++s) {
      const auto& r = rep.records[ri * k + s];
      train.push_back(r.final_train_loss);
      if (r.final_test_loss) test.push_back(*r.final_test_loss);
      lazy.push_back(r.lazy_deviation_final);
      a.all_reached = a.all_reached && r.reached_threshold;
    }
    a.median_train_loss = detail::median(train);
    if (!test.empty()) a.median_test_loss = detail::median(test);
    a.median_lazy_deviation = detail::median(lazy);
    double mean = 0.0, ss = 0.0;
    for (double v : lazy) mean += v / static_cast<double>(k);
    for (double v : lazy) ss += (v - mean) * (v - mean);
    const double half =
        k > 1 ? 1.96 * std::sqrt(ss / static_cast<double>(k - 1)) / std::sqrt(static_cast<double>(k))
              : 0.0;
    a.lazy_band_lower = mean - half;
    a.lazy_band_upper = mean + half;
    rep.aggregates.push_back(a);
  }
  return rep;
}

/// Lazy-deviation sweep on the configured data as is.
inline SweepReport lazy_sweep(const ExperimentConfig& cfg) {
  const RngStream rng(cfg.seed);
  const auto& phi = activation(cfg.activation);
  return ratio_sweep(cfg, make_problem(cfg, rng.child(0)), phi, rng.child(3));
}

/// Teacher-student sweep: train a teacher, relabel both splits with its predictions, then
/// sweep students over the ratios.
inline SweepReport teacher_student_sweep(const ExperimentConfig& cfg) {
  const RngStream rng(cfg.seed);
  const auto& phi = activation(cfg.activation);
  const Problem raw = make_problem(cfg, rng.child(0));
  auto teacher = train_teacher(cfg, raw, phi, rng.child(1));
  auto rep = ratio_sweep(cfg, relabel(raw, teacher.params, phi), phi, rng.child(3));
  rep.teacher = std::move(teacher);
  return rep;
}

}  // namespace snlab
