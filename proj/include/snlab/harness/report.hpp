#pragma once

#include <snlab/activation.hpp>
#include <snlab/certificates.hpp>
#include <snlab/errors.hpp>
#include <snlab/harness/config.hpp>
#include <snlab/harness/experiment.hpp>
#include <snlab/harness/sweep.hpp>
#include <snlab/optimizers.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace snlab {

using ojson = nlohmann::ordered_json;

inline constexpr const char* kTraceCsvHeader = "iter,loss,grad_norm,dist_from_init,lazy_deviation";

/// Per-iteration columns of a trace; an empty column is written as empty cells.
struct TraceColumns {
  std::span<const double> loss;
  std::span<const double> grad_norm;
  std::span<const double> dist_from_init;
  std::span<const double> lazy_deviation;
};

inline TraceColumns trace_columns(const TrainingTrace& t) {
  return {t.losses, t.grad_norms, t.dist_from_init,
          t.lazy_deviation ? std::span<const double>(*t.lazy_deviation) : std::span<const double>{}};
}

inline TraceColumns trace_columns(const FlowTrace& t) {
  return {t.losses, {}, t.dist_from_init, {}};
}

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void csv_cell(std::string& out, std::span<const double> col, std::size_t i) {
  out += ',';
  if (i < col.size()) out += format_double(col[i]);
}

/// Non-finite values become null so that the document stays valid JSON.
inline ojson number(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

template <typename T>
ojson optional_value(const std::optional<T>& v) {
  if (!v) return nullptr;
  if constexpr (std::is_same_v<T, double>)
    return number(*v);
  else
    return *v;
}

}  // namespace detail

inline std::string trace_csv(const TraceColumns& c) {
  std::string out = kTraceCsvHeader;
  out += '\n';
  for (std::size_t i = 0; i < c.loss.size(); ++i) {
    out += std::to_string(i);
    detail::csv_cell(out, c.loss, i);
    detail::csv_cell(out, c.grad_norm, i);
    detail::csv_cell(out, c.dist_from_init, i);
    detail::csv_cell(out, c.lazy_deviation, i);
    out += '\n';
  }
  return out;
}

inline ojson to_json(const Dims& d) {
  return {{"d0", d.d0}, {"d1", d.d1}, {"d2", d.d2}, {"n", d.n}};
}

inline ojson to_json(const InitScheme& s) {
  return {{"omega1", s.omega1},
          {"omega2", s.omega2},
          {"product_budget", s.product_budget},
          {"within_budget", s.within_budget()}};
}

inline ojson constants_json(const TheoryConstants& c, double eta) {
  using detail::number;
  return {{"mu", number(c.mu_phi)},
          {"nu", number(c.nu_phi)},
          {"beta", number(c.beta_phi)},
          {"rho", number(c.rho_phi)},
          {"eta", number(eta)},
          {"alpha_f", c.alpha_f},
          {"chi_max", c.chi_max},
          {"sigma_max_x", number(c.sigma_max_x)},
          {"sigma_max_v0", number(c.sigma_max_v0)},
          {"sigma_max_features", number(c.sigma_max_features)}};
}

inline ojson to_json(const WidthCertificate& w) {
  using detail::number;
  return {{"t", w.t},
          {"sigma_min_xt", number(w.sigma_min_xt)},
          {"sigma_max_x", number(w.sigma_max_x)},
          {"xi", number(w.xi)},
          {"d1_required", number(w.d1_required)},
          {"d1_actual", w.d1_actual},
          {"satisfied", w.satisfied},
          {"c0_dominant", w.c0_dominant},
          {"odd_activation", w.odd_activation},
          {"d1_order_without_chi_bound", number(w.d1_order_without_chi_bound)}};
}

inline ojson to_json(const FailureProbability& f) {
  using detail::number;
  return {{"p1", number(f.p1)}, {"p2", number(f.p2)}, {"p3", number(f.p3)},
          {"p4", number(f.p4)}, {"p5", number(f.p5)}, {"psi", number(f.psi)}};
}

inline ojson to_json(const LazyRegimeReport& r) {
  using detail::number;
  return {{"ratio", number(r.ratio)},
          {"classification", to_string(r.regime)},
          {"bound", number(r.bound)},
          {"bound_general", number(r.bound_general)},
          {"bound_large_ratio", number(r.bound_large_ratio)},
          {"bound_small_ratio", number(r.bound_small_ratio)},
          {"odd_activation", r.odd_activation},
          {"note", r.note}};
}

inline ojson to_json(const RateCertificate& r) {
  return {{"monotone", r.monotone},
          {"fitted_rate", detail::number(r.fitted_rate)},
          {"r_squared", detail::number(r.r_squared)},
          {"r_squared_centered", detail::number(r.r_squared_centered)},
          {"theory_factor", detail::number(r.theory_factor)},
          {"fitted_points", r.fitted_points}};
}

inline ojson to_json(const ConfinementResult& c) {
  return {{"confined", c.confined},
          {"max_dist", detail::number(c.max_dist)},
          {"radius", detail::number(c.radius)},
          {"length_bound", detail::number(c.length_bound)}};
}

/// certificates{init_margin, width, psi} plus the lazy classification; missing parts are null.
inline ojson certificates_json(const std::optional<InitCertificate>& init,
                               const SchemeCertificates& s) {
  ojson j;
  j["init_margin"] = init ? detail::number(init->margin) : ojson(nullptr);
  j["init_satisfied"] = init ? ojson(init->satisfied) : ojson(nullptr);
  j["width"] = s.width ? to_json(*s.width) : ojson(nullptr);
  if (!s.width_note.empty()) j["width_note"] = s.width_note;
  j["psi"] = s.psi ? to_json(*s.psi) : ojson(nullptr);
  j["lazy_regime"] = s.lazy ? to_json(*s.lazy) : ojson(nullptr);
  return j;
}

inline ojson to_json(const RunReport& r, const ExperimentConfig& cfg) {
  ojson j;
  j["command"] = "train";
  j["seed"] = cfg.seed;
  j["activation"] = cfg.activation;
  j["dims"] = to_json(r.dims);
  j["init"] = to_json(r.scheme);
  j["constants"] = constants_json(r.certs.constants, r.eta);
  j["certificates"] = certificates_json(r.certs.init, r.scheme_certs);
  const auto& t = r.trace;
  ojson tr;
  tr["method"] = cfg.method;
  tr["eta"] = r.eta;
  tr["eta_certified"] = detail::number(r.certs.eta);
  tr["stop_loss"] = r.stop_loss;
  tr["steps"] = t.losses.size() - 1;
  tr["h0"] = detail::number(r.certs.h0);
  tr["final_loss"] = detail::number(t.losses.back());
  tr["path_length"] = detail::number(t.path_length);
  tr["max_dist_from_init"] =
      detail::number(t.dist_from_init.empty() ? 0.0
                                              : *std::max_element(t.dist_from_init.begin(),
                                                                  t.dist_from_init.end()));
  tr["chi_running_max"] = detail::number(t.chi_running_max);
  tr["lazy_deviation_final"] =
      t.lazy_deviation ? detail::number(t.lazy_deviation->back()) : ojson(nullptr);
  tr["rate"] = r.rate ? to_json(*r.rate) : ojson(nullptr);
  tr["confinement"] = r.confinement ? to_json(*r.confinement) : ojson(nullptr);
  j["training"] = tr;
  j["label_scaling"] = kLabelScalingNote;
  return j;
}

inline ojson to_json(const SweepRecord& r, const SchemeCertificates& s) {
  using detail::number;
  using detail::optional_value;
  ojson j;
  j["ratio"] = r.ratio;
  j["seed"] = r.seed;
  j["omega1"] = r.omega1;
  j["omega2"] = r.omega2;
  j["within_budget"] = r.within_budget;
  j["eta"] = number(r.eta);
  j["h0"] = number(r.h0);
  j["mu"] = number(r.mu);
  j["steps"] = r.steps;
  j["final_train_loss"] = number(r.final_train_loss);
  j["final_test_loss"] = optional_value(r.final_test_loss);
  j["train_accuracy"] = optional_value(r.train_accuracy);
  j["test_accuracy"] = optional_value(r.test_accuracy);
  j["lazy_deviation_final"] = number(r.lazy_deviation_final);
  j["lazy_deviation_max"] = number(r.lazy_deviation_max);
  j["fitted_rate"] = optional_value(r.fitted_rate);
  j["confined"] = optional_value(r.confined);
  j["reached_threshold"] = r.reached_threshold;
  j["certificates"] = certificates_json(r.init, s);
  return j;
}

inline ojson to_json(const SweepReport& rep, const ExperimentConfig& cfg, const std::string& command) {
  ojson j;
  j["command"] = command;
  j["seed"] = cfg.seed;
  j["activation"] = cfg.activation;
  j["data"] = cfg.data_source;
  j["dims"] = to_json(rep.dims);
  j["product_budget"] = rep.product_budget;
  j["method"] = rep.method;
  j["train_threshold"] = rep.train_threshold;
  if (rep.teacher)
    j["teacher"] = {{"eta", rep.teacher->eta},
                    {"epochs", rep.teacher->epochs},
                    {"final_loss", detail::number(rep.teacher->final_loss)},
                    {"train_accuracy", rep.teacher->train_accuracy}};
  ojson recs = ojson::array();
  for (const auto& r : rep.records) recs.push_back(to_json(r, rep.ratio_certificates[r.ratio_index]));
  j["sweep"] = recs;
  ojson agg = ojson::array();
  for (const auto& a : rep.aggregates)
    agg.push_back({{"ratio", a.ratio},
                   {"median_train_loss", detail::number(a.median_train_loss)},
                   {"median_test_loss", detail::optional_value(a.median_test_loss)},
                   {"median_lazy_deviation", detail::number(a.median_lazy_deviation)},
                   {"lazy_band_lower", detail::number(a.lazy_band_lower)},
                   {"lazy_band_upper", detail::number(a.lazy_band_upper)},
                   {"all_reached", a.all_reached}});
  j["aggregates"] = agg;
  j["label_scaling"] = rep.label_scaling;
  return j;
}

inline constexpr const char* kSweepCsvHeader =
    "ratio,seed,omega1,omega2,eta,final_train_loss,final_test_loss,lazy_deviation_final,"
    "lazy_deviation_max,fitted_rate,reached_threshold";

inline std::string sweep_csv(const SweepReport& rep) {
  using detail::format_double;
  std::string out = kSweepCsvHeader;
  out += '\n';
  for (const auto& r : rep.records) {
    out += format_double(r.ratio) + ',' + std::to_string(r.seed) + ',' + format_double(r.omega1) +
           ',' + format_double(r.omega2) + ',' + format_double(r.eta) + ',' +
           format_double(r.final_train_loss) + ',' +
           (r.final_test_loss ? format_double(*r.final_test_loss) : "") + ',' +
           format_double(r.lazy_deviation_final) + ',' + format_double(r.lazy_deviation_max) + ',' +
           (r.fitted_rate ? format_double(*r.fitted_rate) : "") + ',' +
           (r.reached_threshold ? "1" : "0") + '\n';
  }
  return out;
}

inline std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

/// Writes `text` to `path`, or to stdout when `path` is empty.
inline void emit_report(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    std::cout.flush();
    if (!std::cout) throw IoError("write failure on stdout");
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.close();
  if (!out) throw IoError("write failure on '" + path + "'");
}

}  // namespace snlab
