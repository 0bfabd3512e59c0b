#pragma once

#include <snlab/activation.hpp>
#include <snlab/certificates.hpp>
#include <snlab/errors.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace snlab {

enum class ReportFormat { Csv, Json };

inline ReportFormat parse_format(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw ConfigError("format must be \"csv\" or \"json\", got \"" + s + "\"");
}

inline std::string to_string(ReportFormat f) { return f == ReportFormat::Csv ? "csv" : "json"; }

/// How the product omega1 omega2 is fixed when the init is given as a ratio.
enum class BudgetRule { Explicit, InverseSqrtWidth, He };

struct ExperimentConfig {
  std::uint64_t seed = 2023;

  std::size_t d0 = 10;
  std::optional<std::size_t> d1 = 64;  // empty: take the certified width
  std::size_t d1_cap = 4096;
  std::size_t d2 = 1;
  std::size_t n = 30;

  std::string activation = "gelu";

  std::optional<double> omega1;
  std::optional<double> omega2;
  double ratio = 1.0;
  BudgetRule budget_rule = BudgetRule::InverseSqrtWidth;
  double product_budget = 0.0;  // used when budget_rule is Explicit

  std::string method = "gd";
  std::optional<double> eta;  // empty: learning_rate
  std::size_t max_iters = 20000;
  double stop_loss = 1e-10;
  std::optional<double> stop_loss_relative;  // stop at this fraction of h0 when set
  std::size_t batch_size = 128;
  std::size_t epochs = 50;

  std::vector<double> ratios = {1e-2, 1e-1, 1.0, 1e1, 1e2};
  std::size_t seeds_per_point = 5;
  std::size_t workers = 0;  // 0: hardware concurrency
  double train_threshold = 1e-3;

  double c_init = kDefaultCInit;
  double c_eta = kDefaultCEta;
  double chi_max = 1.0;
  ProbeParams probes;

  std::string data_source = "sphere";
  std::string images_path;
  std::string labels_path;
  std::size_t n_test = 128;
  double digit_noise = 0.25;

  std::size_t teacher_epochs = 2000;
  double teacher_accuracy = 0.98;
  std::optional<double> teacher_eta;

  double dt = 1e-3;
  double t_end = 1.0;

  std::size_t mc_samples = 20000;
  std::size_t mc_workers = 0;

  std::string out_path;
  ReportFormat format = ReportFormat::Json;

  /// omega1 omega2 for a network of hidden width d1.
  [[nodiscard]] double budget_for(std::size_t width) const {
    const double a = static_cast<double>(d0);
    const double b = static_cast<double>(width);
    switch (budget_rule) {
      case BudgetRule::Explicit: return product_budget;
      case BudgetRule::He: return std::sqrt(2.0 / a) * std::sqrt(2.0 / b);
      case BudgetRule::InverseSqrtWidth: break;
    }
    return 1.0 / std::sqrt(a * b);
  }

  [[nodiscard]] InitScheme scheme_for(double r, std::size_t width) const {
    return InitScheme::from_ratio(r, budget_for(width));
  }

  /// The single-run init: explicit omegas if given, omega2 = budget / omega1 if only omega1
  /// is given, else the configured ratio.
  [[nodiscard]] InitScheme scheme(std::size_t width) const {
    const double b = budget_for(width);
    if (omega1 && omega2) return {*omega1, *omega2, b};
    if (omega1) return {*omega1, b / *omega1, b};
    return scheme_for(ratio, width);
  }
};

namespace detail {

using json = nlohmann::json;

/// Reads one JSON object and rejects keys it was not asked about.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  [[nodiscard]] bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    out = as<T>(key);
  }

  template <typename T>
  [[nodiscard]] T as(const std::string& key) const {
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where(key) + " has the wrong type (" + v.type_name() + ")");
    }
  }

  [[nodiscard]] Section child(const std::string& key) {
    seen_.insert(key);
    return {j_.at(key), where(key)};
  }

  [[nodiscard]] const json& raw(const std::string& key) const { return j_.at(key); }

  [[nodiscard]] std::string where(const std::string& key = {}) const {
    return key.empty() ? path_ : path_ + "." + key;
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError("unknown key " + where(item.key()));
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// A positive number or the string "auto" (returned as empty).
inline std::optional<double> number_or_auto(Section& s, const std::string& key,
                                            std::optional<double> fallback) {
  if (!s.has(key)) return fallback;
  const auto& v = s.raw(key);
  if (v.is_string() && v.get<std::string>() == "auto") return std::nullopt;
  return s.as<double>(key);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& doc) {
  using detail::Section;
  ExperimentConfig c;
  Section top(doc, "config");
  top.read("seed", c.seed);
  top.read("activation", c.activation);

  if (top.has("dims")) {
    auto s = top.child("dims");
    s.read("d0", c.d0);
    s.read("d2", c.d2);
    s.read("n", c.n);
    s.read("d1_cap", c.d1_cap);
    if (s.has("d1")) {
      const auto& v = s.raw("d1");
      c.d1 = v.is_string() && v.get<std::string>() == "auto"
                 ? std::nullopt
                 : std::optional<std::size_t>(s.as<std::size_t>("d1"));
    }
    s.finish();
  }
  if (top.has("init")) {
    auto s = top.child("init");
    if (s.has("omega1")) c.omega1 = s.as<double>("omega1");
    if (s.has("omega2")) c.omega2 = s.as<double>("omega2");
    s.read("ratio", c.ratio);
    if (s.has("product_budget")) {
      const auto& v = s.raw("product_budget");
      if (v.is_string()) {
        const auto rule = v.get<std::string>();
        if (rule == "auto")
          c.budget_rule = BudgetRule::InverseSqrtWidth;
        else if (rule == "he")
          c.budget_rule = BudgetRule::He;
        else
          throw ConfigError(s.where("product_budget") + " must be a number, \"auto\" or \"he\"");
      } else {
        c.budget_rule = BudgetRule::Explicit;
        c.product_budget = s.as<double>("product_budget");
        detail::require(c.product_budget > 0.0, s.where("product_budget") + " must be positive");
      }
    }
    detail::require(c.omega1.has_value() || !c.omega2.has_value(),
                    s.where() + ": omega2 needs omega1");
    if (c.omega1) detail::require(*c.omega1 > 0.0, s.where("omega1") + " must be positive");
    if (c.omega2) detail::require(*c.omega2 >= 0.0, s.where("omega2") + " must be nonnegative");
    detail::require(c.ratio > 0.0, s.where("ratio") + " must be positive");
    s.finish();
  }
  if (top.has("optimizer")) {
    auto s = top.child("optimizer");
    s.read("method", c.method);
    c.eta = detail::number_or_auto(s, "eta", c.eta);
    s.read("max_iters", c.max_iters);
    s.read("stop_loss", c.stop_loss);
    if (s.has("stop_loss_relative")) c.stop_loss_relative = s.as<double>("stop_loss_relative");
    s.read("batch_size", c.batch_size);
    s.read("epochs", c.epochs);
    detail::require(c.method == "gd" || c.method == "sgd", s.where("method") + " must be \"gd\" or \"sgd\"");
    detail::require(!c.eta || *c.eta > 0.0, s.where("eta") + " must be positive or \"auto\"");
    s.finish();
  }
  if (top.has("sweep")) {
    auto s = top.child("sweep");
    s.read("ratios", c.ratios);
    s.read("seeds_per_point", c.seeds_per_point);
    s.read("workers", c.workers);
    s.read("train_threshold", c.train_threshold);
    detail::require(!c.ratios.empty(), s.where("ratios") + " must not be empty");
    for (double r : c.ratios) detail::require(r > 0.0, s.where("ratios") + " must be positive");
    detail::require(c.seeds_per_point > 0, s.where("seeds_per_point") + " must be positive");
    s.finish();
  }
  if (top.has("constants")) {
    auto s = top.child("constants");
    s.read("C_init", c.c_init);
    s.read("C_eta", c.c_eta);
    s.read("chi_max", c.chi_max);
    if (s.has("probes")) {
      auto p = s.child("probes");
      p.read("delta1", c.probes.delta1);
      p.read("delta2", c.probes.delta2);
      p.read("delta3", c.probes.delta3);
      p.read("delta4", c.probes.delta4);
      p.read("k3", c.probes.k3);
      p.read("C", c.probes.C);
      p.finish();
      try {
        c.probes.validate();
      } catch (const ArgumentError& e) {
        throw ConfigError(p.where() + ": " + e.what());
      }
    }
    s.finish();
  }
  if (top.has("data")) {
    auto s = top.child("data");
    s.read("source", c.data_source);
    s.read("images", c.images_path);
    s.read("labels", c.labels_path);
    s.read("n_test", c.n_test);
    s.read("noise", c.digit_noise);
    detail::require(c.data_source == "sphere" || c.data_source == "digits" || c.data_source == "idx",
                    s.where("source") + " must be \"sphere\", \"digits\" or \"idx\"");
    detail::require(c.data_source != "idx" || (!c.images_path.empty() && !c.labels_path.empty()),
                    s.where() + ": idx data needs \"images\" and \"labels\"");
    s.finish();
  }
  if (top.has("teacher")) {
    auto s = top.child("teacher");
    s.read("epochs", c.teacher_epochs);
    s.read("accuracy", c.teacher_accuracy);
    c.teacher_eta = detail::number_or_auto(s, "eta", c.teacher_eta);
    s.finish();
  }
  if (top.has("flow")) {
    auto s = top.child("flow");
    s.read("dt", c.dt);
    s.read("t_end", c.t_end);
    detail::require(c.dt > 0.0 && c.t_end > 0.0, s.where() + ": dt and t_end must be positive");
    s.finish();
  }
  if (top.has("monte_carlo")) {
    auto s = top.child("monte_carlo");
    s.read("samples", c.mc_samples);
    s.read("workers", c.mc_workers);
    s.finish();
  }
  if (top.has("output")) {
    auto s = top.child("output");
    s.read("path", c.out_path);
    if (s.has("format")) c.format = parse_format(s.as<std::string>("format"));
    s.finish();
  }
  top.finish();

  detail::require(c.d0 > 0 && c.d2 > 0 && c.n > 0, "config.dims: d0, d2 and n must be positive");
  detail::require(!c.d1 || *c.d1 > 0, "config.dims.d1 must be positive or \"auto\"");
  detail::require(c.batch_size > 0, "config.optimizer.batch_size must be positive");
  try {
    (void)activation(c.activation);
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("config.activation: ") + e.what());
  }
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace snlab
