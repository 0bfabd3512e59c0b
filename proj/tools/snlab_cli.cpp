// Command-line front end: one subcommand per experiment, reports to stdout or --out.

#include <snlab/snlab.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace snlab;

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kDivergence = 3, kIo = 4 };

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Master seed (overrides the config)");
  sub->add_option("--out", c.out, "Output path (default: config output.path, else stdout)");
  sub->add_option("--format", c.format, "csv or json (default: config output.format)");
}

ExperimentConfig load_with_overrides(const std::string& path, const Common& c) {
  auto cfg = load_config(path);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_path = c.out;
  if (!c.format.empty()) cfg.format = parse_format(c.format);
  return cfg;
}

/// key,value rows for documents that are not traces or tables.
void flatten(const ojson& j, const std::string& prefix, std::string& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "." + std::to_string(i), out);
  } else if (j.is_string()) {
    out += prefix + ",\"" + j.get<std::string>() + "\"\n";
  } else if (j.is_number_float()) {
    out += prefix + "," + detail::format_double(j.get<double>()) + "\n";
  } else {
    out += prefix + "," + j.dump() + "\n";
  }
}

std::string key_value_csv(const ojson& j) {
  std::string out = "key,value\n";
  flatten(j, "", out);
  return out;
}

void emit_document(const ojson& j, ReportFormat f, const std::string& path) {
  emit_report(f == ReportFormat::Json ? dump(j) : key_value_csv(j), path);
}

ojson activation_document(const std::string& name) {
  const auto& phi = activation(name);
  const auto e = hermite_coefficients(phi.eval);
  ojson j;
  j["command"] = "analyze-activation";
  j["activation"] = phi.name;
  j["phi_dot_max"] = phi.phi_dot_max;
  j["phi_ddot_max"] = phi.phi_ddot_max;
  j["bounds_certified"] = phi.bounds_certified;
  j["r1"] = phi.r1;
  j["r2"] = phi.r2;
  j["homogeneity_uncertainty"] = phi.homogeneity_uncertainty;
  j["zero_at_origin"] = phi.zero_at_origin;
  ojson h;
  h["order"] = e.order;
  h["coefficients"] = e.coeffs;
  h["hermite_norm"] = e.hermite_norm;
  h["tail_mass"] = e.tail_mass;
  h["truncation_residual"] = e.truncation_residual;
  j["hermite"] = h;
  return j;
}

ojson certify_document(const ExperimentConfig& cfg) {
  const RngStream rng(cfg.seed);
  const auto& phi = activation(cfg.activation);
  const Problem p = make_problem(cfg, rng.child(0));
  const auto geo = data_geometry(p.train.X, phi);
  const Dims dims = problem_dims(p, resolve_width(cfg, p, phi, geo));
  const InitScheme scheme = cfg.scheme(dims.d1);
  const NetParams theta0 = init_weights(dims, scheme, rng.child(1));
  const auto certs = run_certificates(theta0, p.train, phi, cfg);
  ojson j;
  j["command"] = "certify";
  j["seed"] = cfg.seed;
  j["activation"] = cfg.activation;
  j["dims"] = to_json(dims);
  j["init"] = to_json(scheme);
  j["h0"] = certs.h0;
  j["constants"] = constants_json(certs.constants, cfg.eta.value_or(certs.eta));
  j["certificates"] =
      certificates_json(certs.init, scheme_certificates(p.train.X, phi, geo, dims, scheme, cfg));
  j["label_scaling"] = kLabelScalingNote;
  return j;
}

void run_train(const ExperimentConfig& cfg) {
  const auto r = run_training(cfg);
  if (cfg.format == ReportFormat::Csv)
    emit_report(trace_csv(trace_columns(r.trace)), cfg.out_path);
  else
    emit_report(dump(to_json(r, cfg)), cfg.out_path);
}

void run_flow(const ExperimentConfig& cfg) {
  const RngStream rng(cfg.seed);
  const auto& phi = activation(cfg.activation);
  const Problem p = make_problem(cfg, rng.child(0));
  const auto geo = data_geometry(p.train.X, phi);
  const Dims dims = problem_dims(p, resolve_width(cfg, p, phi, geo));
  const InitScheme scheme = cfg.scheme(dims.d1);
  const auto ft = gradient_flow(init_weights(dims, scheme, rng.child(1)), p.train, phi, cfg.dt,
                                cfg.t_end);
  if (cfg.format == ReportFormat::Csv) {
    emit_report(trace_csv(trace_columns(ft)), cfg.out_path);
    return;
  }
  ojson j;
  j["command"] = "flow";
  j["seed"] = cfg.seed;
  j["activation"] = cfg.activation;
  j["dims"] = to_json(dims);
  j["init"] = to_json(scheme);
  j["dt"] = cfg.dt;
  j["t_end"] = cfg.t_end;
  j["path_length"] = ft.path_length;
  j["final_loss"] = detail::number(ft.losses.back());
  ojson times = ojson::array(), losses = ojson::array();
  for (double t : ft.times) times.push_back(t);
  for (double l : ft.losses) losses.push_back(detail::number(l));
  j["times"] = times;
  j["losses"] = losses;
  emit_report(dump(j), cfg.out_path);
}

ojson gram_document(const ExperimentConfig& cfg) {
  const RngStream rng(cfg.seed);
  const auto& phi = activation(cfg.activation);
  const Matrix x = sample_unit_sphere_data(cfg.n, cfg.d0, rng.child(0));
  const double omega1 = cfg.omega1.value_or(1.0);
  const std::size_t d1 = cfg.d1.value_or(1);
  const unsigned workers = cfg.mc_workers ? static_cast<unsigned>(cfg.mc_workers)
                                          : std::max(1U, std::thread::hardware_concurrency());
  const auto g = monte_carlo_gram(x, phi, omega1, d1, cfg.mc_samples, rng.child(1), workers);
  ojson j;
  j["command"] = "gram-mc";
  j["seed"] = cfg.seed;
  j["activation"] = cfg.activation;
  j["dims"] = {{"d0", cfg.d0}, {"d1", d1}, {"n", cfg.n}};
  j["omega1"] = omega1;
  j["num_samples"] = g.num_samples;
  j["rel_frobenius_error"] = g.rel_frobenius_error;
  j["sigma_min_emp"] = g.sigma_min_emp;
  j["sigma_max_emp"] = g.sigma_max_emp;
  j["lower_bound"] = detail::number(g.lower_bound);
  j["upper_bound"] = detail::number(g.upper_bound);
  return j;
}

void emit_sweep(const SweepReport& rep, const ExperimentConfig& cfg, const std::string& command) {
  if (cfg.format == ReportFormat::Csv)
    emit_report(sweep_csv(rep), cfg.out_path);
  else
    emit_report(dump(to_json(rep, cfg, command)), cfg.out_path);
}

int report_error(const char* kind, const std::exception& e, int code) {
  std::cerr << "snlab: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shallow-network convergence lab"};
  app.require_subcommand(1);

  Common common;
  std::string name, config_path;

  auto* analyze = app.add_subcommand("analyze-activation", "Derivative bounds, exponents and Hermite coefficients");
  analyze->add_option("name", name, "Activation name")->required();
  add_common(analyze, common);

  struct Entry {
    const char* name;
    const char* help;
  };
  const Entry config_commands[] = {
      {"certify", "Constants and certificates at initialization"},
      {"train", "Train once and check the convergence certificates"},
      {"flow", "Integrate the gradient flow"},
      {"gram-mc", "Monte-Carlo expected Gram against the Hermite series"},
      {"lazy-sweep", "Lazy-deviation sweep over init ratios"},
      {"teacher-student", "Teacher-student sweep over init ratios"}};
  for (const auto& c : config_commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("config", config_path, "JSON config file")->required();
    add_common(sub, common);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "analyze-activation") {
      const auto f = common.format.empty() ? ReportFormat::Json : parse_format(common.format);
      emit_document(activation_document(name), f, common.out);
      return kOk;
    }
    const auto cfg = load_with_overrides(config_path, common);
    if (cmd == "certify")
      emit_document(certify_document(cfg), cfg.format, cfg.out_path);
    else if (cmd == "train")
      run_train(cfg);
    else if (cmd == "flow")
      run_flow(cfg);
    else if (cmd == "gram-mc")
      emit_document(gram_document(cfg), cfg.format, cfg.out_path);
    else if (cmd == "lazy-sweep")
      emit_sweep(lazy_sweep(cfg), cfg, cmd);
    else
      emit_sweep(teacher_student_sweep(cfg), cfg, cmd);
    return kOk;
  } catch (const ConfigError& e) {
    return report_error("config error", e, kConfig);
  } catch (const ArgumentError& e) {
    return report_error("invalid argument", e, kConfig);
  } catch (const DivergenceError& e) {
    return report_error("divergence", e, kDivergence);
  } catch (const TeacherError& e) {
    return report_error("teacher failed", e, kDivergence);
  } catch (const IoError& e) {
    return report_error("I/O error", e, kIo);
  } catch (const FormatError& e) {
    return report_error("format error", e, kIo);
  } catch (const LengthError& e) {
    return report_error("length error", e, kIo);
  } catch (const std::exception& e) {
    return report_error("error", e, kFailure);
  }
}
