#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qgeom/checks.hpp"
#include "qgeom/common.hpp"
#include "qgeom/complexity.hpp"
#include "qgeom/experiments.hpp"
#include "qgeom/geometry.hpp"
#include "qgeom/model.hpp"

namespace qgeom::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAssertionFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

namespace detail {

inline json load_json_file(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError("file not found: " + path);
  }
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& err) {
    throw ValidationError("invalid JSON in " + path + ": " + err.what());
  }
}

inline ExperimentConfig load_config(ExperimentKind kind, const std::string& config_path,
                                    const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = config_from_json(load_json_file(config_path), kind);
  for (const std::string& spec : overrides) apply_override(cfg, spec);
  cfg.validate();
  return cfg;
}

inline int run_experiment_command(ExperimentKind kind, const std::string& config_path,
                                  const std::string& out_dir,
                                  const std::vector<std::string>& overrides,
                                  std::ostream& log) {
  const ExperimentConfig cfg = load_config(kind, config_path, overrides);
  if (std::filesystem::exists(out_dir)) {
    throw ValidationError("output directory already exists: " + out_dir);
  }
  const ExperimentOutput out = run_experiment(kind, cfg);
  write_run_dir(out, cfg, out_dir);
  for (const AssertionResult& a : out.assertions) {
    log << (a.pass ? "PASS " : "FAIL ") << a.name << " (measured " << format_double(a.measured)
        << ", tolerance " << format_double(a.tolerance) << ")\n";
  }
  log << "wrote " << out_dir << "\n";
  return out.all_pass() ? kExitOk : kExitAssertionFailure;
}

inline int run_check_command(std::ostream& log) {
  const std::vector<CheckResult> results = run_check_suite();
  bool all_pass = true;
  for (const CheckResult& r : results) {
    all_pass = all_pass && r.pass;
    log << (r.pass ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
  }
  log << (all_pass ? "all checks passed" : "some checks FAILED") << "\n";
  return all_pass ? kExitOk : kExitAssertionFailure;
}

inline int run_inspect_command(const std::string& theta_path,
                               const std::vector<std::string>& overrides, std::ostream& log) {
  const Theta theta = theta_from_json(load_json_file(theta_path));

  ExperimentConfig cfg = default_config(ExperimentKind::kFalseFlatness);
  cfg.d = theta.d();
  cfg.m = theta.m();
  cfg.n = 2 * theta.dim();
  for (const std::string& spec : overrides) apply_override(cfg, spec);
  cfg.validate();
  const auto [data, teacher] = generate_teacher_data(cfg);

  const RegularityReport reg =
      regularity_check(theta, data.X, kQuadraticDegree, cfg.tol.rank_tol, cfg.tol.angle_tol);
  const ComplexityReport comp = complexity_report(theta);

  json report;
  report["theta"] = {{"m", theta.m()}, {"d", theta.d()}};
  report["samples"] = {{"n", cfg.n}, {"seed", cfg.seed}};
  json flags = json::array();
  for (const UnitFlags& f : reg.unit_flags) {
    flags.push_back({{"vanishing_a", f.vanishing_a},
                     {"vanishing_w", f.vanishing_w},
                     {"collision_with", f.collision_with}});
  }
  report["regularity"] = {{"kernel_dim", reg.kernel_dim},
                          {"orbit_dim", reg.orbit_dim},
                          {"expected_kernel_dim", reg.expected_kernel_dim},
                          {"max_principal_angle", reg.max_principal_angle},
                          {"is_regular", reg.is_regular},
                          {"is_generic", reg.is_generic},
                          {"unit_flags", flags}};
  json sv = json::array();
  for (Eigen::Index i = 0; i < comp.singular_values.size(); ++i) {
    sv.push_back(comp.singular_values(i));
  }
  report["complexity"] = {{"theta_norm_sq", comp.theta_norm_sq},
                          {"path_like", comp.path_like},
                          {"balanced_energy", comp.balanced_energy},
                          {"q_frobenius", comp.q_frobenius},
                          {"q_nuclear", comp.q_nuclear},
                          {"q_operator", comp.q_operator},
                          {"stable_rank", comp.stable_rank},
                          {"quotient_theta_norm", comp.quotient_theta_norm},
                          {"closure_attained", comp.closure_attained},
                          {"singular_values", sv}};
  log << report.dump(2) << "\n";
  return kExitOk;
}

}  // namespace detail

/// Entry point shared by the binary and the tests; argv excludes the program
/// name.  Streams default to the process streams.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"quotient geometry of quadratic-activation shallow networks"};
  app.require_subcommand(1);

  struct SubcommandSpec {
    std::string name;
    ExperimentKind kind;
    std::string description;
  };
  const std::vector<SubcommandSpec> experiment_subs = {
      {"false-flatness", ExperimentKind::kFalseFlatness,
       "Hessian spectra across orbit representatives at an interpolating minimum"},
      {"local-dynamics", ExperimentKind::kLocalDynamics,
       "curvature descriptors and short-run decay rates around a logistic checkpoint"},
      {"implicit-bias", ExperimentKind::kImplicitBias,
       "complexity of learned solutions in underdetermined regression"}};

  struct ExperimentArgs {
    std::string config_path;
    std::string out_dir;
    std::vector<std::string> overrides;
  };
  std::vector<ExperimentArgs> experiment_args(experiment_subs.size());
  for (std::size_t i = 0; i < experiment_subs.size(); ++i) {
    CLI::App* sub = app.add_subcommand(experiment_subs[i].name, experiment_subs[i].description);
    sub->add_option("--config", experiment_args[i].config_path, "experiment config JSON")
        ->required();
    sub->add_option("--out", experiment_args[i].out_dir, "run directory (must not exist)")
        ->required();
    sub->add_option("--set", experiment_args[i].overrides,
                    "config override key=value (repeatable)");
  }

  CLI::App* check = app.add_subcommand("check", "run the cross-module invariant suite");

  std::string inspect_path;
  std::vector<std::string> inspect_overrides;
  CLI::App* inspect = app.add_subcommand("inspect", "report regularity and complexity of a "
                                                    "serialized parameter point");
  inspect->add_option("--config", inspect_path, "serialized Theta JSON")->required();
  inspect->add_option("--set", inspect_overrides,
                      "sampling override key=value (e.g. n=80, seed=5)");

  std::vector<std::string> argv_copy = args;
  try {
    std::vector<const char*> argv;
    argv.reserve(argv_copy.size() + 1);
    argv.push_back("qgeom");
    for (const std::string& a : argv_copy) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    for (std::size_t i = 0; i < experiment_subs.size(); ++i) {
      if (app.got_subcommand(experiment_subs[i].name)) {
        return detail::run_experiment_command(experiment_subs[i].kind,
                                              experiment_args[i].config_path,
                                              experiment_args[i].out_dir,
                                              experiment_args[i].overrides, out);
      }
    }
    if (app.got_subcommand(check)) return detail::run_check_command(out);
    if (app.got_subcommand(inspect)) {
      return detail::run_inspect_command(inspect_path, inspect_overrides, out);
    }
    err << "no subcommand selected\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace qgeom::cli
