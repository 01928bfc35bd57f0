#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "qgeom/common.hpp"
#include "qgeom/complexity.hpp"
#include "qgeom/dynamics.hpp"
#include "qgeom/geometry.hpp"
#include "qgeom/model.hpp"
#include "qgeom/rng.hpp"
#include "qgeom/symmetry.hpp"
#include "qgeom/tables.hpp"

namespace qgeom {

enum class ExperimentKind { kFalseFlatness, kLocalDynamics, kImplicitBias };

inline std::string experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kFalseFlatness: return "false-flatness";
    case ExperimentKind::kLocalDynamics: return "local-dynamics";
    case ExperimentKind::kImplicitBias: return "implicit-bias";
  }
  throw ValidationError("experiment_name: unknown kind");
}

struct TolBlock {
  double rank_tol = 1e-8;
  double angle_tol = 1e-6;
  double spectra_tol = 1e-8;
};

struct ExperimentConfig {
  int d = 4;
  int m = 6;
  int n = 30;
  std::uint64_t seed = 1;
  LossKind loss = LossKind::squared;
  double lr = 0.02;
  int steps = 20000;
  int num_orbit_reps = 6;
  double scale_log_lo = -1.0;
  double scale_log_hi = 1.0;
  int num_perturbations = 5;
  double perturbation_scale = 0.05;
  int num_seeds = 5;
  double interpolation_threshold = 1e-10;
  TolBlock tol;

  void validate() const {
    if (d <= 0 || m <= 0 || n <= 0) throw ValidationError("config: d, m, n must be positive");
    if (lr <= 0.0) throw ValidationError("config: lr must be positive");
    if (steps <= 0) throw ValidationError("config: steps must be positive");
    if (num_orbit_reps <= 0) throw ValidationError("config: num_orbit_reps must be positive");
    if (num_perturbations <= 0) {
      throw ValidationError("config: num_perturbations must be positive");
    }
    if (num_seeds <= 0) throw ValidationError("config: num_seeds must be positive");
    if (scale_log_lo > scale_log_hi) {
      throw ValidationError("config: scale_log_range must satisfy lo <= hi");
    }
    if (perturbation_scale <= 0.0) {
      throw ValidationError("config: perturbation_scale must be positive");
    }
    if (interpolation_threshold <= 0.0) {
      throw ValidationError("config: interpolation_threshold must be positive");
    }
    if (tol.rank_tol <= 0.0 || tol.angle_tol <= 0.0 || tol.spectra_tol <= 0.0) {
      throw ValidationError("config: tolerances must be positive");
    }
  }
};

/// Desk-scale defaults per experiment.
inline ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig cfg;
  switch (kind) {
    case ExperimentKind::kFalseFlatness:
      cfg.d = 4;
      cfg.m = 6;
      cfg.n = 30;
      cfg.loss = LossKind::squared;
      cfg.lr = 0.02;
      cfg.steps = 20000;
      break;
    case ExperimentKind::kLocalDynamics:
      cfg.d = 4;
      cfg.m = 6;
      cfg.n = 60;
      cfg.loss = LossKind::logistic;
      cfg.lr = 0.05;
      cfg.steps = 4000;
      cfg.num_orbit_reps = 3;
      cfg.num_perturbations = 5;
      cfg.num_seeds = 5;
      cfg.scale_log_lo = -0.15;
      cfg.scale_log_hi = 0.15;
      cfg.perturbation_scale = 0.05;
      break;
    case ExperimentKind::kImplicitBias:
      cfg.d = 6;
      cfg.m = 8;
      cfg.n = 12;
      cfg.loss = LossKind::squared;
      cfg.lr = 0.02;
      cfg.steps = 80000;
      cfg.num_perturbations = 8;  // reused as the number of training seeds
      break;
  }
  return cfg;
}

inline json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["d"] = cfg.d;
  j["m"] = cfg.m;
  j["n"] = cfg.n;
  j["seed"] = cfg.seed;
  j["loss"] = cfg.loss == LossKind::squared ? "squared" : "logistic";
  j["lr"] = cfg.lr;
  j["steps"] = cfg.steps;
  j["num_orbit_reps"] = cfg.num_orbit_reps;
  j["scale_log_range"] = json::array({cfg.scale_log_lo, cfg.scale_log_hi});
  j["num_perturbations"] = cfg.num_perturbations;
  j["perturbation_scale"] = cfg.perturbation_scale;
  j["num_seeds"] = cfg.num_seeds;
  j["interpolation_threshold"] = cfg.interpolation_threshold;
  j["tol_block"] = {{"rank_tol", cfg.tol.rank_tol},
                    {"angle_tol", cfg.tol.angle_tol},
                    {"spectra_tol", cfg.tol.spectra_tol}};
  return j;
}

namespace detail {

inline LossKind loss_kind_from_string(const std::string& name) {
  if (name == "squared") return LossKind::squared;
  if (name == "logistic") return LossKind::logistic;
  throw ValidationError("config: unknown loss '" + name + "' (expected squared or logistic)");
}

}  // namespace detail

/// Merge JSON fields onto cfg; unknown keys are rejected.
inline void merge_config_json(ExperimentConfig& cfg, const json& j) {
  if (!j.is_object()) throw ValidationError("config: JSON root must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "d") cfg.d = value.get<int>();
      else if (key == "m") cfg.m = value.get<int>();
      else if (key == "n") cfg.n = value.get<int>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "loss") cfg.loss = detail::loss_kind_from_string(value.get<std::string>());
      else if (key == "lr") cfg.lr = value.get<double>();
      else if (key == "steps") cfg.steps = value.get<int>();
      else if (key == "num_orbit_reps") cfg.num_orbit_reps = value.get<int>();
      else if (key == "scale_log_range") {
        if (!value.is_array() || value.size() != 2) {
          throw ValidationError("config: scale_log_range must be [lo, hi]");
        }
        cfg.scale_log_lo = value[0].get<double>();
        cfg.scale_log_hi = value[1].get<double>();
      } else if (key == "num_perturbations") cfg.num_perturbations = value.get<int>();
      else if (key == "perturbation_scale") cfg.perturbation_scale = value.get<double>();
      else if (key == "num_seeds") cfg.num_seeds = value.get<int>();
      else if (key == "interpolation_threshold") cfg.interpolation_threshold = value.get<double>();
      else if (key == "tol_block") {
        if (!value.is_object()) throw ValidationError("config: tol_block must be an object");
        for (const auto& [tkey, tvalue] : value.items()) {
          if (tkey == "rank_tol") cfg.tol.rank_tol = tvalue.get<double>();
          else if (tkey == "angle_tol") cfg.tol.angle_tol = tvalue.get<double>();
          else if (tkey == "spectra_tol") cfg.tol.spectra_tol = tvalue.get<double>();
          else throw ValidationError("config: unknown tol_block field '" + tkey + "'");
        }
      } else {
        throw ValidationError("config: unknown field '" + key + "'");
      }
    }
  } catch (const json::exception& err) {
    throw ValidationError(std::string("config: ") + err.what());
  }
}

inline ExperimentConfig config_from_json(const json& j, ExperimentKind kind) {
  ExperimentConfig cfg = default_config(kind);
  merge_config_json(cfg, j);
  cfg.validate();
  return cfg;
}

/// Apply one `key=value` override; nested tolerances use tol_block.<name>.
inline void apply_override(ExperimentConfig& cfg, const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("override must have the form key=value: '" + spec + "'");
  }
  const std::string key = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);
  json patch;
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // unquoted strings (e.g. loss=squared)
  }
  if (key.rfind("tol_block.", 0) == 0) {
    patch["tol_block"][key.substr(std::string("tol_block.").size())] = parsed;
  } else if (key == "scale_log_range") {
    patch[key] = parsed;
  } else {
    patch[key] = parsed;
  }
  merge_config_json(cfg, patch);
}

struct AssertionResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double tolerance = 0.0;
};

struct ExperimentOutput {
  std::string name;
  std::vector<std::pair<std::string, Table>> tables;      // filename -> table
  std::vector<std::pair<std::string, json>> json_files;   // filename -> document
  std::vector<AssertionResult> assertions;
  json provenance;
  json extra;  // reported-but-unasserted statistics

  bool all_pass() const {
    return std::all_of(assertions.begin(), assertions.end(),
                       [](const AssertionResult& a) { return a.pass; });
  }
};

namespace detail {

inline json provenance_json(const ExperimentConfig& cfg, const std::string& name) {
  json j;
  j["experiment"] = name;
  j["library_version"] = kVersion;
  j["seed"] = cfg.seed;
  j["config"] = config_to_json(cfg);
  return j;
}

inline json summary_json(const ExperimentOutput& out) {
  json j;
  j["experiment"] = out.name;
  j["provenance"] = out.provenance;
  json asserts = json::array();
  for (const AssertionResult& a : out.assertions) {
    asserts.push_back({{"name", a.name},
                       {"pass", a.pass},
                       {"measured", a.measured},
                       {"tolerance", a.tolerance}});
  }
  j["assertions"] = asserts;
  j["all_pass"] = out.all_pass();
  if (!out.extra.is_null()) j["extra"] = out.extra;
  return j;
}

}  // namespace detail

/// Write config.json, every table as CSV, auxiliary JSON files, and
/// summary.json into a fresh directory.  An existing directory is refused so
/// runs are never silently overwritten.
inline void write_run_dir(const ExperimentOutput& out, const ExperimentConfig& cfg,
                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (fs::exists(out_dir)) {
    throw ValidationError("output directory already exists: " + out_dir);
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw ValidationError("cannot create output directory: " + out_dir);

  write_text_file(out_dir + "/config.json", config_to_json(cfg).dump(2) + "\n");
  for (const auto& [name, table] : out.tables) {
    write_text_file(out_dir + "/" + name, table.to_csv());
  }
  for (const auto& [name, doc] : out.json_files) {
    write_text_file(out_dir + "/" + name, doc.dump(2) + "\n");
  }
  write_text_file(out_dir + "/summary.json", detail::summary_json(out).dump(2) + "\n");
}

/// Teacher-generated dataset: standard normal inputs, teacher with Gaussian
/// amplitudes and unit-sphere weights; regression targets are the teacher's
/// outputs, classification labels are the median-split of teacher margins.
inline std::pair<Dataset, Theta> generate_teacher_data(const ExperimentConfig& cfg) {
  cfg.validate();
  RngStream data_stream(cfg.seed, "data");
  RngStream teacher_stream(cfg.seed, "teacher");

  Dataset data;
  data.task = cfg.loss == LossKind::logistic ? Task::classification : Task::regression;
  data.X = data_stream.normal_mat(cfg.n, cfg.d);

  Theta teacher;
  teacher.units.reserve(static_cast<std::size_t>(cfg.m));
  for (int i = 0; i < cfg.m; ++i) {
    Unit unit;
    unit.a = teacher_stream.normal();
    unit.w = teacher_stream.sphere_vec(cfg.d);
    teacher.units.push_back(std::move(unit));
  }

  const dvec margins = realize(teacher, data.X);
  if (data.task == Task::regression) {
    data.y = margins;
  } else {
    std::vector<double> sorted(margins.data(), margins.data() + margins.size());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t half = sorted.size() / 2;
    const double median = sorted.size() % 2 == 1
                              ? sorted[half]
                              : 0.5 * (sorted[half - 1] + sorted[half]);
    data.y = dvec(cfg.n);
    for (int k = 0; k < cfg.n; ++k) data.y(k) = margins(k) >= median ? 1.0 : -1.0;
  }
  data.validate();
  return {std::move(data), std::move(teacher)};
}

/// Random initialization a_i ~ N(0, 1/m), w_i ~ N(0, I/d), resampled (bounded
/// retries, deterministic stream) until the draw is in generic position for
/// the given inputs.
inline Theta initialization(const ExperimentConfig& cfg, const dmat& X,
                            const std::string& tag = "init") {
  cfg.validate();
  RngStream stream(cfg.seed, tag);
  const double a_std = 1.0 / std::sqrt(static_cast<double>(cfg.m));
  const double w_std = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  constexpr int kMaxTries = 100;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    Theta theta;
    theta.units.reserve(static_cast<std::size_t>(cfg.m));
    for (int i = 0; i < cfg.m; ++i) {
      Unit unit;
      unit.a = a_std * stream.normal();
      unit.w = w_std * stream.normal_vec(cfg.d);
      theta.units.push_back(std::move(unit));
    }
    const RegularityReport report =
        regularity_check(theta, X, kQuadraticDegree, cfg.tol.rank_tol, cfg.tol.angle_tol);
    if (report.is_generic) return theta;
  }
  throw NumericalError("initialization: no generic draw in " + std::to_string(kMaxTries) +
                       " attempts (tag " + tag + ")");
}

inline Theta initialization(const ExperimentConfig& cfg) {
  const auto [data, teacher] = generate_teacher_data(cfg);
  return initialization(cfg, data.X);
}

namespace detail {

inline const char* rep_kind_name(int rep_index) {
  switch (rep_index % 3) {
    case 0: return "perm";
    case 1: return "scale";
    default: return "mixed";
  }
}

/// Orbit element for sampled representative r (r >= 1); kinds cycle through
/// pure permutation, pure rescaling, and mixed so every run contains at least
/// one of each of the first two when two or more are requested.
inline GroupElement sample_rep_element(const ExperimentConfig& cfg, int rep_index) {
  const std::string kind = rep_kind_name(rep_index - 1);
  RngStream stream(cfg.seed, "orbit-" + kind + "-" + std::to_string(rep_index));
  GroupElement g = GroupElement::identity(cfg.m);
  if (kind == std::string("perm") || kind == std::string("mixed")) {
    g.perm = stream.permutation(cfg.m);
  }
  if (kind == std::string("scale") || kind == std::string("mixed")) {
    for (int i = 0; i < cfg.m; ++i) {
      g.scales(i) = std::exp(stream.uniform(cfg.scale_log_lo, cfg.scale_log_hi));
    }
  }
  return g;
}

inline Theta train_to_threshold(const ExperimentConfig& cfg, const Theta& theta0,
                                const Dataset& data, double* final_loss = nullptr) {
  const TrajectoryRecord traj =
      gradient_descent(theta0, data, cfg.loss, cfg.lr, cfg.steps, std::max(1, cfg.steps));
  const double final = traj.losses.back();
  if (final_loss != nullptr) *final_loss = final;
  if (final > cfg.interpolation_threshold) {
    throw TrainingError("training failed to reach interpolation threshold " +
                            format_double(cfg.interpolation_threshold) + " in " +
                            std::to_string(cfg.steps) + " steps (final loss " +
                            format_double(final) + ")",
                        final);
  }
  return traj.thetas.back();
}

inline void append_spectrum_rows(Table& table, int rep_id, const std::string& rep_kind,
                                 const std::string& space, const dvec& eigenvalues) {
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    table.add_row({format_int(rep_id), rep_kind, space, format_int(i),
                   format_double(eigenvalues(i))});
  }
}

struct RepSpectra {
  dvec theta_spectrum;
  dvec theta_projected;
  dvec q_spectrum;
  double prediction_defect = 0.0;
};

inline RepSpectra spectra_at(const Theta& theta, const Dataset& data, LossKind kind,
                             const dvec& base_predictions) {
  RepSpectra out;
  const dmat H = hess_theta(theta, data, kind);
  out.theta_spectrum = sym_eig(H).eigenvalues;
  const GeometryAtPoint geom = decompose(theta, data.X);
  const dmat& B = geom.horizontal.columns;
  dmat projected = B.transpose() * H * B;
  projected = symmetrized(projected);
  out.theta_projected = sym_eig(projected).eigenvalues;
  const EffectiveHessian eff =
      effective_hessian_q(q_matrix(theta), data, kind);
  out.q_spectrum = eff.pencil.eigenvalues;
  const dvec pred = realize(theta, data.X);
  out.prediction_defect = (pred - base_predictions).lpNorm<Eigen::Infinity>();
  return out;
}

inline double relative_spectrum_gap(const dvec& a, const dvec& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys);
inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace detail

/// Trains one model to interpolation, then compares Hessian spectra across
/// orbit-equivalent representatives in the ambient chart, the horizontally
/// projected chart, and the Q-chart.
inline ExperimentOutput exp_false_flatness(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.loss != LossKind::squared) {
    throw ValidationError("false-flatness requires loss = squared");
  }
  if (cfg.n < vech_dim(cfg.d)) {
    throw ValidationError("false-flatness requires n >= d(d+1)/2 = " +
                          std::to_string(vech_dim(cfg.d)));
  }
  if (cfg.num_orbit_reps < 2) {
    throw ValidationError("false-flatness requires num_orbit_reps >= 2");
  }

  ExperimentOutput out;
  out.name = experiment_name(ExperimentKind::kFalseFlatness);
  out.provenance = detail::provenance_json(cfg, out.name);

  const auto [data, teacher] = generate_teacher_data(cfg);
  const Theta theta0 = initialization(cfg, data.X);
  const Theta trained = detail::train_to_threshold(cfg, theta0, data);
  const dvec base_pred = realize(trained, data.X);

  Table spectra({"rep_id", "rep_kind", "space", "index", "eigenvalue"});
  json thetas;
  thetas["base"] = theta_to_json(trained);
  thetas["reps"] = json::array();

  const detail::RepSpectra base =
      detail::spectra_at(trained, data, cfg.loss, base_pred);
  detail::append_spectrum_rows(spectra, 0, "base", "theta", base.theta_spectrum);
  detail::append_spectrum_rows(spectra, 0, "base", "theta_projected", base.theta_projected);
  detail::append_spectrum_rows(spectra, 0, "base", "q", base.q_spectrum);

  double max_pred_defect = 0.0;
  double max_q_gap = 0.0;
  double max_perm_theta_gap = 0.0;
  double max_scale_shift = 0.0;
  bool saw_perm = false;
  bool saw_scale = false;

  for (int r = 1; r <= cfg.num_orbit_reps; ++r) {
    const std::string kind = detail::rep_kind_name(r - 1);
    const GroupElement g = detail::sample_rep_element(cfg, r);
    const Theta rep = apply_group(g, trained);
    const detail::RepSpectra spec = detail::spectra_at(rep, data, cfg.loss, base_pred);

    detail::append_spectrum_rows(spectra, r, kind, "theta", spec.theta_spectrum);
    detail::append_spectrum_rows(spectra, r, kind, "theta_projected", spec.theta_projected);
    detail::append_spectrum_rows(spectra, r, kind, "q", spec.q_spectrum);
    thetas["reps"].push_back({{"rep_id", r},
                              {"rep_kind", kind},
                              {"group", group_to_json(g)},
                              {"theta", theta_to_json(rep)}});

    max_pred_defect = std::max(max_pred_defect, spec.prediction_defect);
    max_q_gap = std::max(max_q_gap,
                         detail::relative_spectrum_gap(spec.q_spectrum, base.q_spectrum));
    if (kind == std::string("perm")) {
      saw_perm = true;
      max_perm_theta_gap =
          std::max(max_perm_theta_gap,
                   detail::relative_spectrum_gap(spec.theta_spectrum, base.theta_spectrum));
    }
    if (kind == std::string("scale")) {
      saw_scale = true;
      const double base_top = std::abs(base.theta_spectrum(base.theta_spectrum.size() - 1));
      const double rep_top = std::abs(spec.theta_spectrum(spec.theta_spectrum.size() - 1));
      if (base_top > 0.0) {
        max_scale_shift = std::max(max_scale_shift, std::abs(rep_top - base_top) / base_top);
      }
    }
  }
  if (!saw_perm || !saw_scale) {
    throw ValidationError("false-flatness: representative sampling must include a pure "
                          "permutation and a pure rescaling");
  }

  out.tables.emplace_back("spectra.csv", std::move(spectra));
  out.json_files.emplace_back("thetas.json", std::move(thetas));
  out.assertions.push_back({"prediction_defect_max", max_pred_defect <= 1e-9,
                            max_pred_defect, 1e-9});
  out.assertions.push_back({"q_spectra_relative_spread", max_q_gap <= cfg.tol.spectra_tol,
                            max_q_gap, cfg.tol.spectra_tol});
  out.assertions.push_back({"perm_theta_spectra_match", max_perm_theta_gap <= 1e-9,
                            max_perm_theta_gap, 1e-9});
  out.assertions.push_back({"rescale_lambda_max_shift", max_scale_shift > 0.05,
                            max_scale_shift, 0.05});
  return out;
}

namespace detail {

/// Q-space and ambient curvature descriptors of a single parameter point.
struct PointDescriptors {
  double loss_value = 0.0;
  double q_trace = 0.0;
  double q_frob = 0.0;
  double q_lambda_min_pos = 0.0;
  double theta_cond = 0.0;
  double rate = 0.0;
};

inline PointDescriptors describe_point(const Theta& theta, const Dataset& data,
                                       const ExperimentConfig& cfg) {
  PointDescriptors out;
  out.loss_value = loss(theta, data, cfg.loss);

  const QCoordinates q = q_matrix(theta);
  const dmat Hq = hess_q(q, data, cfg.loss);
  const SymSpectrum q_spec = sym_eig(Hq);
  out.q_trace = Hq.trace();
  out.q_frob = Hq.norm();
  const double q_max = q_spec.eigenvalues.cwiseAbs().maxCoeff();
  out.q_lambda_min_pos = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index i = 0; i < q_spec.eigenvalues.size(); ++i) {
    const double lambda = q_spec.eigenvalues(i);
    if (lambda > cfg.tol.rank_tol * q_max) {
      out.q_lambda_min_pos = lambda;  // ascending order: first hit is smallest
      break;
    }
  }

  const dmat Ht = hess_theta(theta, data, cfg.loss);
  const dvec t_abs = sym_eig(Ht).eigenvalues.cwiseAbs();
  const double t_max = t_abs.maxCoeff();
  double t_min = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < t_abs.size(); ++i) {
    if (t_abs(i) > cfg.tol.rank_tol * t_max) t_min = std::min(t_min, t_abs(i));
  }
  out.theta_cond = std::isfinite(t_min) && t_min > 0.0
                       ? t_max / t_min
                       : std::numeric_limits<double>::quiet_NaN();
  return out;
}

constexpr int kShortRunProbeSteps = 300;

inline double short_run_decay_rate(const Theta& theta, const Dataset& data,
                                   const ExperimentConfig& cfg) {
  const TrajectoryRecord probe = gradient_descent(theta, data, cfg.loss, cfg.lr,
                                                  kShortRunProbeSteps, kShortRunProbeSteps);
  const double best = *std::min_element(probe.losses.begin(), probe.losses.end());
  const double guard =
      std::max(1e-300, 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, best));
  return decay_rate(probe.losses, probe.times, best - guard, probe.times.front(),
                    probe.times.back());
}

}  // namespace detail

/// Logistic training with curvature descriptors and short-run decay rates at
/// an intermediate checkpoint, its orbit-equivalent controls, and genuinely
/// perturbed neighbors, pooled over seeds.
inline ExperimentOutput exp_local_dynamics(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.loss != LossKind::logistic) {
    throw ValidationError("local-dynamics requires loss = logistic");
  }

  ExperimentOutput out;
  out.name = experiment_name(ExperimentKind::kLocalDynamics);
  out.provenance = detail::provenance_json(cfg, out.name);

  Table pooled({"seed", "point_id", "point_kind", "loss", "q_trace", "q_frob",
                "q_lambda_min_pos", "theta_cond", "decay_rate"});
  json thetas = json::array();

  double max_orbit_descriptor_gap = 0.0;
  double max_orbit_rate_gap = 0.0;
  std::vector<double> rates;
  std::vector<double> traces, frobs, lambda_mins, conds;

  for (int s = 0; s < cfg.num_seeds; ++s) {
    ExperimentConfig seed_cfg = cfg;
    seed_cfg.seed = cfg.seed + static_cast<std::uint64_t>(s);
    const auto [data, teacher] = generate_teacher_data(seed_cfg);
    const Theta theta0 = initialization(seed_cfg, data.X);
    const TrajectoryRecord traj =
        gradient_descent(theta0, data, cfg.loss, cfg.lr, cfg.steps, 1);

    // First iterate at or below the midpoint of initial and final loss.
    const double level = 0.5 * (traj.losses.front() + traj.losses.back());
    std::size_t ckpt = traj.losses.size() - 1;
    for (std::size_t k = 0; k < traj.losses.size(); ++k) {
      if (traj.losses[k] <= level) {
        ckpt = k;
        break;
      }
    }
    const Theta checkpoint = traj.thetas[ckpt];

    struct Row {
      int point_id;
      std::string kind;
      detail::PointDescriptors desc;
    };
    std::vector<Row> rows;

    detail::PointDescriptors ckpt_desc = detail::describe_point(checkpoint, data, seed_cfg);
    ckpt_desc.rate = detail::short_run_decay_rate(checkpoint, data, seed_cfg);
    rows.push_back({0, "checkpoint", ckpt_desc});
    thetas.push_back({{"seed", seed_cfg.seed},
                      {"point_id", 0},
                      {"point_kind", "checkpoint"},
                      {"theta", theta_to_json(checkpoint)}});

    int point_id = 1;
    for (int r = 1; r <= cfg.num_orbit_reps; ++r, ++point_id) {
      const GroupElement g = detail::sample_rep_element(seed_cfg, r);
      const Theta control = apply_group(g, checkpoint);
      detail::PointDescriptors desc = detail::describe_point(control, data, seed_cfg);
      desc.rate = detail::short_run_decay_rate(control, data, seed_cfg);
      rows.push_back({point_id, "orbit", desc});
      thetas.push_back({{"seed", seed_cfg.seed},
                        {"point_id", point_id},
                        {"point_kind", "orbit"},
                        {"theta", theta_to_json(control)}});

      const double scale_t = std::max(1.0, std::abs(ckpt_desc.q_trace));
      const double scale_f = std::max(1.0, ckpt_desc.q_frob);
      const double scale_l = std::max(1.0, std::abs(ckpt_desc.q_lambda_min_pos));
      max_orbit_descriptor_gap = std::max(
          {max_orbit_descriptor_gap, std::abs(desc.q_trace - ckpt_desc.q_trace) / scale_t,
           std::abs(desc.q_frob - ckpt_desc.q_frob) / scale_f,
           std::abs(desc.q_lambda_min_pos - ckpt_desc.q_lambda_min_pos) / scale_l});
      if (ckpt_desc.rate != 0.0) {
        max_orbit_rate_gap = std::max(max_orbit_rate_gap,
                                      std::abs(desc.rate - ckpt_desc.rate) /
                                          std::abs(ckpt_desc.rate));
      }
    }

    RngStream perturb_stream(seed_cfg.seed, "perturbation");
    const int kRetryBudget = 200;
    int attempts = 0;
    int accepted = 0;
    for (int j = 0; j < cfg.num_perturbations; ++j, ++point_id) {
      bool placed = false;
      while (attempts < kRetryBudget) {
        ++attempts;
        const dvec noise = perturb_stream.normal_vec(checkpoint.dim());
        const dvec x = checkpoint.flatten() + cfg.perturbation_scale * noise;
        const Theta candidate = Theta::unflatten(x, cfg.m, cfg.d);
        const double candidate_loss = loss(candidate, data, cfg.loss);
        if (std::abs(candidate_loss - ckpt_desc.loss_value) <=
            0.2 * ckpt_desc.loss_value) {
          detail::PointDescriptors desc = detail::describe_point(candidate, data, seed_cfg);
          desc.rate = detail::short_run_decay_rate(candidate, data, seed_cfg);
          rows.push_back({point_id, "perturb", desc});
          thetas.push_back({{"seed", seed_cfg.seed},
                            {"point_id", point_id},
                            {"point_kind", "perturb"},
                            {"theta", theta_to_json(candidate)}});
          ++accepted;
          placed = true;
          break;
        }
      }
      if (!placed) {
        throw NumericalError(
            "local-dynamics: perturbation retry budget exhausted (accepted " +
            std::to_string(accepted) + "/" + std::to_string(cfg.num_perturbations) +
            " after " + std::to_string(attempts) + " draws)");
      }
    }

    for (const Row& row : rows) {
      pooled.add_row({format_int(static_cast<long long>(seed_cfg.seed)),
                      format_int(row.point_id), row.kind,
                      format_double(row.desc.loss_value), format_double(row.desc.q_trace),
                      format_double(row.desc.q_frob),
                      format_double(row.desc.q_lambda_min_pos),
                      format_double(row.desc.theta_cond), format_double(row.desc.rate)});
      rates.push_back(row.desc.rate);
      traces.push_back(row.desc.q_trace);
      frobs.push_back(row.desc.q_frob);
      lambda_mins.push_back(row.desc.q_lambda_min_pos);
      conds.push_back(row.desc.theta_cond);
    }
  }

  out.tables.emplace_back("local_dynamics.csv", std::move(pooled));
  out.json_files.emplace_back("thetas.json", std::move(thetas));

  json correlations;
  const std::vector<std::pair<std::string, const std::vector<double>*>> descriptors = {
      {"q_trace", &traces},
      {"q_frob", &frobs},
      {"q_lambda_min_pos", &lambda_mins},
      {"theta_cond", &conds}};
  for (const auto& [name, values] : descriptors) {
    correlations[name] = {{"spearman", detail::spearman(*values, rates)},
                          {"pearson", detail::pearson(*values, rates)}};
  }
  out.extra["decay_rate_correlations"] = correlations;

  out.assertions.push_back({"orbit_q_descriptor_gap", max_orbit_descriptor_gap <= 1e-8,
                            max_orbit_descriptor_gap, 1e-8});
  out.assertions.push_back({"orbit_decay_rate_band", max_orbit_rate_gap <= 0.05,
                            max_orbit_rate_gap, 0.05});
  return out;
}

/// Underdetermined regression: within-orbit invariance of Q-level complexity
/// (Part 1) and across-seed dispersion of the learned complexity (Part 2).
inline ExperimentOutput exp_implicit_bias(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.loss != LossKind::squared) {
    throw ValidationError("implicit-bias requires loss = squared");
  }
  if (cfg.n >= vech_dim(cfg.d)) {
    throw ValidationError("implicit-bias requires n < d(d+1)/2 = " +
                          std::to_string(vech_dim(cfg.d)));
  }

  ExperimentOutput out;
  out.name = experiment_name(ExperimentKind::kImplicitBias);
  out.provenance = detail::provenance_json(cfg, out.name);

  const auto [data, teacher] = generate_teacher_data(cfg);
  json thetas;

  // Part 1: one trained model, complexity across orbit representatives.
  const Theta theta0 = initialization(cfg, data.X);
  const Theta trained = detail::train_to_threshold(cfg, theta0, data);
  thetas["base"] = theta_to_json(trained);
  thetas["reps"] = json::array();

  std::vector<std::string> orbit_columns = {"rep_id", "rep_kind"};
  for (const std::string& c : complexity_table_columns()) orbit_columns.push_back(c);
  Table orbit_table(orbit_columns);

  const ComplexityReport base = complexity_report(trained);
  {
    std::vector<std::string> row = {format_int(0), "base"};
    for (std::string& cell : complexity_table_row(base)) row.push_back(std::move(cell));
    orbit_table.add_row(std::move(row));
  }

  double max_q_gap = 0.0;
  double theta_norm_min = base.theta_norm_sq;
  double theta_norm_max = base.theta_norm_sq;
  for (int r = 1; r <= cfg.num_orbit_reps; ++r) {
    const std::string kind = detail::rep_kind_name(r - 1);
    const GroupElement g = detail::sample_rep_element(cfg, r);
    const Theta rep = apply_group(g, trained);
    const ComplexityReport report = complexity_report(rep);

    std::vector<std::string> row = {format_int(r), kind};
    for (std::string& cell : complexity_table_row(report)) row.push_back(std::move(cell));
    orbit_table.add_row(std::move(row));
    thetas["reps"].push_back({{"rep_id", r},
                              {"rep_kind", kind},
                              {"group", group_to_json(g)},
                              {"theta", theta_to_json(rep)}});

    const double scale_f = std::max(1.0, base.q_frobenius);
    max_q_gap = std::max(
        {max_q_gap, std::abs(report.q_frobenius - base.q_frobenius) / scale_f,
         std::abs(report.q_nuclear - base.q_nuclear) / std::max(1.0, base.q_nuclear),
         std::abs(report.q_operator - base.q_operator) / std::max(1.0, base.q_operator),
         std::abs(report.quotient_theta_norm - base.quotient_theta_norm) /
             std::max(1.0, base.quotient_theta_norm)});
    for (Eigen::Index i = 0; i < base.singular_values.size(); ++i) {
      max_q_gap = std::max(max_q_gap,
                           std::abs(report.singular_values(i) - base.singular_values(i)) /
                               std::max(1.0, base.singular_values.maxCoeff()));
    }
    theta_norm_min = std::min(theta_norm_min, report.theta_norm_sq);
    theta_norm_max = std::max(theta_norm_max, report.theta_norm_sq);
  }
  const double theta_spread =
      (theta_norm_max - theta_norm_min) / std::max(1e-300, base.theta_norm_sq);

  // Part 2: fresh initializations on the same data (num_perturbations is
  // reused as the seed count here).
  std::vector<std::string> seed_columns = {"seed_index", "final_loss", "interpolated"};
  for (const std::string& c : complexity_table_columns()) seed_columns.push_back(c);
  Table seeds_table(seed_columns);
  thetas["seeds"] = json::array();

  const int num_seeds = cfg.num_perturbations;
  int interpolated_count = 0;
  std::vector<double> seed_frobenius, seed_nuclear, seed_operator, seed_stable_rank;
  for (int s = 0; s < num_seeds; ++s) {
    const Theta init_s = initialization(cfg, data.X, "init-" + std::to_string(s));
    const TrajectoryRecord traj =
        gradient_descent(init_s, data, cfg.loss, cfg.lr, cfg.steps, std::max(1, cfg.steps));
    const double final_loss = traj.losses.back();
    const bool interpolated = final_loss <= cfg.interpolation_threshold;
    const Theta learned = traj.thetas.back();
    const ComplexityReport report = complexity_report(learned);

    std::vector<std::string> row = {format_int(s), format_double(final_loss),
                                    format_int(interpolated ? 1 : 0)};
    for (std::string& cell : complexity_table_row(report)) row.push_back(std::move(cell));
    seeds_table.add_row(std::move(row));
    thetas["seeds"].push_back({{"seed_index", s},
                               {"interpolated", interpolated},
                               {"theta", theta_to_json(learned)}});

    if (interpolated) {
      ++interpolated_count;
      seed_frobenius.push_back(report.q_frobenius);
      seed_nuclear.push_back(report.q_nuclear);
      seed_operator.push_back(report.q_operator);
      seed_stable_rank.push_back(report.stable_rank);
    }
  }
  if (2 * interpolated_count < num_seeds) {
    throw TrainingError("implicit-bias: only " + std::to_string(interpolated_count) + "/" +
                            std::to_string(num_seeds) + " seeds reached the threshold",
                        std::numeric_limits<double>::quiet_NaN());
  }

  auto dispersion = [](const std::vector<double>& v) -> json {
    if (v.empty()) return json::object();
    double lo = v[0], hi = v[0], sum = 0.0;
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      sum += x;
    }
    const double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double stddev = std::sqrt(ss / static_cast<double>(v.size()));
    return {{"min", lo}, {"max", hi}, {"mean", mean}, {"stddev", stddev}};
  };
  out.extra["across_seed_dispersion"] = {{"q_frobenius", dispersion(seed_frobenius)},
                                         {"q_nuclear", dispersion(seed_nuclear)},
                                         {"q_operator", dispersion(seed_operator)},
                                         {"stable_rank", dispersion(seed_stable_rank)}};

  out.tables.emplace_back("orbit_complexity.csv", std::move(orbit_table));
  out.tables.emplace_back("seed_complexity.csv", std::move(seeds_table));
  out.json_files.emplace_back("thetas.json", std::move(thetas));

  out.assertions.push_back({"orbit_q_complexity_spread", max_q_gap <= 1e-9, max_q_gap, 1e-9});
  out.assertions.push_back({"orbit_theta_norm_spread", theta_spread > 0.1, theta_spread, 0.1});
  out.assertions.push_back(
      {"interpolating_seed_fraction",
       2 * interpolated_count >= num_seeds,
       static_cast<double>(interpolated_count) / static_cast<double>(num_seeds), 0.5});
  return out;
}

inline ExperimentOutput run_experiment(ExperimentKind kind, const ExperimentConfig& cfg) {
  switch (kind) {
    case ExperimentKind::kFalseFlatness: return exp_false_flatness(cfg);
    case ExperimentKind::kLocalDynamics: return exp_local_dynamics(cfg);
    case ExperimentKind::kImplicitBias: return exp_implicit_bias(cfg);
  }
  throw ValidationError("run_experiment: unknown kind");
}

namespace detail {

inline std::vector<double> ranks_with_ties(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  std::vector<double> x, y;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::isfinite(xs[i]) && std::isfinite(ys[i])) {
      x.push_back(xs[i]);
      y.push_back(ys[i]);
    }
  }
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  if (vx <= 0.0 || vy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return cov / std::sqrt(vx * vy);
}

inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  std::vector<double> x, y;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::isfinite(xs[i]) && std::isfinite(ys[i])) {
      x.push_back(xs[i]);
      y.push_back(ys[i]);
    }
  }
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  return pearson(ranks_with_ties(x), ranks_with_ties(y));
}

}  // namespace detail

}  // namespace qgeom
