#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <qgeom/experiments.hpp>

namespace {

using qgeom::dmat;
using qgeom::Dataset;
using qgeom::dvec;
using qgeom::ExperimentConfig;
using qgeom::ExperimentKind;
using qgeom::ExperimentOutput;
using qgeom::format_double;
using qgeom::LossKind;
using qgeom::RngStream;
using qgeom::Task;
using qgeom::Theta;
using qgeom::Unit;

struct CriterionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& reason) {
  if (!condition) throw CriterionFailure(reason);
}

Theta random_theta(RngStream& stream, int m, int d, double scale = 1.0) {
  Theta theta;
  theta.units.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    Unit unit;
    unit.a = scale * stream.normal();
    unit.w = scale * stream.normal_vec(d);
    theta.units.push_back(std::move(unit));
  }
  return theta;
}

Dataset random_regression(RngStream& stream, int n, int d) {
  Dataset data;
  data.task = Task::regression;
  data.X = stream.normal_mat(n, d);
  data.y = stream.normal_vec(n);
  return data;
}

struct RealizableInstance {
  Dataset data;
  Theta teacher;
  Theta theta0;
};

RealizableInstance realizable_instance(std::uint64_t seed, const std::string& tag, int m,
                                       int d, int n) {
  RngStream stream(seed, tag);
  RealizableInstance out;
  out.data.task = Task::regression;
  out.data.X = stream.normal_mat(n, d);
  out.teacher.units.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    Unit unit;
    unit.a = stream.normal();
    unit.w = stream.sphere_vec(d);
    out.teacher.units.push_back(std::move(unit));
  }
  out.data.y = qgeom::realize(out.teacher, out.data.X);
  out.theta0 = random_theta(stream, m, d, 0.7);
  return out;
}

Theta train_to_gradient(const Theta& theta0, const Dataset& data, double lr,
                        double grad_tol, int chunk_steps, int max_chunks) {
  Theta theta = theta0;
  for (int chunk = 0; chunk < max_chunks; ++chunk) {
    if (qgeom::grad_theta(theta, data, LossKind::squared).norm() <= grad_tol) return theta;
    const qgeom::TrajectoryRecord traj =
        qgeom::gradient_descent(theta, data, LossKind::squared, lr, chunk_steps, chunk_steps);
    theta = traj.thetas.back();
  }
  const double remaining = qgeom::grad_theta(theta, data, LossKind::squared).norm();
  require(remaining <= grad_tol, "training stalled with gradient norm " +
                                     format_double(remaining) + " after " +
                                     std::to_string(max_chunks * chunk_steps) + " steps");
  return theta;
}

ExperimentConfig small_false_flatness() {
  ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kFalseFlatness);
  cfg.d = 2;
  cfg.m = 4;
  cfg.n = 3;
  cfg.seed = 7;
  cfg.lr = 0.1;
  cfg.steps = 40000;
  cfg.num_orbit_reps = 2;
  return cfg;
}

ExperimentConfig small_local_dynamics() {
  ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kLocalDynamics);
  cfg.d = 2;
  cfg.m = 3;
  cfg.n = 8;
  cfg.seed = 11;
  cfg.lr = 0.1;
  cfg.steps = 400;
  cfg.num_orbit_reps = 2;
  cfg.num_perturbations = 2;
  cfg.num_seeds = 2;
  return cfg;
}

ExperimentConfig small_implicit_bias() {
  ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kImplicitBias);
  cfg.d = 3;
  cfg.m = 4;
  cfg.n = 4;
  cfg.seed = 21;
  cfg.lr = 0.05;
  cfg.steps = 100000;
  cfg.num_orbit_reps = 2;
  cfg.num_perturbations = 3;
  return cfg;
}

void require_driver_pass(const ExperimentOutput& out, const std::string& context) {
  for (const qgeom::AssertionResult& a : out.assertions) {
    require(a.pass, context + ": assertion " + a.name + " failed (measured " +
                        format_double(a.measured) + ", tolerance " +
                        format_double(a.tolerance) + ")");
  }
}

// --- A1: symmetry invariance of the realization map ---------------------------

std::string criterion_a1() {
  RngStream stream(2024, "acceptance-a1");
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int m = 1 + static_cast<int>(stream.below(8));
    const int d = 1 + static_cast<int>(stream.below(6));
    const int n = 1 + static_cast<int>(stream.below(50));
    const Theta theta = random_theta(stream, m, d);
    const dmat X = stream.normal_mat(n, d);
    const qgeom::GroupElement g =
        qgeom::random_orbit_element(m, {-1.0, 1.0}, 5000 + static_cast<std::uint64_t>(t));
    const dvec base = qgeom::realize(theta, X);
    const dvec moved = qgeom::realize(qgeom::apply_group(g, theta), X);
    const double defect = (moved - base).lpNorm<Eigen::Infinity>() /
                          std::max(1.0, base.lpNorm<Eigen::Infinity>());
    worst = std::max(worst, defect);
  }
  require(worst <= 1e-10,
          "max relative prediction defect " + format_double(worst) + " exceeds 1e-10");
  return "1000 random (theta, g, X) triples, max relative defect " + format_double(worst) +
         " <= 1e-10";
}

// --- A2: kernel equals the orbit span at regular points -----------------------

std::string criterion_a2() {
  RngStream stream(2024, "acceptance-a2");
  double worst_angle = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int m = 1;
    const int d = 2 + t % 5;
    const int n = m * (d + 1) + static_cast<int>(stream.below(8));
    const Theta theta = random_theta(stream, m, d);
    const dmat X = stream.normal_mat(n, d);
    const qgeom::RegularityReport report = qgeom::regularity_check(theta, X);
    require(report.kernel_dim == m,
            "instance " + std::to_string(t) + ": kernel dim " +
                std::to_string(report.kernel_dim) + " != m = " + std::to_string(m));
    require(report.max_principal_angle <= 1e-6,
            "instance " + std::to_string(t) + ": principal angle " +
                format_double(report.max_principal_angle) + " exceeds 1e-6");
    require(report.is_regular, "instance " + std::to_string(t) + " not flagged regular");
    worst_angle = std::max(worst_angle, report.max_principal_angle);
  }

  Theta collided = random_theta(stream, 2, 3);
  collided.units[1].w = collided.units[0].w;
  const dmat X = stream.normal_mat(20, 3);
  const int kernel_dim = qgeom::nullspace(qgeom::jacobian(collided, X)).dim;
  require(kernel_dim > 2, "collision point kernel dim " + std::to_string(kernel_dim) +
                              " not larger than m = 2");
  return "200 regular points: kernel dim = m, max angle " + format_double(worst_angle) +
         " <= 1e-6; collision kernel dim " + std::to_string(kernel_dim) + " > 2";
}

// --- A3: analytic derivatives match central finite differences ----------------

struct DerivativeInstance {
  Theta theta;
  Dataset data;
  LossKind kind;
};

DerivativeInstance derivative_instance(RngStream& stream, int t) {
  DerivativeInstance inst;
  const int m = 1 + t % 3;
  const int d = 1 + (t / 3) % 3;
  const int n = 4 + t % 9;
  inst.kind = t % 2 == 0 ? LossKind::squared : LossKind::logistic;
  inst.theta = random_theta(stream, m, d);
  inst.data.X = stream.normal_mat(n, d);
  if (inst.kind == LossKind::squared) {
    inst.data.task = Task::regression;
    inst.data.y = stream.normal_vec(n);
  } else {
    inst.data.task = Task::classification;
    inst.data.y = dvec(n);
    for (int k = 0; k < n; ++k) inst.data.y(k) = k % 2 == 0 ? 1.0 : -1.0;
  }
  return inst;
}

double max_rel_gap(const dmat& analytic, const dmat& fd) {
  const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
  return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

std::string criterion_a3() {
  RngStream stream(2024, "acceptance-a3");
  double worst = 0.0;
  const auto bump = [&](double gap, const char* what, int t) {
    require(gap <= 1e-5, std::string(what) + " instance " + std::to_string(t) +
                             ": relative gap " + format_double(gap) + " exceeds 1e-5");
    worst = std::max(worst, gap);
  };

  for (int t = 0; t < 100; ++t) {
    const DerivativeInstance inst = derivative_instance(stream, t);
    const int m = inst.theta.m();
    const int d = inst.theta.d();
    const dvec analytic = qgeom::grad_theta(inst.theta, inst.data, inst.kind);
    const dvec fd = qgeom::fd_gradient(
        [&](const dvec& x) {
          return qgeom::loss(Theta::unflatten(x, m, d), inst.data, inst.kind);
        },
        inst.theta.flatten());
    bump(max_rel_gap(analytic, fd), "grad_theta", t);
  }

  for (int t = 0; t < 100; ++t) {
    const DerivativeInstance inst = derivative_instance(stream, 100 + t);
    const int m = inst.theta.m();
    const int d = inst.theta.d();
    const dmat analytic = qgeom::hess_theta(inst.theta, inst.data, inst.kind);
    const dmat fd = qgeom::fd_jacobian(
        [&](const dvec& x) {
          return qgeom::grad_theta(Theta::unflatten(x, m, d), inst.data, inst.kind);
        },
        inst.theta.flatten());
    bump(max_rel_gap(analytic, fd), "hess_theta", t);
  }

  for (int t = 0; t < 100; ++t) {
    const DerivativeInstance inst = derivative_instance(stream, 200 + t);
    const dvec q0 = qgeom::q_matrix(inst.theta).q;
    const dvec analytic =
        qgeom::grad_q(qgeom::QCoordinates::from_vech(q0), inst.data, inst.kind);
    const dvec fd = qgeom::fd_gradient(
        [&](const dvec& v) {
          return qgeom::loss_q(qgeom::QCoordinates::from_vech(v), inst.data, inst.kind);
        },
        q0);
    bump(max_rel_gap(analytic, fd), "grad_q", t);
  }

  for (int t = 0; t < 100; ++t) {
    const DerivativeInstance inst = derivative_instance(stream, 300 + t);
    const dvec q0 = qgeom::q_matrix(inst.theta).q;
    const dmat analytic =
        qgeom::hess_q(qgeom::QCoordinates::from_vech(q0), inst.data, inst.kind);
    const dmat fd = qgeom::fd_jacobian(
        [&](const dvec& v) {
          return qgeom::grad_q(qgeom::QCoordinates::from_vech(v), inst.data, inst.kind);
        },
        q0);
    bump(max_rel_gap(analytic, fd), "hess_q", t);
  }

  return "grad_theta/hess_theta/grad_q/hess_q vs central differences, 100 instances "
         "each, max relative gap " +
         format_double(worst) + " <= 1e-5";
}

// --- A4: false-flatness driver over consecutive seeds -------------------------

std::string criterion_a4() {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ExperimentConfig cfg = qgeom::default_config(ExperimentKind::kFalseFlatness);
    cfg.seed = seed;
    try {
      const ExperimentOutput out = qgeom::exp_false_flatness(cfg);
      require_driver_pass(out, "seed " + std::to_string(seed));
    } catch (const CriterionFailure&) {
      throw;
    } catch (const std::exception& err) {
      throw CriterionFailure("seed " + std::to_string(seed) + ": " + err.what());
    }
  }
  return "false-flatness assertions pass on seeds 1..10 with the default config";
}

// --- A5: exact e^{-2t} decay of the quotient flow -----------------------------

std::string criterion_a5() {
  const RealizableInstance inst = realizable_instance(2024, "acceptance-a5", 3, 2, 8);
  const qgeom::TrajectoryRecord traj =
      qgeom::quotient_flow(inst.theta0, inst.data, LossKind::squared, 1e-3, 3000, 10);

  double worst = 0.0;
  for (int t : {1, 2, 3}) {
    const std::size_t k = static_cast<std::size_t>(1000 * t);
    const double ratio = traj.losses[k] / traj.losses[0];
    const double expected = std::exp(-2.0 * static_cast<double>(t));
    const double gap = std::abs(ratio - expected);
    require(gap <= 1e-3 * expected,
            "loss ratio at t = " + std::to_string(t) + " is " + format_double(ratio) +
                ", expected " + format_double(expected) + " within " +
                format_double(1e-3 * expected));
    worst = std::max(worst, gap / expected);
  }

  const qgeom::ConvergenceCertificate cert =
      qgeom::certify_convergence(traj, inst.data, LossKind::squared);
  require(std::abs(cert.mu_hat - 1.0) <= 1e-6,
          "mu_hat = " + format_double(cert.mu_hat) + ", expected 1 within 1e-6");
  require(std::abs(cert.L_hat - 1.0) <= 1e-6,
          "L_hat = " + format_double(cert.L_hat) + ", expected 1 within 1e-6");
  return "RK4 step 1e-3 to t = 3: worst relative ratio gap " + format_double(worst) +
         " <= 1e-3; mu_hat = L_hat = 1 within 1e-6";
}

// --- A6: function evolution rides the horizontal component --------------------

std::string criterion_a6() {
  double worst_defect = 0.0;
  double worst_ratio = 0.0;
  for (int t = 0; t < 20; ++t) {
    RngStream stream(3000 + static_cast<std::uint64_t>(t), "acceptance-a6");
    const int m = 1 + t % 3;
    const int d = 2 + t % 2;
    const Dataset data = random_regression(stream, 10, d);
    const Theta theta0 = random_theta(stream, m, d);
    const qgeom::TrajectoryRecord traj =
        qgeom::gradient_descent(theta0, data, LossKind::squared, 1e-7, 5, 1);

    const double defect = qgeom::horizontal_evolution_check(traj, data);
    require(defect <= 1e-6, "trajectory " + std::to_string(t) + ": defect " +
                                format_double(defect) + " exceeds 1e-6");
    worst_defect = std::max(worst_defect, defect);

    for (std::size_t k = 0; k < traj.vertical_speed.size(); ++k) {
      const double ratio =
          traj.vertical_speed[k] / std::max(1e-12, traj.horizontal_speed[k]);
      require(ratio <= 1e-9, "trajectory " + std::to_string(t) + " step " +
                                 std::to_string(k) + ": vertical/horizontal ratio " +
                                 format_double(ratio) + " exceeds 1e-9");
      worst_ratio = std::max(worst_ratio, ratio);
    }
  }
  return "20 GD trajectories: max defect " + format_double(worst_defect) +
         " <= 1e-6, max vertical/horizontal ratio " + format_double(worst_ratio) +
         " <= 1e-9";
}

// --- A7: chart consistency of the effective Hessian ---------------------------

std::string criterion_a7() {
  double worst_spec = 0.0;
  double worst_gamma = 0.0;
  int valid = 0;
  int skipped = 0;
  for (std::uint64_t t = 0; valid < 10; ++t) {
    require(t < 25, "only " + std::to_string(valid) +
                        " of 10 chart-comparable trained minima in 25 draws");
    const RealizableInstance inst =
        realizable_instance(4000 + t, "acceptance-a7", 2, 2, 10);
    Theta trained;
    try {
      trained = train_to_gradient(inst.theta0, inst.data, 0.02, 1e-10, 10000, 100);
    } catch (const std::exception&) {
      ++skipped;  // stalled or diverged short of a minimum; draw a fresh instance
      continue;
    }
    const Theta gauged = qgeom::gauge_normalize(trained);

    const qgeom::SliceChart chart = qgeom::gauge_slice_chart(gauged);
    const qgeom::ReducedHessianGauge red =
        qgeom::reduced_hessian_gauge(gauged, inst.data, LossKind::squared, chart);
    const qgeom::SymSpectrum slice_spec =
        qgeom::restricted_generalized_spectrum(red.hessian, red.metric);

    const qgeom::EffectiveHessian eff =
        qgeom::effective_hessian_q(qgeom::q_matrix(gauged), inst.data, LossKind::squared);

    if (slice_spec.eigenvalues.size() != eff.pencil.eigenvalues.size()) {
      ++skipped;  // minimum sits on a lower-rank stratum; charts not comparable there
      continue;
    }
    const double scale = std::max(1.0, eff.pencil.eigenvalues.cwiseAbs().maxCoeff());
    const double gap =
        (slice_spec.eigenvalues - eff.pencil.eigenvalues).cwiseAbs().maxCoeff() / scale;
    require(gap <= 1e-4, "instance " + std::to_string(t) + ": spectra gap " +
                             format_double(gap) + " exceeds 1e-4");
    worst_spec = std::max(worst_spec, gap);

    const dmat metric_q = eff.metric_q;
    const std::vector<dmat> gamma = qgeom::christoffel_fd(
        [&](const dvec&) { return metric_q; },
        dvec::Zero(qgeom::vech_dim(gauged.d())), 1e-4);
    double gamma_max = 0.0;
    for (const dmat& g : gamma) gamma_max = std::max(gamma_max, g.cwiseAbs().maxCoeff());
    require(gamma_max <= 1e-6, "instance " + std::to_string(t) +
                                   ": Q-chart Christoffel magnitude " +
                                   format_double(gamma_max) + " exceeds 1e-6");
    worst_gamma = std::max(worst_gamma, gamma_max);
    ++valid;
  }
  return "10 trained minima (" + std::to_string(skipped) +
         " degenerate draws skipped): slice vs Q-chart spectra gap " +
         format_double(worst_spec) + " <= 1e-4; Q-chart Christoffels " +
         format_double(worst_gamma) + " <= 1e-6";
}

// --- A8: quotient complexity --------------------------------------------------

std::string criterion_a8() {
  double worst_oracle = 0.0;
  for (int ia = 1; ia <= 10; ++ia) {
    for (int iw = 1; iw <= 10; ++iw) {
      const double a = (ia % 2 == 0 ? 1.0 : -1.0) * 0.3 * ia;
      const double wn = 0.25 * iw;
      const qgeom::Minimum1D oracle = qgeom::minimize_1d(
          [&](double c) {
            return std::pow(c, -4.0) * a * a + c * c * wn * wn;
          },
          1e-2, 1e2, 1e-12);
      const double gap = std::abs(qgeom::per_unit_orbit_infimum(a, wn) - oracle.value) /
                         std::max(1.0, std::abs(oracle.value));
      require(gap <= 1e-6, "orbit infimum at a = " + format_double(a) + ", |w| = " +
                               format_double(wn) + ": gap " + format_double(gap) +
                               " exceeds 1e-6");
      worst_oracle = std::max(worst_oracle, gap);
    }
  }

  int spread_hits = 0;
  double worst_q_gap = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    RngStream stream(6000 + static_cast<std::uint64_t>(seed), "acceptance-a8");
    const Theta theta = random_theta(stream, 3, 4);
    const qgeom::ComplexityReport base = qgeom::complexity_report(theta);
    double norm_min = base.theta_norm_sq;
    double norm_max = base.theta_norm_sq;
    for (int rep = 0; rep < 5; ++rep) {
      const qgeom::GroupElement g = qgeom::random_orbit_element(
          3, {-1.0, 1.0}, 9000 + static_cast<std::uint64_t>(seed * 10 + rep));
      const qgeom::ComplexityReport other =
          qgeom::complexity_report(qgeom::apply_group(g, theta));
      const double q_gap =
          std::max({std::abs(other.q_frobenius - base.q_frobenius),
                    std::abs(other.q_nuclear - base.q_nuclear),
                    std::abs(other.q_operator - base.q_operator),
                    std::abs(other.quotient_theta_norm - base.quotient_theta_norm)}) /
          std::max(1.0, base.q_frobenius);
      require(q_gap <= 1e-9, "seed " + std::to_string(seed) + " rep " +
                                 std::to_string(rep) + ": q-level spread " +
                                 format_double(q_gap) + " exceeds 1e-9");
      worst_q_gap = std::max(worst_q_gap, q_gap);
      norm_min = std::min(norm_min, other.theta_norm_sq);
      norm_max = std::max(norm_max, other.theta_norm_sq);
    }
    if ((norm_max - norm_min) / base.theta_norm_sq > 0.1) ++spread_hits;
  }
  require(spread_hits >= 11, "theta_norm_sq spread > 0.1 on only " +
                                 std::to_string(spread_hits) + "/20 seeds (need majority)");

  const ExperimentConfig ib_cfg = qgeom::default_config(ExperimentKind::kImplicitBias);
  try {
    const ExperimentOutput out = qgeom::exp_implicit_bias(ib_cfg);
    require_driver_pass(out, "implicit-bias default config");
  } catch (const CriterionFailure&) {
    throw;
  } catch (const std::exception& err) {
    throw CriterionFailure(std::string("implicit-bias default config: ") + err.what());
  }

  return "orbit infimum vs golden section <= 1e-6 on 10x10 grid (worst " +
         format_double(worst_oracle) + "); q-level spread <= 1e-9 with theta-norm "
         "spread > 0.1 on " +
         std::to_string(spread_hits) + "/20 seeds; implicit-bias completes at d=6, n=12";
}

// --- A9: byte-identical experiment reruns -------------------------------------

std::string criterion_a9() {
  const std::vector<std::pair<ExperimentKind, ExperimentConfig>> runs = {
      {ExperimentKind::kFalseFlatness, small_false_flatness()},
      {ExperimentKind::kLocalDynamics, small_local_dynamics()},
      {ExperimentKind::kImplicitBias, small_implicit_bias()}};
  for (const auto& [kind, cfg] : runs) {
    const ExperimentOutput first = qgeom::run_experiment(kind, cfg);
    const ExperimentOutput second = qgeom::run_experiment(kind, cfg);
    require(first.tables.size() == second.tables.size(),
            qgeom::experiment_name(kind) + ": table counts differ across reruns");
    for (std::size_t i = 0; i < first.tables.size(); ++i) {
      require(first.tables[i].first == second.tables[i].first &&
                  first.tables[i].second.to_csv() == second.tables[i].second.to_csv(),
              qgeom::experiment_name(kind) + ": CSV " + first.tables[i].first +
                  " differs across reruns");
    }
    require(first.json_files.size() == second.json_files.size(),
            qgeom::experiment_name(kind) + ": JSON file counts differ across reruns");
    for (std::size_t i = 0; i < first.json_files.size(); ++i) {
      require(first.json_files[i].second.dump() == second.json_files[i].second.dump(),
              qgeom::experiment_name(kind) + ": JSON " + first.json_files[i].first +
                  " differs across reruns");
    }
  }
  return "false-flatness, local-dynamics, implicit-bias reruns are byte-identical";
}

struct Criterion {
  std::string id;
  std::string label;
  double time_limit_s;
  std::function<std::string()> body;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"A1", "symmetry invariance", 5.0, criterion_a1},
      {"A2", "kernel equals orbit span at regular points", 10.0, criterion_a2},
      {"A3", "derivative exactness", 30.0, criterion_a3},
      {"A4", "false flatness across seeds", 60.0, criterion_a4},
      {"A5", "exact quotient-flow rate", 30.0, criterion_a5},
      {"A6", "horizontal function evolution", 30.0, criterion_a6},
      {"A7", "chart consistency of the effective Hessian", 60.0, criterion_a7},
      {"A8", "quotient complexity", 120.0, criterion_a8},
      {"A9", "experiment determinism", 0.0, criterion_a9},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    std::string reason;
    bool pass = true;
    try {
      detail = c.body();
    } catch (const std::exception& err) {
      pass = false;
      reason = err.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (pass && c.time_limit_s > 0.0 && elapsed > c.time_limit_s) {
      pass = false;
      reason = "runtime " + format_double(elapsed) + " s exceeds budget " +
               format_double(c.time_limit_s) + " s";
    }
    char timing[32];
    std::snprintf(timing, sizeof(timing), "%.2f", elapsed);
    if (pass) {
      std::cout << "PASS " << c.id << " " << c.label << ": " << detail << " [" << timing
                << " s]\n";
    } else {
      ++failures;
      std::cout << "FAIL " << c.id << " " << c.label << ": " << reason << " [" << timing
                << " s]\n";
    }
  }

  if (failures == 0) {
    std::cout << "acceptance: all 9 criteria passed\n";
    return 0;
  }
  std::cout << "acceptance: " << failures << " of 9 criteria FAILED\n";
  return 1;
}
