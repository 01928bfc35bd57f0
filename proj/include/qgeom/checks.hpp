#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "qgeom/common.hpp"
#include "qgeom/complexity.hpp"
#include "qgeom/dynamics.hpp"
#include "qgeom/experiments.hpp"
#include "qgeom/geometry.hpp"
#include "qgeom/model.hpp"
#include "qgeom/numerics.hpp"
#include "qgeom/rng.hpp"
#include "qgeom/symmetry.hpp"

namespace qgeom {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline Theta random_theta(RngStream& stream, int m, int d, double scale = 1.0) {
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

inline CheckResult make_result(const std::string& name, bool pass, double measured,
                               double tolerance) {
  CheckResult result;
  result.name = name;
  result.pass = pass;
  result.detail = "measured " + format_double(measured) + ", tolerance " +
                  format_double(tolerance);
  return result;
}

}  // namespace detail

/// Fast deterministic cross-module invariant suite backing `qgeom check`.
inline std::vector<CheckResult> run_check_suite() {
  std::vector<CheckResult> results;

  {  // Eigendecomposition reconstructs the input matrix.
    RngStream stream(11, "check-sym-eig");
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const dmat raw = stream.normal_mat(8, 8);
      const dmat A = 0.5 * (raw + raw.transpose());
      const SymSpectrum spec = sym_eig(A);
      const dmat rebuilt = spec.eigenvectors * spec.eigenvalues.asDiagonal() *
                           spec.eigenvectors.transpose();
      worst = std::max(worst, (rebuilt - A).norm() / std::max(1.0, A.norm()));
    }
    results.push_back(detail::make_result("sym_eig_reconstruction", worst <= 1e-12, worst, 1e-12));
  }

  {  // Generalized eigenvectors are B-orthonormal.
    RngStream stream(12, "check-gen-eig");
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const dmat raw_a = stream.normal_mat(6, 6);
      const dmat A = 0.5 * (raw_a + raw_a.transpose());
      const dmat raw_b = stream.normal_mat(6, 6);
      const dmat B = raw_b * raw_b.transpose() + 0.5 * dmat::Identity(6, 6);
      const SymSpectrum spec = gen_sym_eig(A, B);
      const dmat gram = spec.eigenvectors.transpose() * B * spec.eigenvectors;
      worst = std::max(worst, (gram - dmat::Identity(6, 6)).norm());
    }
    results.push_back(detail::make_result("gen_sym_eig_b_orthonormal", worst <= 1e-10, worst, 1e-10));
  }

  {  // Nullspace dimension and residual on a rank-deficient product.
    RngStream stream(13, "check-nullspace");
    double worst = 0.0;
    bool dims_ok = true;
    for (int rep = 0; rep < 20; ++rep) {
      const dmat A = stream.normal_mat(7, 3) * stream.normal_mat(3, 9);
      const SubspaceBasis null = nullspace(A);
      dims_ok = dims_ok && null.dim == 6;
      if (null.dim > 0) worst = std::max(worst, (A * null.columns).norm());
    }
    results.push_back(detail::make_result("nullspace_rank_and_residual",
                                          dims_ok && worst <= 1e-10, worst, 1e-10));
  }

  {  // Counter-based streams: reproducible and tag-isolated.
    RngStream a1(7, "alpha"), a2(7, "alpha"), b(7, "beta");
    bool same = true, differs = false;
    for (int i = 0; i < 100; ++i) {
      const double x = a1.uniform();
      same = same && x == a2.uniform();
      differs = differs || x != b.uniform();
    }
    results.push_back(detail::make_result("rng_stream_determinism", same && differs,
                                          same && differs ? 1.0 : 0.0, 1.0));
  }

  {  // vech_s is an isometry and inverts.
    RngStream stream(14, "check-vech");
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const dmat raw = stream.normal_mat(5, 5);
      const dmat S = 0.5 * (raw + raw.transpose());
      const dvec v = vech_s(S);
      worst = std::max(worst, std::abs(v.squaredNorm() - S.squaredNorm()));
      worst = std::max(worst, (unvech_s(v) - S).norm());
    }
    results.push_back(detail::make_result("vech_isometry_roundtrip", worst <= 1e-12, worst, 1e-12));
  }

  {  // Analytic gradients match finite differences in both charts.
    RngStream stream(15, "check-fd");
    double worst = 0.0;
    for (LossKind kind : {LossKind::squared, LossKind::logistic}) {
      Dataset data;
      data.X = stream.normal_mat(12, 3);
      data.task = kind == LossKind::logistic ? Task::classification : Task::regression;
      if (kind == LossKind::logistic) {
        data.y = dvec(12);
        for (int k = 0; k < 12; ++k) data.y(k) = k % 2 == 0 ? 1.0 : -1.0;
      } else {
        data.y = stream.normal_vec(12);
      }
      const Theta theta = detail::random_theta(stream, 2, 3);
      const dvec analytic = grad_theta(theta, data, kind);
      const dvec fd = fd_gradient(
          [&](const dvec& x) { return loss(Theta::unflatten(x, 2, 3), data, kind); },
          theta.flatten());
      worst = std::max(worst, (analytic - fd).norm() / std::max(1.0, fd.norm()));
    }
    results.push_back(detail::make_result("gradient_matches_fd", worst <= 1e-6, worst, 1e-6));
  }

  {  // Group action: composition law and prediction invariance.
    RngStream stream(16, "check-group");
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const Theta theta = detail::random_theta(stream, 4, 3);
      const dmat X = stream.normal_mat(10, 3);
      const GroupElement g1 = random_orbit_element(4, {-1.0, 1.0}, 100 + static_cast<std::uint64_t>(rep));
      const GroupElement g2 = random_orbit_element(4, {-1.0, 1.0}, 200 + static_cast<std::uint64_t>(rep));
      const Theta via_compose = apply_group(compose(g2, g1), theta);
      const Theta via_steps = apply_group(g2, apply_group(g1, theta));
      worst = std::max(worst, (via_compose.flatten() - via_steps.flatten()).norm());
      worst = std::max(worst,
                       (realize(apply_group(g1, theta), X) - realize(theta, X)).norm());
      const Theta back = apply_group(inverse(g1), apply_group(g1, theta));
      worst = std::max(worst, (back.flatten() - theta.flatten()).norm());
    }
    results.push_back(detail::make_result("group_action_laws", worst <= 1e-9, worst, 1e-9));
  }

  {  // Canonical representative is constant on orbits.
    RngStream stream(17, "check-canonical");
    double worst = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      const Theta theta = detail::random_theta(stream, 3, 4);
      const Theta canon = canonical_representative(theta);
      const GroupElement g = random_orbit_element(3, {-1.5, 1.5}, 300 + static_cast<std::uint64_t>(rep));
      const Theta canon2 = canonical_representative(apply_group(g, theta));
      worst = std::max(worst, (canon.flatten() - canon2.flatten()).norm());
    }
    results.push_back(detail::make_result("canonical_representative_invariant",
                                          worst <= 1e-9, worst, 1e-9));
  }

  {  // Generic draws: kernel dimension matches the closed form and contains
     // the orbit span.
    RngStream stream(18, "check-kernel");
    bool ok = true;
    double worst_angle = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      const int m = 3, d = 4, n = 40;
      const Theta theta = detail::random_theta(stream, m, d);
      const dmat X = stream.normal_mat(n, d);
      const RegularityReport report = regularity_check(theta, X);
      ok = ok && report.kernel_dim == generic_kernel_dim(m, d, n) && report.is_generic;
      worst_angle = std::max(worst_angle, report.max_principal_angle);
    }
    results.push_back(detail::make_result("kernel_dimension_generic",
                                          ok && worst_angle <= 1e-6, worst_angle, 1e-6));
  }

  {  // Horizontal lift solves G u = grad L with u orthogonal to the kernel.
    RngStream stream(19, "check-lift");
    double worst = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      Dataset data;
      data.X = stream.normal_mat(30, 3);
      data.y = stream.normal_vec(30);
      data.task = Task::regression;
      const Theta theta = detail::random_theta(stream, 2, 3);
      const GeometryAtPoint geom = decompose(theta, data.X);
      const dvec u = horizontal_lift_gradient(theta, data, LossKind::squared, geom);
      const dvec grad = grad_theta(theta, data, LossKind::squared);
      worst = std::max(worst, (geom.metric * u - grad).norm() / std::max(1.0, grad.norm()));
      if (geom.kernel.dim > 0) {
        worst = std::max(worst, (geom.kernel.columns.transpose() * u).norm() /
                                    std::max(1.0, u.norm()));
      }
    }
    results.push_back(detail::make_result("horizontal_lift_consistency", worst <= 1e-8,
                                          worst, 1e-8));
  }

  {  // The Euclidean gradient is horizontal: GD vertical speed vanishes.
    RngStream stream(20, "check-vertical");
    Dataset data;
    data.X = stream.normal_mat(20, 3);
    data.y = stream.normal_vec(20);
    data.task = Task::regression;
    const Theta theta0 = detail::random_theta(stream, 3, 3);
    const TrajectoryRecord traj =
        gradient_descent(theta0, data, LossKind::squared, 1e-3, 50, 1);
    double worst = 0.0;
    for (std::size_t k = 0; k < traj.vertical_speed.size(); ++k) {
      worst = std::max(worst, traj.vertical_speed[k] /
                                  std::max(1e-12, traj.horizontal_speed[k]));
    }
    results.push_back(detail::make_result("gd_gradient_horizontal", worst <= 1e-9, worst, 1e-9));
  }

  {  // Quotient flow is gauge invariant at the Q level.
    RngStream stream(21, "check-quotient-gauge");
    Dataset data;
    data.X = stream.normal_mat(24, 3);
    data.y = stream.normal_vec(24);
    data.task = Task::regression;
    const Theta theta0 = detail::random_theta(stream, 2, 3);
    const GroupElement g = random_orbit_element(2, {-0.7, 0.7}, 400);
    const TrajectoryRecord t1 =
        quotient_flow(theta0, data, LossKind::squared, 0.01, 100, 10);
    const TrajectoryRecord t2 =
        quotient_flow(apply_group(g, theta0), data, LossKind::squared, 0.01, 100, 10);
    double worst = 0.0;
    for (std::size_t k = 0; k < t1.q_snapshots.size(); ++k) {
      worst = std::max(worst, (t1.q_snapshots[k].q - t2.q_snapshots[k].q).norm() /
                                  std::max(1.0, t1.q_snapshots[k].q.norm()));
    }
    results.push_back(detail::make_result("quotient_flow_gauge_invariance", worst <= 1e-6,
                                          worst, 1e-6));
  }

  {  // Orbit invariance of Q-level complexity and the closed-form infimum.
    RngStream stream(22, "check-complexity");
    double worst = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      const Theta theta = detail::random_theta(stream, 3, 4);
      const ComplexityReport base = complexity_report(theta);
      const GroupElement g = random_orbit_element(3, {-1.0, 1.0}, 500 + static_cast<std::uint64_t>(rep));
      const ComplexityReport other = complexity_report(apply_group(g, theta));
      worst = std::max({worst,
                        std::abs(base.q_frobenius - other.q_frobenius),
                        std::abs(base.q_nuclear - other.q_nuclear),
                        std::abs(base.q_operator - other.q_operator),
                        std::abs(base.quotient_theta_norm - other.quotient_theta_norm)});
    }
    double oracle_gap = 0.0;
    for (double a : {0.3, 1.0, 2.5}) {
      for (double w : {0.5, 1.0, 3.0}) {
        const Minimum1D oracle = minimize_1d(
            [&](double c) { return std::pow(c, -4.0) * a * a + c * c * w * w; }, 0.05, 20.0,
            1e-10);
        oracle_gap = std::max(oracle_gap,
                              std::abs(per_unit_orbit_infimum(a, w) - oracle.value) /
                                  oracle.value);
      }
    }
    results.push_back(detail::make_result("complexity_orbit_invariance",
                                          worst <= 1e-9 && oracle_gap <= 1e-6,
                                          std::max(worst, oracle_gap), 1e-6));
  }

  {  // Teacher data generation: deterministic, targets realized, labels balanced.
    ExperimentConfig cfg = default_config(ExperimentKind::kFalseFlatness);
    cfg.seed = 42;
    const auto [data1, teacher1] = generate_teacher_data(cfg);
    const auto [data2, teacher2] = generate_teacher_data(cfg);
    const double repeat_gap = (data1.X - data2.X).norm() + (data1.y - data2.y).norm();
    const double target_gap =
        (data1.y - realize(teacher1, data1.X)).lpNorm<Eigen::Infinity>();

    ExperimentConfig ccfg = default_config(ExperimentKind::kLocalDynamics);
    ccfg.seed = 43;
    const auto [cdata, cteacher] = generate_teacher_data(ccfg);
    int positives = 0;
    for (Eigen::Index k = 0; k < cdata.y.size(); ++k) positives += cdata.y(k) > 0 ? 1 : 0;
    const bool balanced = std::abs(2 * positives - ccfg.n) <= 2;
    results.push_back(detail::make_result(
        "teacher_data_deterministic_balanced",
        repeat_gap == 0.0 && target_gap <= 1e-12 && balanced,
        repeat_gap + target_gap, 1e-12));
  }

  return results;
}

}  // namespace qgeom
