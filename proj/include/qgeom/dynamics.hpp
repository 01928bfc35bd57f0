#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qgeom/common.hpp"
#include "qgeom/geometry.hpp"
#include "qgeom/model.hpp"
#include "qgeom/numerics.hpp"
#include "qgeom/symmetry.hpp"
#include "qgeom/tables.hpp"

namespace qgeom {

/// Recorded trajectory: scalar series at every step, parameter and Q-chart
/// snapshots at the recording stride (final point always included).
struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<double> losses;
  std::vector<double> grad_norms;
  std::vector<double> vertical_speed;    // ||P^ver dtheta/dt||
  std::vector<double> horizontal_speed;  // ||P^hor dtheta/dt||
  std::vector<int> snapshot_steps;
  std::vector<double> snapshot_times;
  std::vector<Theta> thetas;
  std::vector<QCoordinates> q_snapshots;

  int num_steps() const { return static_cast<int>(times.size()) - 1; }
};

namespace detail {

inline void record_speeds(const Theta& theta, const dvec& velocity, double p,
                          TrajectoryRecord& traj) {
  const OrbitTangentBasis tangents = orbit_tangent_basis(theta, p);
  const SpanAndComplement split = orthonormal_span(tangents.vectors);
  const dvec vertical_part = split.span.columns.transpose() * velocity;
  const double vs = vertical_part.norm();
  const double hs = (velocity - split.span.columns * vertical_part).norm();
  traj.vertical_speed.push_back(vs);
  traj.horizontal_speed.push_back(hs);
}

inline void record_snapshot(const Theta& theta, int step, double time, TrajectoryRecord& traj) {
  traj.snapshot_steps.push_back(step);
  traj.snapshot_times.push_back(time);
  traj.thetas.push_back(theta);
  traj.q_snapshots.push_back(q_matrix(theta));
}

}  // namespace detail

/// Euclidean gradient descent theta_{k+1} = theta_k - step * grad L(theta_k).
inline TrajectoryRecord gradient_descent(const Theta& theta0, const Dataset& data, LossKind kind,
                                         double step, int steps, int record_stride = 10) {
  theta0.validate();
  data.validate();
  if (step <= 0.0) throw ValidationError("gradient_descent: step must be positive");
  if (steps < 0) throw ValidationError("gradient_descent: steps must be nonnegative");
  if (record_stride < 1) throw ValidationError("gradient_descent: record_stride must be >= 1");

  TrajectoryRecord traj;
  dvec x = theta0.flatten();
  const int m = theta0.m();
  const int d = theta0.d();

  for (int k = 0; k <= steps; ++k) {
    const Theta theta = Theta::unflatten(x, m, d);
    const double t = static_cast<double>(k) * step;
    const double value = loss(theta, data, kind);
    if (!std::isfinite(value)) {
      throw NumericalError("gradient_descent: non-finite loss at step " + std::to_string(k) +
                           " (step size too large)");
    }
    const dvec grad = grad_theta(theta, data, kind);
    const dvec velocity = -grad;

    traj.times.push_back(t);
    traj.losses.push_back(value);
    traj.grad_norms.push_back(grad.norm());
    detail::record_speeds(theta, velocity, kQuadraticDegree, traj);
    if (k % record_stride == 0 || k == steps) detail::record_snapshot(theta, k, t, traj);

    if (k < steps) x -= step * grad;
  }
  return traj;
}

enum class Integrator { kEuler, kRk4 };

/// Horizontally lifted quotient gradient flow dtheta/dt = -u_L(theta),
/// integrated with a fixed step (RK4 by default so the integrator error sits
/// well below the rate assertions; Euler available for cross-checks).
inline TrajectoryRecord quotient_flow(const Theta& theta0, const Dataset& data, LossKind kind,
                                      double step, int steps, int record_stride = 10,
                                      Integrator integrator = Integrator::kRk4) {
  theta0.validate();
  data.validate();
  if (step <= 0.0) throw ValidationError("quotient_flow: step must be positive");
  if (steps < 0) throw ValidationError("quotient_flow: steps must be nonnegative");
  if (record_stride < 1) throw ValidationError("quotient_flow: record_stride must be >= 1");

  const int m = theta0.m();
  const int d = theta0.d();
  const auto field = [&](const dvec& x, double t) -> dvec {
    const Theta theta = Theta::unflatten(x, m, d);
    try {
      const GeometryAtPoint geom = decompose(theta, data.X);
      return -horizontal_lift_gradient(theta, data, kind, geom);
    } catch (const NumericalError& err) {
      throw NumericalError(std::string(err.what()) + " (quotient_flow at t = " +
                           format_double(t) + ")");
    }
  };

  TrajectoryRecord traj;
  dvec x = theta0.flatten();
  for (int k = 0; k <= steps; ++k) {
    const Theta theta = Theta::unflatten(x, m, d);
    const double t = static_cast<double>(k) * step;
    const double value = loss(theta, data, kind);
    if (!std::isfinite(value)) {
      throw NumericalError("quotient_flow: non-finite loss at t = " + format_double(t));
    }
    const dvec k1 = field(x, t);

    traj.times.push_back(t);
    traj.losses.push_back(value);
    traj.grad_norms.push_back(grad_theta(theta, data, kind).norm());
    detail::record_speeds(theta, k1, kQuadraticDegree, traj);
    if (k % record_stride == 0 || k == steps) detail::record_snapshot(theta, k, t, traj);

    if (k == steps) break;
    if (integrator == Integrator::kEuler) {
      x += step * k1;
    } else {
      const dvec k2 = field(x + 0.5 * step * k1, t + 0.5 * step);
      const dvec k3 = field(x + 0.5 * step * k2, t + 0.5 * step);
      const dvec k4 = field(x + step * k3, t + step);
      x += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return traj;
}

/// Least-squares slope of -log(loss - floor) against time over the window.
inline double decay_rate(const std::vector<double>& losses, const std::vector<double>& times,
                         double floor, double t_lo, double t_hi) {
  if (losses.size() != times.size()) {
    throw ValidationError("decay_rate: losses and times must have equal length");
  }
  if (t_lo > t_hi) throw ValidationError("decay_rate: empty window");

  std::vector<double> ts;
  std::vector<double> ys;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (times[i] < t_lo || times[i] > t_hi) continue;
    const double gap = losses[i] - floor;
    if (gap <= 0.0) {
      throw NumericalError("decay_rate: loss at or below floor at t = " + format_double(times[i]));
    }
    ts.push_back(times[i]);
    ys.push_back(-std::log(gap));
  }
  if (ts.size() < 3) {
    throw ValidationError("decay_rate: fewer than 3 points in window (" +
                          std::to_string(ts.size()) + ")");
  }

  const double n = static_cast<double>(ts.size());
  double mean_t = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    mean_t += ts[i];
    mean_y += ys[i];
  }
  mean_t /= n;
  mean_y /= n;
  double cov = 0.0, var = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    cov += (ts[i] - mean_t) * (ys[i] - mean_y);
    var += (ts[i] - mean_t) * (ts[i] - mean_t);
  }
  if (var <= 0.0) throw ValidationError("decay_rate: degenerate time window");
  return cov / var;
}

/// Max over consecutive snapshots of the relative defect between the observed
/// prediction change and the Jacobian applied to the horizontal part of the
/// parameter displacement.
inline double horizontal_evolution_check(const TrajectoryRecord& traj, const Dataset& data,
                                         double p = kQuadraticDegree, double tol = 1e-8) {
  (void)tol;
  if (traj.thetas.size() < 2) {
    throw ValidationError("horizontal_evolution_check: need at least 2 snapshots");
  }
  double max_defect = 0.0;
  for (std::size_t k = 0; k + 1 < traj.thetas.size(); ++k) {
    const Theta& theta = traj.thetas[k];
    const Theta& next = traj.thetas[k + 1];
    const dvec dtheta = next.flatten() - theta.flatten();
    const dvec phi0 = realize(theta, data.X);
    const dvec dphi = realize(next, data.X) - phi0;

    const OrbitTangentBasis tangents = orbit_tangent_basis(theta, p);
    const SpanAndComplement split = orthonormal_span(tangents.vectors);
    const dvec horizontal = dtheta - split.span.columns * (split.span.columns.transpose() * dtheta);
    const dvec predicted = jacobian(theta, data.X) * horizontal;

    // Normalized against the prediction scale (not the per-step change) so the
    // defect contracts second order in the step size.
    const double defect = (dphi - predicted).norm() / std::max(1.0, phi0.norm());
    max_defect = std::max(max_defect, defect);
  }
  return max_defect;
}

/// Effective-curvature certificate assembled from the trajectory tail.
struct ConvergenceCertificate {
  double mu_hat = 0.0;
  double L_hat = 0.0;
  double predicted_rate = 0.0;  // 2 * mu_hat
  double measured_rate = std::numeric_limits<double>::quiet_NaN();
  double loss_floor = 0.0;
  bool degenerate = false;       // trajectory tail numerically at a critical point
  bool rate_consistent = false;  // measured_rate >= predicted_rate * (1 - rate_tol)
  std::string note = "neighborhood assumption unverified";
};

inline ConvergenceCertificate certify_convergence(const TrajectoryRecord& traj,
                                                  const Dataset& data, LossKind kind,
                                                  double neighborhood_fraction = 0.2,
                                                  double rate_tol = 0.1) {
  if (neighborhood_fraction <= 0.0 || neighborhood_fraction > 1.0) {
    throw ValidationError("certify_convergence: neighborhood_fraction must be in (0, 1]");
  }
  if (traj.q_snapshots.empty() || traj.times.size() < 3) {
    throw ValidationError("certify_convergence: trajectory tail too short");
  }

  const std::size_t num_snaps = traj.q_snapshots.size();
  const std::size_t tail_snaps =
      std::max<std::size_t>(1, static_cast<std::size_t>(
                                   std::ceil(neighborhood_fraction * static_cast<double>(num_snaps))));
  ConvergenceCertificate cert;
  cert.mu_hat = std::numeric_limits<double>::infinity();
  cert.L_hat = -std::numeric_limits<double>::infinity();
  for (std::size_t k = num_snaps - tail_snaps; k < num_snaps; ++k) {
    const EffectiveHessian eff = effective_hessian_q(traj.q_snapshots[k], data, kind);
    cert.mu_hat = std::min(cert.mu_hat, eff.summary.lambda_min_eff);
    cert.L_hat = std::max(cert.L_hat, eff.summary.lambda_max_eff);
  }
  cert.predicted_rate = 2.0 * cert.mu_hat;

  const std::size_t num_scalars = traj.times.size();
  std::size_t tail_start = num_scalars - std::max<std::size_t>(
      3, static_cast<std::size_t>(std::ceil(neighborhood_fraction * static_cast<double>(num_scalars))));
  if (tail_start > num_scalars - 3) tail_start = num_scalars - 3;

  double best = traj.losses[tail_start];
  double worst = traj.losses[tail_start];
  for (std::size_t i = tail_start; i < num_scalars; ++i) {
    best = std::min(best, traj.losses[i]);
    worst = std::max(worst, traj.losses[i]);
  }
  if (kind == LossKind::squared) {
    cert.loss_floor = 0.0;
  } else {
    const double guard = std::max(1e-300, 8.0 * std::numeric_limits<double>::epsilon() *
                                              std::max(1.0, best));
    cert.loss_floor = best - guard;
  }

  const double spread = worst - best;
  const bool flat = spread <= 1e-15 * std::max(1.0, worst) || best <= cert.loss_floor;
  if (flat) {
    cert.degenerate = true;
    cert.measured_rate = std::numeric_limits<double>::quiet_NaN();
  } else {
    cert.measured_rate =
        decay_rate(traj.losses, traj.times, cert.loss_floor, traj.times[tail_start],
                   traj.times.back());
    cert.rate_consistent = cert.measured_rate >= cert.predicted_rate * (1.0 - rate_tol) - 1e-12;
  }
  return cert;
}

/// Scalar series of a trajectory as a CSV-ready table.
inline Table trajectory_scalar_table(const TrajectoryRecord& traj) {
  Table table({"time", "loss", "grad_norm", "vertical_speed", "horizontal_speed"});
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    table.add_row({format_double(traj.times[i]), format_double(traj.losses[i]),
                   format_double(traj.grad_norms[i]), format_double(traj.vertical_speed[i]),
                   format_double(traj.horizontal_speed[i])});
  }
  return table;
}

}  // namespace qgeom
