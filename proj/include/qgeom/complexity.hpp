#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qgeom/common.hpp"
#include "qgeom/dynamics.hpp"
#include "qgeom/model.hpp"
#include "qgeom/numerics.hpp"
#include "qgeom/tables.hpp"

namespace qgeom {

/// Parameter-level, matrix-level, and quotient-level complexity measures of a
/// single parameter point.
struct ComplexityReport {
  double theta_norm_sq = 0.0;         // sum_i a_i^2 + ||w_i||^2
  double path_like = 0.0;             // sum_i |a_i| * ||w_i||
  double balanced_energy = 0.0;       // sum_i |a_i| * ||w_i||^2 (gauge-invariant)
  double q_frobenius = 0.0;
  double q_nuclear = 0.0;
  double q_operator = 0.0;
  double stable_rank = 0.0;           // NaN when q_operator = 0
  double quotient_theta_norm = 0.0;   // inf over the orbit of theta_norm_sq
  bool closure_attained = false;      // infimum only reached in the orbit closure
  dvec singular_values;               // descending
};

/// Per-unit orbit infimum of c^{-4} a^2 + c^2 ||w||^2 over c > 0.  Stationarity
/// gives c^6 = 2 a^2 / ||w||^2 and value 3 * 2^{-2/3} |a|^{2/3} ||w||^{4/3}.
inline double per_unit_orbit_infimum(double a, double w_norm) {
  const double abs_a = std::abs(a);
  if (abs_a == 0.0) return 0.0;
  if (w_norm == 0.0) return 0.0;  // approached as c -> infinity, never attained
  return 3.0 * std::pow(2.0, -2.0 / 3.0) * std::pow(abs_a, 2.0 / 3.0) *
         std::pow(w_norm, 4.0 / 3.0);
}

/// Infimum of the squared Euclidean norm over the orbit of theta.  Permutations
/// leave the norm unchanged, so the infimum separates across units.
inline double quotient_theta_norm(const Theta& theta, double p = kQuadraticDegree,
                                  bool* closure_attained = nullptr) {
  theta.validate();
  if (p != 2.0) {
    throw ValidationError("quotient_theta_norm: closed form requires p = 2");
  }
  double total = 0.0;
  bool closure = false;
  for (const Unit& unit : theta.units) {
    const double w_norm = unit.w.norm();
    total += per_unit_orbit_infimum(unit.a, w_norm);
    if (w_norm == 0.0 && unit.a != 0.0) closure = true;
  }
  if (closure_attained != nullptr) *closure_attained = closure;
  return total;
}

inline ComplexityReport complexity_report(const Theta& theta, double p = kQuadraticDegree) {
  theta.validate();
  ComplexityReport report;
  for (const Unit& unit : theta.units) {
    const double w_norm = unit.w.norm();
    report.theta_norm_sq += unit.a * unit.a + w_norm * w_norm;
    report.path_like += std::abs(unit.a) * w_norm;
    report.balanced_energy += std::abs(unit.a) * w_norm * w_norm;
  }

  const SymSpectrum spec = sym_eig(q_matrix(theta).Q);
  dvec sv = spec.eigenvalues.cwiseAbs();
  std::sort(sv.data(), sv.data() + sv.size(), std::greater<double>());
  report.singular_values = sv;
  report.q_frobenius = sv.norm();
  report.q_nuclear = sv.sum();
  report.q_operator = sv.size() > 0 ? sv(0) : 0.0;
  report.stable_rank = report.q_operator > 0.0
                           ? (report.q_frobenius * report.q_frobenius) /
                                 (report.q_operator * report.q_operator)
                           : std::numeric_limits<double>::quiet_NaN();
  report.quotient_theta_norm = quotient_theta_norm(theta, p, &report.closure_attained);
  return report;
}

/// Q-level functionals available to the collinearity diagnostic.
enum class RFunctional { kLoss, kHalfFrobeniusSq, kNuclear, kConstant };

inline std::string r_functional_name(RFunctional r) {
  switch (r) {
    case RFunctional::kLoss: return "loss";
    case RFunctional::kHalfFrobeniusSq: return "half_frobenius_sq";
    case RFunctional::kNuclear: return "nuclear";
    case RFunctional::kConstant: return "constant";
  }
  throw ValidationError("r_functional_name: unknown functional");
}

struct CollinearityPoint {
  double time = 0.0;
  double cosine = 0.0;
  bool defined = false;
};

namespace detail {

/// Gradient of the chosen functional in isometric q-coordinates; sets defined
/// to false where the spectral functional is not differentiable (zero or
/// repeated singular values) or the gradient vanishes.
inline dvec r_gradient_q(const QCoordinates& q, const Dataset& data, LossKind kind,
                         RFunctional r, bool* defined) {
  *defined = true;
  switch (r) {
    case RFunctional::kLoss:
      return grad_q(q, data, kind);
    case RFunctional::kHalfFrobeniusSq:
      return q.q;
    case RFunctional::kConstant:
      *defined = false;
      return dvec::Zero(q.q.size());
    case RFunctional::kNuclear: {
      const SymSpectrum spec = sym_eig(q.Q);
      dvec sv = spec.eigenvalues.cwiseAbs();
      const double scale = std::max(1.0, sv.maxCoeff());
      std::sort(sv.data(), sv.data() + sv.size());
      for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) <= 1e-10 * scale) *defined = false;                 // zero singular value
        if (i > 0 && sv(i) - sv(i - 1) <= 1e-10 * scale) *defined = false;  // repeated
      }
      dmat grad_mat = dmat::Zero(q.Q.rows(), q.Q.cols());
      for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
        const double sign = spec.eigenvalues(i) >= 0.0 ? 1.0 : -1.0;
        grad_mat += sign * spec.eigenvectors.col(i) * spec.eigenvectors.col(i).transpose();
      }
      return vech_s(grad_mat);
    }
  }
  throw ValidationError("r_gradient_q: unknown functional");
}

}  // namespace detail

/// Metric-weighted cosine between the Q-space gradients of R and of the loss
/// at each recorded trajectory snapshot.
inline std::vector<CollinearityPoint> collinearity_diagnostic(const TrajectoryRecord& traj,
                                                              const Dataset& data, LossKind kind,
                                                              RFunctional r_kind) {
  data.validate();
  const dmat A = design_matrix(data.X);
  const double n = static_cast<double>(data.X.rows());
  dmat metric = (A.transpose() * A) / n;
  metric = symmetrized(metric);

  std::vector<CollinearityPoint> out;
  out.reserve(traj.q_snapshots.size());
  for (std::size_t k = 0; k < traj.q_snapshots.size(); ++k) {
    CollinearityPoint point;
    point.time = traj.snapshot_times[k];

    bool defined = true;
    const dvec gr = detail::r_gradient_q(traj.q_snapshots[k], data, kind, r_kind, &defined);
    const dvec gl = grad_q(traj.q_snapshots[k], data, kind);
    const double rr = gr.dot(metric * gr);
    const double ll = gl.dot(metric * gl);
    if (!defined || rr <= 1e-300 || ll <= 1e-300) {
      point.defined = false;
      point.cosine = std::numeric_limits<double>::quiet_NaN();
    } else {
      point.defined = true;
      point.cosine = gr.dot(metric * gl) / std::sqrt(rr * ll);
    }
    out.push_back(point);
  }
  return out;
}

/// Flat CSV projection of a ComplexityReport; singular values joined by ';'.
inline std::vector<std::string> complexity_table_columns() {
  return {"theta_norm_sq", "path_like", "balanced_energy",  "q_frobenius",
          "q_nuclear",     "q_operator", "stable_rank",     "quotient_theta_norm",
          "closure_attained", "sv"};
}

inline std::vector<std::string> complexity_table_row(const ComplexityReport& report) {
  std::string sv;
  for (Eigen::Index i = 0; i < report.singular_values.size(); ++i) {
    if (i > 0) sv += ';';
    sv += format_double(report.singular_values(i));
  }
  return {format_double(report.theta_norm_sq),
          format_double(report.path_like),
          format_double(report.balanced_energy),
          format_double(report.q_frobenius),
          format_double(report.q_nuclear),
          format_double(report.q_operator),
          format_double(report.stable_rank),
          format_double(report.quotient_theta_norm),
          format_int(report.closure_attained ? 1 : 0),
          sv};
}

}  // namespace qgeom
