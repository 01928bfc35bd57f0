#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "qgeom/common.hpp"
#include "qgeom/model.hpp"
#include "qgeom/numerics.hpp"
#include "qgeom/symmetry.hpp"

namespace qgeom {

/// Jacobian of the prediction map theta -> (f_theta(x_1), ..., f_theta(x_n)),
/// an n x m(d+1) matrix in the flattening order of Theta::flatten.
inline dmat jacobian(const Theta& theta, const dmat& X) {
  theta.validate();
  if (X.cols() != theta.d()) {
    throw ValidationError("jacobian: X has " + std::to_string(X.cols()) +
                          " columns but theta has input dimension " + std::to_string(theta.d()));
  }
  return detail::realization_jacobian(theta, X);
}

/// Pointwise split of the parameter space at theta: the vertical subspace
/// spanned by the orbit tangent vectors, its orthogonal complement, the
/// function-induced metric (1/n) J^T J, and the kernel of J.
struct GeometryAtPoint {
  dmat jacobian;           // n x m(d+1)
  SubspaceBasis vertical;  // orthonormal basis of the orbit tangent span
  SubspaceBasis horizontal;// orthonormal complement of the vertical subspace
  dmat metric;             // (1/n) J^T J, m(d+1) x m(d+1)
  SubspaceBasis kernel;    // null space of J at tolerance tol
};

inline GeometryAtPoint decompose(const Theta& theta, const dmat& X, double p = kQuadraticDegree,
                                 double tol = 1e-8) {
  GeometryAtPoint geom;
  geom.jacobian = jacobian(theta, X);
  const double n = static_cast<double>(X.rows());
  geom.metric = (geom.jacobian.transpose() * geom.jacobian) / n;
  geom.metric = symmetrized(geom.metric);

  const OrbitTangentBasis tangents = orbit_tangent_basis(theta, p);
  SpanAndComplement split = orthonormal_span(tangents.vectors);
  geom.vertical = std::move(split.span);
  geom.horizontal = std::move(split.complement);
  geom.kernel = nullspace(geom.jacobian, tol);
  return geom;
}

/// Kernel dimension of the prediction Jacobian at a generic parameter with the
/// given widths and sample count.  The map theta -> Q has generic rank
/// min(m d - m(m-1)/2, d(d+1)/2), and generic samples expose min(n, .) of it.
inline int generic_kernel_dim(int m, int d, int n) {
  if (m <= 0 || d <= 0 || n <= 0) {
    throw ValidationError("generic_kernel_dim: m, d, n must be positive");
  }
  const int full = vech_dim(d);
  const int rank_q = m <= d ? m * d - m * (m - 1) / 2 : full;
  return m * (d + 1) - std::min(n, rank_q);
}

/// Degeneracy flags for a single unit.
struct UnitFlags {
  bool vanishing_a = false;  // |a_i| <= 1e-12
  bool vanishing_w = false;  // ||w_i|| <= 1e-12
  int collision_with = -1;   // smallest j != i with w_i, w_j collinear, or -1

  bool any() const { return vanishing_a || vanishing_w || collision_with >= 0; }
};

struct RegularityReport {
  int kernel_dim = 0;
  int orbit_dim = 0;
  double max_principal_angle = 0.0;  // between kernel and orbit span (radians)
  std::vector<UnitFlags> unit_flags;
  bool is_regular = false;            // kernel coincides with the orbit span
  int expected_kernel_dim = 0;        // generic value for these (m, d, n)
  bool is_generic = false;            // clean units and generic-size kernel

  bool any_unit_flag() const {
    return std::any_of(unit_flags.begin(), unit_flags.end(),
                       [](const UnitFlags& f) { return f.any(); });
  }
};

inline RegularityReport regularity_check(const Theta& theta, const dmat& X,
                                         double p = kQuadraticDegree, double tol = 1e-8,
                                         double angle_tol = 1e-6) {
  const GeometryAtPoint geom = decompose(theta, X, p, tol);

  RegularityReport report;
  report.kernel_dim = geom.kernel.dim;
  report.orbit_dim = geom.vertical.dim;
  report.expected_kernel_dim =
      generic_kernel_dim(theta.m(), theta.d(), static_cast<int>(X.rows()));

  report.max_principal_angle = 0.0;
  if (geom.kernel.dim > 0 && geom.vertical.dim > 0) {
    const dvec angles = principal_angles(geom.kernel, geom.vertical);
    if (angles.size() > 0) report.max_principal_angle = angles.maxCoeff();
  }

  report.unit_flags.resize(theta.m());
  constexpr double kTiny = 1e-12;
  constexpr double kCollinear = 1.0 - 1e-8;
  for (int i = 0; i < theta.m(); ++i) {
    UnitFlags& flags = report.unit_flags[static_cast<std::size_t>(i)];
    flags.vanishing_a = std::abs(theta.units[static_cast<std::size_t>(i)].a) <= kTiny;
    flags.vanishing_w = theta.units[static_cast<std::size_t>(i)].w.norm() <= kTiny;
  }
  for (int i = 0; i < theta.m(); ++i) {
    for (int j = i + 1; j < theta.m(); ++j) {
      const dvec& wi = theta.units[static_cast<std::size_t>(i)].w;
      const dvec& wj = theta.units[static_cast<std::size_t>(j)].w;
      const double ni = wi.norm();
      const double nj = wj.norm();
      if (ni <= kTiny || nj <= kTiny) continue;
      const double cosine = std::abs(wi.dot(wj)) / (ni * nj);
      if (cosine > kCollinear) {
        UnitFlags& fi = report.unit_flags[static_cast<std::size_t>(i)];
        UnitFlags& fj = report.unit_flags[static_cast<std::size_t>(j)];
        if (fi.collision_with < 0) fi.collision_with = j;
        if (fj.collision_with < 0) fj.collision_with = i;
      }
    }
  }

  const bool aligned = report.max_principal_angle <= angle_tol;
  report.is_regular = !report.any_unit_flag() && aligned &&
                      report.kernel_dim == report.orbit_dim;
  report.is_generic = !report.any_unit_flag() && aligned &&
                      report.orbit_dim == theta.m() &&
                      report.kernel_dim == report.expected_kernel_dim;
  return report;
}

/// Horizontal representative of the gradient: the minimal-norm solution u of
/// G u = grad L(theta) within the horizontal subspace, computed through the
/// eigendecomposition of B^T G B with small eigenvalues truncated.  The
/// truncation is consistent exactly when grad L lies in the range of G, which
/// holds for every loss gradient (grad L = J^T r); the residual check below
/// turns any violation into an error instead of a silently wrong direction.
inline dvec horizontal_lift_gradient(const Theta& theta, const Dataset& data, LossKind kind,
                                     const GeometryAtPoint& geom) {
  const dvec grad = grad_theta(theta, data, kind);
  const dmat& B = geom.horizontal.columns;
  if (B.cols() == 0) {
    throw NumericalError("horizontal_lift_gradient: horizontal subspace is empty");
  }

  dmat reduced = B.transpose() * geom.metric * B;
  reduced = symmetrized(reduced);
  const dvec rhs = B.transpose() * grad;

  const SymSpectrum spec = sym_eig(reduced);
  const double lambda_max = spec.eigenvalues(spec.eigenvalues.size() - 1);
  const double lambda_min = spec.eigenvalues(0);
  const double grad_scale = std::max(1.0, grad.norm());
  if (lambda_max <= 0.0) {
    if (rhs.norm() <= 1e-10 * grad_scale) return dvec::Zero(B.rows());
    throw NumericalError(
        "horizontal_lift_gradient: reduced metric vanishes (lambda_min = " +
        std::to_string(lambda_min) + ", lambda_max = " + std::to_string(lambda_max) +
        ") but the gradient does not");
  }

  const double threshold = 1e-12 * lambda_max;
  dvec z = dvec::Zero(rhs.size());
  for (Eigen::Index k = 0; k < spec.eigenvalues.size(); ++k) {
    const double lambda = spec.eigenvalues(k);
    if (lambda <= threshold) continue;
    const dvec v = spec.eigenvectors.col(k);
    z += (v.dot(rhs) / lambda) * v;
  }

  // Dropped eigendirections carry rhs components of size up to
  // sqrt(threshold / lambda_max) * ||rhs|| for a consistent system, so the
  // inconsistency guard must sit above sqrt(1e-12) = 1e-6 relative.
  const double residual = (reduced * z - rhs).norm();
  const double scale = std::max({rhs.norm(), lambda_max * z.norm(), 1e-300});
  if (residual > 1e-5 * scale) {
    throw NumericalError(
        "horizontal_lift_gradient: inconsistent normal equations (residual " +
        std::to_string(residual) + ", scale " + std::to_string(scale) +
        ", lambda_min " + std::to_string(lambda_min) + ")");
  }
  return B * z;
}

/// Generalized spectrum of the pencil (H, G) restricted to the positive
/// eigenspace of G (eigenvalues above rel_tol * lambda_max(G)).  Eigenvectors
/// are returned in the original coordinates and are G-orthonormal on that
/// subspace.
inline SymSpectrum restricted_generalized_spectrum(const dmat& H, const dmat& G,
                                                   double rel_tol = 1e-10) {
  detail::require_symmetric(H, "restricted_generalized_spectrum (H)");
  detail::require_symmetric(G, "restricted_generalized_spectrum (G)");
  if (H.rows() != G.rows()) {
    throw ValidationError("restricted_generalized_spectrum: dimension mismatch");
  }
  const SymSpectrum gspec = sym_eig(G);
  const double lambda_max = gspec.eigenvalues(gspec.eigenvalues.size() - 1);
  if (lambda_max <= 0.0) {
    throw NumericalError("restricted_generalized_spectrum: metric is numerically zero");
  }
  const double threshold = rel_tol * lambda_max;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index k = 0; k < gspec.eigenvalues.size(); ++k) {
    if (gspec.eigenvalues(k) > threshold) kept.push_back(k);
  }
  dmat V(G.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) V.col(static_cast<Eigen::Index>(j)) = gspec.eigenvectors.col(kept[j]);

  dmat Hr = V.transpose() * H * V;
  Hr = symmetrized(Hr);
  dmat Gr = V.transpose() * G * V;
  Gr = symmetrized(Gr);
  SymSpectrum out = gen_sym_eig(Hr, Gr);
  out.eigenvectors = V * out.eigenvectors;
  detail::fix_eigenvector_signs(out.eigenvectors);
  return out;
}

/// Scalar summary of an effective (metric-weighted) spectrum.
struct CurvatureSummary {
  double lambda_min_eff = 0.0;
  double lambda_max_eff = 0.0;
  double kappa_eff = std::numeric_limits<double>::infinity();
  bool kappa_finite = false;
  double trace = 0.0;      // trace of the raw Hessian
  double frobenius = 0.0;  // Frobenius norm of the raw Hessian
  dvec spectrum;           // effective eigenvalues, ascending
};

inline CurvatureSummary summarize_spectrum(const dvec& spectrum, const dmat& raw_hess) {
  if (spectrum.size() == 0) {
    throw NumericalError("summarize_spectrum: empty spectrum");
  }
  CurvatureSummary summary;
  summary.spectrum = spectrum;
  summary.lambda_min_eff = spectrum(0);
  summary.lambda_max_eff = spectrum(spectrum.size() - 1);
  if (summary.lambda_min_eff > 0.0) {
    summary.kappa_eff = summary.lambda_max_eff / summary.lambda_min_eff;
    summary.kappa_finite = true;
  }
  summary.trace = raw_hess.trace();
  summary.frobenius = raw_hess.norm();
  return summary;
}

/// Hessian of the loss in the Q-chart together with the chart metric
/// (1/n) A^T A and the generalized spectrum of the pair on the metric's
/// positive eigenspace.
struct EffectiveHessian {
  dmat hess;      // Hessian of the loss as a function of q
  dmat metric_q;  // (1/n) A^T A
  SymSpectrum pencil;  // restricted generalized spectrum with eigenvectors
  CurvatureSummary summary;
};

inline EffectiveHessian effective_hessian_q(const QCoordinates& q, const Dataset& data,
                                            LossKind kind) {
  EffectiveHessian out;
  out.hess = hess_q(q, data, kind);
  const dmat A = design_matrix(data.X);
  const double n = static_cast<double>(data.X.rows());
  out.metric_q = (A.transpose() * A) / n;
  out.metric_q = symmetrized(out.metric_q);
  out.pencil = restricted_generalized_spectrum(out.hess, out.metric_q);
  out.summary = summarize_spectrum(out.pencil.eigenvalues, out.hess);
  return out;
}

/// Chart for the unit-sphere gauge slice { ||w_i|| = 1 }: per unit, an
/// orthonormal frame of the tangent space of the sphere at w_i, built by
/// Gram-Schmidt against the canonical basis in index order.
struct SliceChart {
  std::vector<dmat> frames;  // m matrices, each d x (d-1)
  int m = 0;
  int d = 0;

  int dim() const { return m * d; }  // a_i plus d-1 sphere coordinates per unit
};

namespace detail {

inline void require_on_slice(const Theta& theta) {
  for (int i = 0; i < theta.m(); ++i) {
    const double norm = theta.units[static_cast<std::size_t>(i)].w.norm();
    if (std::abs(norm - 1.0) > 1e-10) {
      throw ValidationError("gauge slice: unit " + std::to_string(i) +
                            " has ||w|| = " + std::to_string(norm) + ", expected 1");
    }
  }
}

}  // namespace detail

inline SliceChart gauge_slice_chart(const Theta& theta) {
  theta.validate();
  detail::require_on_slice(theta);
  SliceChart chart;
  chart.m = theta.m();
  chart.d = theta.d();
  if (chart.d < 2) {
    throw ValidationError("gauge_slice_chart: input dimension must be at least 2");
  }
  chart.frames.reserve(static_cast<std::size_t>(chart.m));
  for (int i = 0; i < chart.m; ++i) {
    const dvec& w = theta.units[static_cast<std::size_t>(i)].w;
    dmat frame(chart.d, chart.d - 1);
    int filled = 0;
    for (int j = 0; j < chart.d && filled < chart.d - 1; ++j) {
      dvec v = dvec::Zero(chart.d);
      v(j) = 1.0;
      v -= w * w.dot(v);
      for (int c = 0; c < filled; ++c) v -= frame.col(c) * frame.col(c).dot(v);
      const double norm = v.norm();
      if (norm > 1e-8) {
        frame.col(filled) = v / norm;
        ++filled;
      }
    }
    if (filled != chart.d - 1) {
      throw NumericalError("gauge_slice_chart: degenerate frame at unit " + std::to_string(i));
    }
    chart.frames.push_back(std::move(frame));
  }
  return chart;
}

/// Parameter on the slice at chart coordinates z (unit-major: a-offset, then
/// the d-1 sphere coordinates).  z = 0 gives back the base point.
inline Theta slice_point(const Theta& base, const SliceChart& chart, const dvec& z) {
  if (z.size() != chart.dim()) {
    throw ValidationError("slice_point: coordinate vector has wrong size");
  }
  Theta theta = base;
  for (int i = 0; i < chart.m; ++i) {
    const int offset = i * chart.d;
    theta.units[static_cast<std::size_t>(i)].a += z(offset);
    const dvec t = z.segment(offset + 1, chart.d - 1);
    const dvec v = base.units[static_cast<std::size_t>(i)].w +
                   chart.frames[static_cast<std::size_t>(i)] * t;
    const double norm = v.norm();
    if (norm <= 1e-12) {
      throw NumericalError("slice_point: sphere retraction collapsed at unit " +
                           std::to_string(i));
    }
    theta.units[static_cast<std::size_t>(i)].w = v / norm;
  }
  return theta;
}

/// Jacobian of the prediction map in slice coordinates, n x (m d).
inline dmat slice_jacobian(const Theta& base, const SliceChart& chart, const dmat& X,
                           const dvec& z) {
  const Theta theta = slice_point(base, chart, z);
  const int n = static_cast<int>(X.rows());
  dmat J(n, chart.dim());
  for (int i = 0; i < chart.m; ++i) {
    const int offset = i * chart.d;
    const double a = theta.units[static_cast<std::size_t>(i)].a;
    const dvec& what = theta.units[static_cast<std::size_t>(i)].w;
    const dvec t = z.segment(offset + 1, chart.d - 1);
    const dvec v = base.units[static_cast<std::size_t>(i)].w +
                   chart.frames[static_cast<std::size_t>(i)] * t;
    const double vnorm = v.norm();
    // d w / d t_l = (I - w w^T) T_l / ||v||
    dmat dw = chart.frames[static_cast<std::size_t>(i)];
    dw -= what * (what.transpose() * dw);
    dw /= vnorm;

    const dvec s = X * what;                 // n
    J.col(offset) = s.array().square();      // d f / d a_i
    const dmat xs = X.array().colwise() * (2.0 * a * s.array());  // n x d
    J.block(0, offset + 1, n, chart.d - 1) = xs * dw;
  }
  return J;
}

inline dmat slice_metric(const Theta& base, const SliceChart& chart, const dmat& X,
                         const dvec& z) {
  const dmat J = slice_jacobian(base, chart, X, z);
  const double n = static_cast<double>(X.rows());
  dmat g = (J.transpose() * J) / n;
  return 0.5 * (g + g.transpose());
}

inline dvec slice_gradient(const Theta& base, const SliceChart& chart, const Dataset& data,
                           LossKind kind, const dvec& z) {
  const Theta theta = slice_point(base, chart, z);
  const dvec pred = realize(theta, data.X);
  const auto outer = qgeom::detail::outer_loss(pred, data, kind);
  return slice_jacobian(base, chart, data.X, z).transpose() * outer.first;
}

/// Christoffel symbols of a metric field at z0 by central differences:
/// Gamma[k](i, j) = 1/2 g^{kl} (d_i g_{jl} + d_j g_{il} - d_l g_{ij}),
/// with g^{-1} taken on the positive eigenspace of g(z0).
inline std::vector<dmat> christoffel_fd(const std::function<dmat(const dvec&)>& metric_at,
                                        const dvec& z0, double h = 1e-4) {
  if (h <= 0.0) throw ValidationError("christoffel_fd: step must be positive");
  const int s = static_cast<int>(z0.size());
  std::vector<dmat> dg;
  dg.reserve(static_cast<std::size_t>(s));
  for (int l = 0; l < s; ++l) {
    dvec zp = z0, zm = z0;
    zp(l) += h;
    zm(l) -= h;
    dg.push_back((metric_at(zp) - metric_at(zm)) / (2.0 * h));
  }

  const SymSpectrum spec = sym_eig(metric_at(z0));
  const double lambda_max = spec.eigenvalues(spec.eigenvalues.size() - 1);
  if (lambda_max <= 0.0) {
    throw NumericalError("christoffel_fd: metric is numerically zero");
  }
  const double threshold = 1e-10 * lambda_max;
  dmat pinv = dmat::Zero(s, s);
  for (Eigen::Index k = 0; k < spec.eigenvalues.size(); ++k) {
    if (spec.eigenvalues(k) <= threshold) continue;
    pinv += spec.eigenvectors.col(k) * spec.eigenvectors.col(k).transpose() / spec.eigenvalues(k);
  }

  std::vector<dmat> gamma(static_cast<std::size_t>(s), dmat::Zero(s, s));
  for (int k = 0; k < s; ++k) {
    for (int i = 0; i < s; ++i) {
      for (int j = i; j < s; ++j) {
        double sum = 0.0;
        for (int l = 0; l < s; ++l) {
          sum += pinv(k, l) * (dg[static_cast<std::size_t>(i)](j, l) +
                               dg[static_cast<std::size_t>(j)](i, l) -
                               dg[static_cast<std::size_t>(l)](i, j));
        }
        gamma[static_cast<std::size_t>(k)](i, j) = 0.5 * sum;
        gamma[static_cast<std::size_t>(k)](j, i) = 0.5 * sum;
      }
    }
  }
  return gamma;
}

/// Covariant Hessian of the loss restricted to the gauge slice:
/// Hess_ij = d_i d_j L - Gamma^k_ij d_k L, with second derivatives by central
/// differences of the analytic slice gradient and Christoffel symbols from the
/// slice metric field.
struct ReducedHessianGauge {
  dmat hessian;   // covariant Hessian in slice coordinates, m d x m d
  dmat metric;    // slice metric at the base point
  dvec gradient;  // slice gradient at the base point
};

inline ReducedHessianGauge reduced_hessian_gauge(const Theta& theta, const Dataset& data,
                                                 LossKind kind, const SliceChart& chart,
                                                 double h = 1e-4) {
  theta.validate();
  detail::require_on_slice(theta);
  if (chart.m != theta.m() || chart.d != theta.d()) {
    throw ValidationError("reduced_hessian_gauge: chart does not match theta");
  }
  if (h <= 0.0) throw ValidationError("reduced_hessian_gauge: step must be positive");

  const int s = chart.dim();
  const dvec z0 = dvec::Zero(s);

  ReducedHessianGauge out;
  out.gradient = slice_gradient(theta, chart, data, kind, z0);
  out.metric = slice_metric(theta, chart, data.X, z0);

  dmat plain(s, s);
  for (int j = 0; j < s; ++j) {
    dvec zp = z0, zm = z0;
    zp(j) += h;
    zm(j) -= h;
    plain.col(j) = (slice_gradient(theta, chart, data, kind, zp) -
                    slice_gradient(theta, chart, data, kind, zm)) /
                   (2.0 * h);
  }
  plain = symmetrized(plain);

  const std::vector<dmat> gamma = christoffel_fd(
      [&](const dvec& z) { return slice_metric(theta, chart, data.X, z); }, z0, h);
  dmat correction = dmat::Zero(s, s);
  for (int k = 0; k < s; ++k) {
    correction += out.gradient(k) * gamma[static_cast<std::size_t>(k)];
  }

  out.hessian = plain - correction;
  out.hessian = symmetrized(out.hessian);
  return out;
}

}  // namespace qgeom
