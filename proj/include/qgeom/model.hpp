#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qgeom/common.hpp"

// The quadratic-activation shallow network
//
//     f_theta(x) = sum_i a_i (w_i^T x)^2,   theta = ((a_1,w_1),...,(a_m,w_m)),
//
// its finite-sample realization map Phi_X(theta) = (f_theta(x_k))_k, the
// Q-chart Q(theta) = sum_i a_i w_i w_i^T with isometric half-vectorization,
// squared and logistic losses, and exact analytic first and second
// derivatives in both theta-coordinates and Q-coordinates.
//
// Conventions fixed here and relied on everywhere else:
//   * flattening order (a_1, w_1, a_2, w_2, ...), ambient dimension m(d+1);
//   * squared loss (1/(2n)) sum_k (f - y)^2, logistic (1/n) sum_k
//     log(1 + exp(-y_k f_k)) — normalizations chosen so that the squared-loss
//     Q-Hessian coincides with the pullback metric (1/n) A^T A;
//   * vech_s walks the lower triangle column by column with sqrt(2)-weighted
//     off-diagonals, so <vech_s(P), vech_s(Q)> = <P, Q>_Frobenius.

namespace qgeom {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

enum class Task { regression, classification };
enum class LossKind { squared, logistic };

/// The activation sigma(t) = t^2, positively p-homogeneous with p = 2.
/// The degree is carried as data so orbit-tangent formulas stay written for
/// general p.
struct Activation {
  double p = 2.0;
  double operator()(double t) const { return t * t; }
};

inline constexpr double kQuadraticDegree = 2.0;

struct Unit {
  double a = 0.0;
  dvec w;
};

struct Theta {
  std::vector<Unit> units;

  int m() const { return static_cast<int>(units.size()); }
  int d() const { return units.empty() ? 0 : static_cast<int>(units[0].w.size()); }
  int dim() const { return m() * (d() + 1); }

  void validate() const {
    if (units.empty()) throw ValidationError("Theta: need at least one unit");
    const int d0 = static_cast<int>(units[0].w.size());
    if (d0 < 1) throw ValidationError("Theta: need d >= 1");
    for (const Unit& u : units) {
      if (static_cast<int>(u.w.size()) != d0) {
        throw ValidationError("Theta: inconsistent weight dimensions");
      }
      if (!std::isfinite(u.a) || !u.w.allFinite()) {
        throw ValidationError("Theta: non-finite entry");
      }
    }
  }

  /// Flattened coordinates (a_1, w_1, a_2, w_2, ...).
  dvec flatten() const {
    const int dd = d();
    dvec v(dim());
    for (int i = 0; i < m(); ++i) {
      v(i * (dd + 1)) = units[i].a;
      v.segment(i * (dd + 1) + 1, dd) = units[i].w;
    }
    return v;
  }

  static Theta unflatten(const dvec& v, int m, int d) {
    if (v.size() != static_cast<Eigen::Index>(m) * (d + 1)) {
      throw ValidationError("Theta::unflatten: size mismatch");
    }
    Theta theta;
    theta.units.resize(m);
    for (int i = 0; i < m; ++i) {
      theta.units[i].a = v(i * (d + 1));
      theta.units[i].w = v.segment(i * (d + 1) + 1, d);
    }
    return theta;
  }
};

struct Dataset {
  dmat X;  // n x d inputs
  dvec y;  // n targets (regression) or +-1 labels (classification)
  Task task = Task::regression;

  int n() const { return static_cast<int>(X.rows()); }
  int d() const { return static_cast<int>(X.cols()); }

  void validate() const {
    if (X.rows() < 1 || X.cols() < 1) {
      throw ValidationError("Dataset: need n >= 1 and d >= 1");
    }
    if (y.size() != X.rows()) {
      throw ValidationError("Dataset: X and y row counts differ");
    }
    if (!X.allFinite() || !y.allFinite()) {
      throw ValidationError("Dataset: non-finite entry");
    }
    if (task == Task::classification) {
      for (Eigen::Index k = 0; k < y.size(); ++k) {
        if (y(k) != 1.0 && y(k) != -1.0) {
          throw ValidationError("Dataset: classification labels must be +-1");
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Isometric half-vectorization
// ---------------------------------------------------------------------------

inline int vech_dim(int d) { return d * (d + 1) / 2; }

/// vech_s: symmetric d x d -> R^{d(d+1)/2}, lower triangle column by column,
/// off-diagonal entries weighted by sqrt(2) so the map is a linear isometry
/// for the Frobenius inner product.
inline dvec vech_s(const dmat& Q) {
  if (Q.rows() != Q.cols()) throw ValidationError("vech_s: matrix not square");
  const int d = static_cast<int>(Q.rows());
  const double root2 = std::sqrt(2.0);
  dvec q(vech_dim(d));
  int k = 0;
  for (int c = 0; c < d; ++c) {
    for (int r = c; r < d; ++r) {
      q(k++) = (r == c) ? Q(r, c) : root2 * 0.5 * (Q(r, c) + Q(c, r));
    }
  }
  return q;
}

inline dmat unvech_s(const dvec& q) {
  // Invert k = d(d+1)/2 for the side length.
  const int D = static_cast<int>(q.size());
  const int d = static_cast<int>(std::lround((std::sqrt(8.0 * D + 1.0) - 1.0) / 2.0));
  if (vech_dim(d) != D) throw ValidationError("unvech_s: length is not d(d+1)/2");
  const double inv_root2 = 1.0 / std::sqrt(2.0);
  dmat Q(d, d);
  int k = 0;
  for (int c = 0; c < d; ++c) {
    for (int r = c; r < d; ++r) {
      const double v = q(k++);
      if (r == c) {
        Q(r, c) = v;
      } else {
        Q(r, c) = inv_root2 * v;
        Q(c, r) = inv_root2 * v;
      }
    }
  }
  return Q;
}

/// A symmetric matrix together with its isometric half-vectorization.
struct QCoordinates {
  dmat Q;
  dvec q;

  int d() const { return static_cast<int>(Q.rows()); }

  static QCoordinates from_matrix(const dmat& Q) { return {Q, vech_s(Q)}; }
  static QCoordinates from_vech(const dvec& q) { return {unvech_s(q), q}; }
};

// ---------------------------------------------------------------------------
// Realization and the Q-chart
// ---------------------------------------------------------------------------

/// Phi_X(theta): component k is sum_i a_i (w_i^T x_k)^2.
inline dvec realize(const Theta& theta, const dmat& X) {
  theta.validate();
  if (static_cast<int>(X.cols()) != theta.d()) {
    throw ValidationError("realize: theta and X disagree on d");
  }
  dvec out = dvec::Zero(X.rows());
  for (const Unit& u : theta.units) {
    const dvec s = X * u.w;  // (w^T x_k)_k
    out += u.a * s.cwiseProduct(s);
  }
  return out;
}

/// Q(theta) = sum_i a_i w_i w_i^T; the predictor depends on theta only
/// through this matrix: f_theta(x) = x^T Q x.
inline QCoordinates q_matrix(const Theta& theta) {
  theta.validate();
  const int d = theta.d();
  dmat Q = dmat::Zero(d, d);
  for (const Unit& u : theta.units) {
    Q.noalias() += u.a * (u.w * u.w.transpose());
  }
  return QCoordinates::from_matrix(Q);
}

/// Row k is vech_s(x_k x_k^T), so predictions are linear in q:
/// Phi = A q with A = design_matrix(X).
inline dmat design_matrix(const dmat& X) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  dmat A(n, vech_dim(d));
  for (int k = 0; k < n; ++k) {
    const dvec x = X.row(k).transpose();
    A.row(k) = vech_s(x * x.transpose()).transpose();
  }
  return A;
}

/// Jacobian of theta -> vech_s(Q(theta)): column for a_i is vech_s(w_i w_i^T),
/// column for w_{i,j} is a_i vech_s(e_j w_i^T + w_i e_j^T).
inline dmat q_jacobian(const Theta& theta) {
  theta.validate();
  const int d = theta.d();
  const int m = theta.m();
  dmat JQ(vech_dim(d), theta.dim());
  for (int i = 0; i < m; ++i) {
    const Unit& u = theta.units[i];
    const int base = i * (d + 1);
    JQ.col(base) = vech_s(u.w * u.w.transpose());
    for (int j = 0; j < d; ++j) {
      dmat E = dmat::Zero(d, d);
      E.row(j) = u.w.transpose();
      E.col(j) += u.w;
      JQ.col(base + 1 + j) = u.a * vech_s(E);
    }
  }
  return JQ;
}

// ---------------------------------------------------------------------------
// Losses and derivatives
// ---------------------------------------------------------------------------

namespace detail {

inline double softplus(double t) {
  // log(1 + e^t) without overflow on either tail.
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline void require_loss_labels(const Dataset& data, LossKind kind) {
  data.validate();
  if (kind == LossKind::logistic) {
    for (Eigen::Index k = 0; k < data.y.size(); ++k) {
      if (data.y(k) != 1.0 && data.y(k) != -1.0) {
        throw ValidationError("logistic loss requires +-1 labels");
      }
    }
  }
}

/// Value and per-sample first/second derivatives of the outer loss
/// Ltilde(z) (normalizations (1/(2n)) squared, (1/n) logistic baked in).
struct OuterLoss {
  double value = 0.0;
  dvec first;   // dLtilde/dz_k
  dvec second;  // d^2 Ltilde/dz_k^2
};

inline OuterLoss outer_loss(const dvec& z, const Dataset& data, LossKind kind) {
  const double inv_n = 1.0 / static_cast<double>(data.n());
  OuterLoss out;
  out.first.resize(z.size());
  out.second.resize(z.size());
  if (kind == LossKind::squared) {
    for (Eigen::Index k = 0; k < z.size(); ++k) {
      const double r = z(k) - data.y(k);
      out.value += 0.5 * inv_n * r * r;
      out.first(k) = inv_n * r;
      out.second(k) = inv_n;
    }
  } else {
    for (Eigen::Index k = 0; k < z.size(); ++k) {
      const double margin = data.y(k) * z(k);
      out.value += inv_n * softplus(-margin);
      const double s = sigmoid(margin);
      out.first(k) = -inv_n * data.y(k) * (1.0 - s);
      out.second(k) = inv_n * s * (1.0 - s);
    }
  }
  return out;
}

/// Rows of DPhi_X(theta): a-entries (w_i^T x_k)^2, w-entries
/// 2 a_i (w_i^T x_k) x_k, in flattening order.
inline dmat realization_jacobian(const Theta& theta, const dmat& X) {
  const int n = static_cast<int>(X.rows());
  const int d = theta.d();
  dmat J(n, theta.dim());
  for (int i = 0; i < theta.m(); ++i) {
    const Unit& u = theta.units[i];
    const int base = i * (d + 1);
    const dvec s = X * u.w;
    J.col(base) = s.cwiseProduct(s);
    for (int k = 0; k < n; ++k) {
      J.block(k, base + 1, 1, d) = 2.0 * u.a * s(k) * X.row(k);
    }
  }
  return J;
}

}  // namespace detail

inline double loss(const Theta& theta, const Dataset& data, LossKind kind) {
  detail::require_loss_labels(data, kind);
  const dvec z = realize(theta, data.X);
  return detail::outer_loss(z, data, kind).value;
}

inline double loss_q(const QCoordinates& q, const Dataset& data, LossKind kind) {
  detail::require_loss_labels(data, kind);
  if (q.d() != data.d()) throw ValidationError("loss_q: dimension mismatch");
  const dvec z = design_matrix(data.X) * q.q;
  return detail::outer_loss(z, data, kind).value;
}

/// Exact gradient of the composite loss in flattened theta-coordinates.
inline dvec grad_theta(const Theta& theta, const Dataset& data, LossKind kind) {
  detail::require_loss_labels(data, kind);
  theta.validate();
  if (theta.d() != data.d()) throw ValidationError("grad_theta: dimension mismatch");
  const dvec z = realize(theta, data.X);
  const auto outer = detail::outer_loss(z, data, kind);
  const dmat J = detail::realization_jacobian(theta, data.X);
  return J.transpose() * outer.first;
}

/// Exact Hessian: J^T diag(Ltilde'') J plus the curvature of Phi itself,
/// sum_k Ltilde'_k D^2 f(x_k).  The second term is block-diagonal per unit
/// with blocks [[0, 2 s_k x_k^T], [2 s_k x_k, 2 a_i x_k x_k^T]]; cross-unit
/// coupling enters only through the first (Gauss-Newton) term.
inline dmat hess_theta(const Theta& theta, const Dataset& data, LossKind kind) {
  detail::require_loss_labels(data, kind);
  theta.validate();
  if (theta.d() != data.d()) throw ValidationError("hess_theta: dimension mismatch");
  const int d = theta.d();
  const int n = data.n();
  const dvec z = realize(theta, data.X);
  const auto outer = detail::outer_loss(z, data, kind);
  const dmat J = detail::realization_jacobian(theta, data.X);
  dmat H = J.transpose() * outer.second.asDiagonal() * J;
  for (int i = 0; i < theta.m(); ++i) {
    const Unit& u = theta.units[i];
    const int base = i * (d + 1);
    for (int k = 0; k < n; ++k) {
      const dvec x = data.X.row(k).transpose();
      const double s = u.w.dot(x);
      const double c = outer.first(k);
      H.block(base + 1, base + 1, d, d) += c * 2.0 * u.a * (x * x.transpose());
      H.block(base + 1, base, d, 1) += c * 2.0 * s * x;
      H.block(base, base + 1, 1, d) += c * 2.0 * s * x.transpose();
    }
  }
  return 0.5 * (H + H.transpose());
}

/// Gradient in Q-coordinates; predictions are linear in q, so this is
/// A^T Ltilde'(A q).
inline dvec grad_q(const QCoordinates& q, const Dataset& data, LossKind kind) {
  detail::require_loss_labels(data, kind);
  if (q.d() != data.d()) throw ValidationError("grad_q: dimension mismatch");
  const dmat A = design_matrix(data.X);
  const auto outer = detail::outer_loss(A * q.q, data, kind);
  return A.transpose() * outer.first;
}

/// Hessian in Q-coordinates: A^T diag(Ltilde'') A — exactly (1/n) A^T A for
/// squared loss (independent of q) and (1/n) A^T diag(s(1-s)) A for logistic.
inline dmat hess_q(const QCoordinates& q, const Dataset& data, LossKind kind) {
  detail::require_loss_labels(data, kind);
  if (q.d() != data.d()) throw ValidationError("hess_q: dimension mismatch");
  const dmat A = design_matrix(data.X);
  const auto outer = detail::outer_loss(A * q.q, data, kind);
  dmat H = A.transpose() * outer.second.asDiagonal() * A;
  return 0.5 * (H + H.transpose());
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

using json = nlohmann::ordered_json;

inline json theta_to_json(const Theta& theta) {
  theta.validate();
  json units = json::array();
  for (const Unit& u : theta.units) {
    json w = json::array();
    for (Eigen::Index j = 0; j < u.w.size(); ++j) w.push_back(u.w(j));
    units.push_back(json{{"a", u.a}, {"w", std::move(w)}});
  }
  return json{{"m", theta.m()}, {"d", theta.d()}, {"units", std::move(units)}};
}

inline Theta theta_from_json(const json& j) {
  try {
    const int m = j.at("m").get<int>();
    const int d = j.at("d").get<int>();
    Theta theta;
    const json& units = j.at("units");
    if (static_cast<int>(units.size()) != m) {
      throw ValidationError("theta_from_json: unit count differs from m");
    }
    for (const json& ju : units) {
      Unit u;
      u.a = ju.at("a").get<double>();
      const json& w = ju.at("w");
      if (static_cast<int>(w.size()) != d) {
        throw ValidationError("theta_from_json: weight length differs from d");
      }
      u.w.resize(d);
      for (int k = 0; k < d; ++k) u.w(k) = w.at(k).get<double>();
      theta.units.push_back(std::move(u));
    }
    theta.validate();
    return theta;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("theta_from_json: malformed input: ") + e.what());
  }
}

inline json dataset_to_json(const Dataset& data) {
  data.validate();
  json X = json::array();
  for (int k = 0; k < data.n(); ++k) {
    json row = json::array();
    for (int j = 0; j < data.d(); ++j) row.push_back(data.X(k, j));
    X.push_back(std::move(row));
  }
  json y = json::array();
  for (Eigen::Index k = 0; k < data.y.size(); ++k) y.push_back(data.y(k));
  return json{{"X", std::move(X)},
              {"y", std::move(y)},
              {"task", data.task == Task::regression ? "regression" : "classification"}};
}

inline Dataset dataset_from_json(const json& j) {
  try {
    const json& X = j.at("X");
    const int n = static_cast<int>(X.size());
    if (n < 1) throw ValidationError("dataset_from_json: empty X");
    const int d = static_cast<int>(X.at(0).size());
    Dataset data;
    data.X.resize(n, d);
    for (int k = 0; k < n; ++k) {
      const json& row = X.at(k);
      if (static_cast<int>(row.size()) != d) {
        throw ValidationError("dataset_from_json: ragged X");
      }
      for (int c = 0; c < d; ++c) data.X(k, c) = row.at(c).get<double>();
    }
    const json& y = j.at("y");
    if (static_cast<int>(y.size()) != n) {
      throw ValidationError("dataset_from_json: X and y row counts differ");
    }
    data.y.resize(n);
    for (int k = 0; k < n; ++k) data.y(k) = y.at(k).get<double>();
    const std::string task = j.at("task").get<std::string>();
    if (task == "regression") {
      data.task = Task::regression;
    } else if (task == "classification") {
      data.task = Task::classification;
    } else {
      throw ValidationError("dataset_from_json: unknown task '" + task + "'");
    }
    data.validate();
    return data;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("dataset_from_json: malformed input: ") + e.what());
  }
}

}  // namespace qgeom
