#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "qgeom/common.hpp"

// Dense small-matrix kernels shared by every other header: symmetric and
// generalized symmetric eigendecompositions, SVD-based nullspaces, principal
// angles between subspaces, central finite-difference oracles, and 1-D
// golden-section minimization.  Everything is double precision and
// deterministic: eigenvectors carry a fixed sign convention so repeated runs
// produce identical output bytes.

namespace qgeom {

// ---------------------------------------------------------------------------
// Result types
// ---------------------------------------------------------------------------

/// Full spectrum of a symmetric (or symmetric-definite pencil) problem.
/// Eigenvalues ascend; eigenvector k sits in column k.
struct SymSpectrum {
  dvec eigenvalues;
  dmat eigenvectors;
};

/// Orthonormal basis of a subspace plus the absolute tolerance that decided
/// its dimension.
struct SubspaceBasis {
  dmat columns;     // ambient_dim x dim, orthonormal
  int dim = 0;
  double tol_used = 0.0;
};

/// Outcome of a 1-D minimization: bracketed argmin and its value.
struct Minimum1D {
  double argmin = 0.0;
  double value = 0.0;
};

namespace detail {

/// Flip eigenvector signs so the first entry of magnitude > 1e-12 is
/// positive.  Makes spectra comparable across runs and builds.
inline void fix_eigenvector_signs(dmat& V) {
  for (Eigen::Index j = 0; j < V.cols(); ++j) {
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
      if (std::abs(V(i, j)) > 1e-12) {
        if (V(i, j) < 0.0) V.col(j) = -V.col(j);
        break;
      }
    }
  }
}

inline void require_square(const dmat& A, const char* who) {
  if (A.rows() != A.cols()) {
    std::ostringstream os;
    os << who << ": expected a square matrix, got " << A.rows() << "x"
       << A.cols();
    throw ValidationError(os.str());
  }
}

/// Relative asymmetry max|A - A^T| / max(1, max|A|); must stay below 1e-10.
inline void require_symmetric(const dmat& A, const char* who) {
  require_square(A, who);
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  const double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    std::ostringstream os;
    os << who << ": matrix is not symmetric (max asymmetry " << asym
       << ", relative " << asym / scale << ")";
    throw ValidationError(os.str());
  }
}

}  // namespace detail

/// Alias-safe symmetric part; `M = symmetrized(M)` is well defined, unlike
/// assigning the expression `0.5 * (M + M.transpose())` back into M.
inline dmat symmetrized(const dmat& A) { return 0.5 * (A + A.transpose()); }

// ---------------------------------------------------------------------------
// Eigendecompositions
// ---------------------------------------------------------------------------

/// Spectrum of a symmetric matrix, eigenvalues ascending, eigenvectors
/// orthonormal with the fixed sign convention.
inline SymSpectrum sym_eig(const dmat& A) {
  detail::require_symmetric(A, "sym_eig");
  const dmat S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<dmat> solver(S);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("sym_eig: eigendecomposition failed to converge");
  }
  SymSpectrum out{solver.eigenvalues(), solver.eigenvectors()};
  detail::fix_eigenvector_signs(out.eigenvectors);
  return out;
}

/// Stationary values of the generalized Rayleigh quotient x^T A x / x^T B x:
/// the spectrum of the pencil (A, B) for symmetric A and positive-definite B.
/// Eigenvectors are B-orthonormal (V^T B V = I).
inline SymSpectrum gen_sym_eig(const dmat& A, const dmat& B) {
  detail::require_symmetric(A, "gen_sym_eig(A)");
  detail::require_symmetric(B, "gen_sym_eig(B)");
  if (A.rows() != B.rows()) {
    throw ValidationError("gen_sym_eig: A and B must share dimensions");
  }
  const dmat Bs = 0.5 * (B + B.transpose());
  Eigen::SelfAdjointEigenSolver<dmat> bspec(Bs);
  const double bmax = bspec.eigenvalues().cwiseAbs().maxCoeff();
  const double bmin = bspec.eigenvalues().minCoeff();
  if (!(bmin > 1e-12 * bmax)) {
    std::ostringstream os;
    os << "gen_sym_eig: B is not positive definite (lambda_min(B) = " << bmin
       << ", lambda_max(B) = " << bmax << ")";
    throw NumericalError(os.str());
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<dmat> solver(
      0.5 * (A + A.transpose()), Bs,
      Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("gen_sym_eig: solver failed to converge");
  }
  SymSpectrum out{solver.eigenvalues(), solver.eigenvectors()};
  detail::fix_eigenvector_signs(out.eigenvectors);
  return out;
}

// ---------------------------------------------------------------------------
// Subspaces
// ---------------------------------------------------------------------------

/// Orthonormal basis of the (numerical) nullspace of A: right singular
/// vectors whose singular value is <= tol * sigma_max.  The rank decision is
/// relative, so the zero matrix returns the full space.
inline SubspaceBasis nullspace(const dmat& A, double tol = 1e-8) {
  if (tol <= 0.0) throw ValidationError("nullspace: tol must be positive");
  Eigen::JacobiSVD<dmat> svd(A, Eigen::ComputeFullV);
  const dvec& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  const double threshold = tol * smax;
  const Eigen::Index cols = A.cols();
  int dim = 0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    const double sigma = j < sv.size() ? sv(j) : 0.0;
    if (sigma <= threshold) ++dim;
  }
  SubspaceBasis out;
  out.columns = svd.matrixV().rightCols(dim);
  out.dim = dim;
  out.tol_used = threshold;
  return out;
}

/// Orthonormal basis of the column span of A (left singular vectors with
/// sigma > rel_tol * sigma_max), together with the orthonormal complement of
/// that span in the ambient space.
struct SpanAndComplement {
  SubspaceBasis span;
  SubspaceBasis complement;
};

inline SpanAndComplement orthonormal_span(const dmat& A, double rel_tol = 1e-12) {
  if (rel_tol <= 0.0) throw ValidationError("orthonormal_span: rel_tol must be positive");
  Eigen::JacobiSVD<dmat> svd(A, Eigen::ComputeFullU);
  const dvec& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  const double threshold = rel_tol * smax;
  int rank = 0;
  for (Eigen::Index j = 0; j < sv.size(); ++j) {
    if (sv(j) > threshold && sv(j) > 0.0) ++rank;
  }
  SpanAndComplement out;
  out.span.columns = svd.matrixU().leftCols(rank);
  out.span.dim = rank;
  out.span.tol_used = threshold;
  out.complement.columns = svd.matrixU().rightCols(A.rows() - rank);
  out.complement.dim = static_cast<int>(A.rows()) - rank;
  out.complement.tol_used = threshold;
  return out;
}

/// Principal angles (radians, ascending, count = min of the two dimensions)
/// between the column spans of two orthonormal bases, via the singular values
/// of U^T W clamped to [0, 1].
inline dvec principal_angles(const SubspaceBasis& U, const SubspaceBasis& W) {
  if (U.columns.rows() != W.columns.rows()) {
    throw ValidationError("principal_angles: ambient dimensions differ");
  }
  for (const auto* basis : {&U, &W}) {
    if (basis->dim == 0) continue;
    const dmat gram =
        basis->columns.transpose() * basis->columns -
        dmat::Identity(basis->dim, basis->dim);
    if (gram.cwiseAbs().maxCoeff() > 1e-8) {
      throw ValidationError("principal_angles: basis is not orthonormal");
    }
  }
  const int count = std::min(U.dim, W.dim);
  if (count == 0) return dvec(0);
  Eigen::JacobiSVD<dmat> svd(U.columns.transpose() * W.columns);
  dvec angles(count);
  for (int k = 0; k < count; ++k) {
    const double c = std::clamp(svd.singularValues()(k), 0.0, 1.0);
    // Descending cosines give ascending angles.
    angles(k) = std::acos(c);
  }
  return angles;
}

// ---------------------------------------------------------------------------
// Finite-difference oracles
// ---------------------------------------------------------------------------

namespace detail {
inline double fd_default_step(const dvec& x) {
  const double xinf = x.size() > 0 ? x.cwiseAbs().maxCoeff() : 0.0;
  return 1e-5 * std::max(1.0, xinf);
}
}  // namespace detail

/// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / (2h).
/// h <= 0 selects the default step 1e-5 * max(1, |x|_inf).
template <class F>
dvec fd_gradient(F&& f, const dvec& x, double h = 0.0) {
  if (h <= 0.0) h = detail::fd_default_step(x);
  dvec g(x.size());
  dvec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    xp(i) = xi + h;
    const double fp = f(xp);
    xp(i) = xi - h;
    const double fm = f(xp);
    xp(i) = xi;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Central-difference Jacobian of a vector field, column i = dF/dx_i.
template <class F>
dmat fd_jacobian(F&& F_, const dvec& x, double h = 0.0) {
  if (h <= 0.0) h = detail::fd_default_step(x);
  dmat J;
  dvec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    xp(i) = xi + h;
    const dvec fp = F_(xp);
    xp(i) = xi - h;
    const dvec fm = F_(xp);
    xp(i) = xi;
    if (J.size() == 0) J.resize(fp.size(), x.size());
    J.col(i) = (fp - fm) / (2.0 * h);
  }
  return J;
}

// ---------------------------------------------------------------------------
// 1-D minimization
// ---------------------------------------------------------------------------

/// Golden-section search on [lo, hi] for a unimodal f; the argmin is
/// bracketed within tol.
template <class F>
Minimum1D minimize_1d(F&& f, double lo, double hi, double tol = 1e-10) {
  if (!(lo < hi)) throw ValidationError("minimize_1d: need lo < hi");
  if (tol <= 0.0) throw ValidationError("minimize_1d: tol must be positive");
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  Minimum1D out;
  out.argmin = 0.5 * (a + b);
  out.value = f(out.argmin);
  // Guard against a final interior evaluation that beat the midpoint.
  if (fc < out.value) out = {c, fc};
  if (fd < out.value) out = {d, fd};
  return out;
}

}  // namespace qgeom
