#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include "qgeom/common.hpp"
#include "qgeom/model.hpp"
#include "qgeom/rng.hpp"

// The symmetry group G = S_m x| (R_{>0})^m of the shallow quadratic network:
// permutations relabel hidden units, positive scalings act per unit by
// (a, w) -> (c^{-p} a, c w), leaving the realized predictor unchanged for a
// p-homogeneous activation.  The composite convention is fixed once:
//
//     apply((pi, c), theta)_i = (c_j^{-p} a_j, c_j w_j)  with  j = pi(i)
//
// (each source unit is scaled by its own c_j, then slot i receives source
// pi(i)).  compose and inverse below are the unique operations making this a
// left action: apply(g2, apply(g1, .)) = apply(compose(g2, g1), .).

namespace qgeom {

// ---------------------------------------------------------------------------
// Group elements
// ---------------------------------------------------------------------------

struct GroupElement {
  std::vector<int> perm;  // 0-based here; serialized 1-based
  dvec scales;            // strictly positive, one per unit

  int m() const { return static_cast<int>(perm.size()); }

  void validate() const {
    const int mm = m();
    if (mm < 1) throw ValidationError("GroupElement: empty permutation");
    if (scales.size() != mm) {
      throw ValidationError("GroupElement: perm and scales sizes differ");
    }
    std::vector<bool> seen(mm, false);
    for (const int v : perm) {
      if (v < 0 || v >= mm || seen[v]) {
        throw ValidationError("GroupElement: perm is not a permutation");
      }
      seen[v] = true;
    }
    for (Eigen::Index i = 0; i < scales.size(); ++i) {
      if (!(scales(i) > 0.0) || !std::isfinite(scales(i))) {
        std::ostringstream os;
        os << "GroupElement: scale " << i << " must be strictly positive, got "
           << scales(i);
        throw ValidationError(os.str());
      }
    }
  }

  static GroupElement identity(int m) {
    GroupElement g;
    g.perm.resize(m);
    std::iota(g.perm.begin(), g.perm.end(), 0);
    g.scales = dvec::Ones(m);
    return g;
  }
};

/// First g1, then g2.  With pi(i) = pi1(pi2(i)) the combined scales satisfy
/// c_j = c1_j * c2_{pi1^{-1}(j)}.
inline GroupElement compose(const GroupElement& g2, const GroupElement& g1) {
  g1.validate();
  g2.validate();
  const int m = g1.m();
  if (g2.m() != m) throw ValidationError("compose: sizes differ");
  std::vector<int> inv1(m);
  for (int i = 0; i < m; ++i) inv1[g1.perm[i]] = i;
  GroupElement g;
  g.perm.resize(m);
  g.scales.resize(m);
  for (int i = 0; i < m; ++i) g.perm[i] = g1.perm[g2.perm[i]];
  for (int j = 0; j < m; ++j) g.scales(j) = g1.scales(j) * g2.scales(inv1[j]);
  return g;
}

inline GroupElement inverse(const GroupElement& g) {
  g.validate();
  const int m = g.m();
  GroupElement out;
  out.perm.resize(m);
  out.scales.resize(m);
  for (int i = 0; i < m; ++i) out.perm[g.perm[i]] = i;
  for (int k = 0; k < m; ++k) out.scales(k) = 1.0 / g.scales(g.perm[k]);
  return out;
}

// ---------------------------------------------------------------------------
// Actions on Theta
// ---------------------------------------------------------------------------

inline Theta apply_group(const GroupElement& g, const Theta& theta,
                         double p = kQuadraticDegree) {
  g.validate();
  theta.validate();
  if (g.m() != theta.m()) {
    throw ValidationError("apply_group: group element and theta sizes differ");
  }
  Theta out;
  out.units.resize(theta.m());
  for (int i = 0; i < theta.m(); ++i) {
    const int j = g.perm[i];
    const double c = g.scales(j);
    out.units[i].a = std::pow(c, -p) * theta.units[j].a;
    out.units[i].w = c * theta.units[j].w;
  }
  return out;
}

/// Tangent vectors of the scaling one-parameter subgroups at theta: vector i
/// has a-component -p a_i and w-component w_i in unit i's block, zeros
/// elsewhere.  Columns of the returned matrix, in unit order.
struct OrbitTangentBasis {
  dmat vectors;  // m(d+1) x m; column i is the unit-i scaling direction
};

inline OrbitTangentBasis orbit_tangent_basis(const Theta& theta,
                                             double p = kQuadraticDegree) {
  theta.validate();
  const int d = theta.d();
  OrbitTangentBasis basis;
  basis.vectors = dmat::Zero(theta.dim(), theta.m());
  for (int i = 0; i < theta.m(); ++i) {
    const int base = i * (d + 1);
    basis.vectors(base, i) = -p * theta.units[i].a;
    basis.vectors.block(base + 1, i, d, 1) = theta.units[i].w;
  }
  return basis;
}

/// Uniform random permutation plus per-unit scales exp(u), u uniform in
/// [lo, hi]; deterministic in the seed.
inline GroupElement random_orbit_element(int m,
                                         std::pair<double, double> scale_log_range,
                                         std::uint64_t rng_seed) {
  if (m < 1) throw ValidationError("random_orbit_element: need m >= 1");
  if (!(scale_log_range.first <= scale_log_range.second)) {
    throw ValidationError("random_orbit_element: need lo <= hi");
  }
  RngStream stream(rng_seed, "orbit-element");
  GroupElement g;
  g.perm = stream.permutation(m);
  g.scales.resize(m);
  for (int i = 0; i < m; ++i) {
    g.scales(i) =
        std::exp(stream.uniform(scale_log_range.first, scale_log_range.second));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Gauges and canonical representatives
// ---------------------------------------------------------------------------

/// Rescale every unit onto the slice |w_i| = 1 (a_i <- a_i |w_i|^p); same
/// orbit, same predictor.
inline Theta gauge_normalize(const Theta& theta, double p = kQuadraticDegree) {
  theta.validate();
  Theta out = theta;
  for (int i = 0; i < theta.m(); ++i) {
    const double norm = out.units[i].w.norm();
    if (norm <= 1e-12) {
      std::ostringstream os;
      os << "gauge_normalize: unit " << i << " has vanishing weight vector";
      throw ValidationError(os.str());
    }
    out.units[i].a *= std::pow(norm, p);
    out.units[i].w /= norm;
  }
  return out;
}

/// Deterministic orbit representative: gauge-normalize, flip each w_i so its
/// first entry of magnitude > 1e-12 is positive (valid for the even quadratic
/// activation only — the sign flip is extra discrete gauge beyond G), then
/// sort units lexicographically by (a, w).
inline Theta canonical_representative(const Theta& theta,
                                      double p = kQuadraticDegree) {
  Theta out = gauge_normalize(theta, p);
  for (Unit& u : out.units) {
    for (Eigen::Index k = 0; k < u.w.size(); ++k) {
      if (std::abs(u.w(k)) > 1e-12) {
        if (u.w(k) < 0.0) u.w = -u.w;
        break;
      }
    }
  }
  std::sort(out.units.begin(), out.units.end(),
            [](const Unit& lhs, const Unit& rhs) {
              if (lhs.a != rhs.a) return lhs.a < rhs.a;
              for (Eigen::Index k = 0; k < lhs.w.size(); ++k) {
                if (lhs.w(k) != rhs.w(k)) return lhs.w(k) < rhs.w(k);
              }
              return false;
            });
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline json group_to_json(const GroupElement& g) {
  g.validate();
  json perm = json::array();
  for (const int v : g.perm) perm.push_back(v + 1);  // 1-based on the wire
  json scales = json::array();
  for (Eigen::Index i = 0; i < g.scales.size(); ++i) scales.push_back(g.scales(i));
  return json{{"perm", std::move(perm)}, {"scales", std::move(scales)}};
}

inline GroupElement group_from_json(const json& j) {
  try {
    GroupElement g;
    for (const auto& v : j.at("perm")) g.perm.push_back(v.get<int>() - 1);
    const auto& scales = j.at("scales");
    g.scales.resize(static_cast<Eigen::Index>(scales.size()));
    for (Eigen::Index i = 0; i < g.scales.size(); ++i) {
      g.scales(i) = scales.at(i).get<double>();
    }
    g.validate();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("group_from_json: malformed input: ") + e.what());
  }
}

}  // namespace qgeom
