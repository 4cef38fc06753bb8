#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "boxeki/ensemble.hpp"

namespace boxeki {

/// Componentwise box [a_i, b_i] on the first m components of R^n; the
/// remaining n - m components are unconstrained. One-sided intervals are
/// expressed with infinite bounds; infinite faces contribute no constraint.
class BoxConstraint {
public:
  BoxConstraint(Vector lower, Vector upper, Index total_dim)
      : lower_(std::move(lower)), upper_(std::move(upper)), n_(total_dim) {
    if (lower_.size() != upper_.size())
      throw std::invalid_argument("BoxConstraint: bound vectors must have equal length");
    if (lower_.size() > n_)
      throw std::invalid_argument("BoxConstraint: more bounds than components");
    for (Index i = 0; i < lower_.size(); ++i) {
      if (!(lower_[i] < upper_[i]))
        throw std::invalid_argument("BoxConstraint: lower[" + std::to_string(i) +
                                    "] must be strictly below upper[" + std::to_string(i) + "]");
    }
  }

  /// Uniform box [lo, hi]^m embedded in R^n.
  static BoxConstraint uniform(double lo, double hi, Index m, Index n) {
    return BoxConstraint(Vector::Constant(m, lo), Vector::Constant(m, hi), n);
  }

  Index dim() const { return n_; }
  Index constrained() const { return lower_.size(); }
  double lower(Index i) const { return lower_[i]; }
  double upper(Index i) const { return upper_[i]; }

  /// Number of finite faces (log-barrier terms).
  Index finite_faces() const {
    Index c = 0;
    for (Index i = 0; i < constrained(); ++i) {
      if (std::isfinite(lower_[i])) ++c;
      if (std::isfinite(upper_[i])) ++c;
    }
    return c;
  }

private:
  Vector lower_, upper_;
  Index n_;
};

/// Componentwise clamp of the constrained components; unconstrained
/// components pass through unchanged. Idempotent, 1-Lipschitz in max norm.
inline Vector project(const Vector& u, const BoxConstraint& box) {
  if (u.size() != box.dim())
    throw std::invalid_argument("project: dimension mismatch");
  Vector out = u;
  for (Index i = 0; i < box.constrained(); ++i)
    out[i] = std::clamp(out[i], box.lower(i), box.upper(i));
  return out;
}

inline Ensemble project(const Ensemble& e, const BoxConstraint& box) {
  Matrix out = e.data();
  for (Index j = 0; j < out.cols(); ++j)
    for (Index i = 0; i < box.constrained(); ++i)
      out(i, j) = std::clamp(out(i, j), box.lower(i), box.upper(i));
  return Ensemble(std::move(out));
}

/// Clamp into the box and then push strictly inside by `margin` on every
/// finite face. Barrier flows require h_i(u) < 0, so their starting
/// ensembles pass through this.
inline Vector interior_pushback(const Vector& u, const BoxConstraint& box, double margin = 1e-6) {
  if (!(margin > 0.0))
    throw std::invalid_argument("interior_pushback: margin must be positive");
  Vector out = project(u, box);
  for (Index i = 0; i < box.constrained(); ++i) {
    const double lo = box.lower(i), hi = box.upper(i);
    if (hi - lo <= 2.0 * margin)
      throw std::invalid_argument("interior_pushback: margin exceeds half the box width");
    if (std::isfinite(lo)) out[i] = std::max(out[i], lo + margin);
    if (std::isfinite(hi)) out[i] = std::min(out[i], hi - margin);
  }
  return out;
}

inline Ensemble interior_pushback(const Ensemble& e, const BoxConstraint& box, double margin = 1e-6) {
  Matrix out(e.dim(), e.count());
  for (Index j = 0; j < e.count(); ++j)
    out.col(j) = interior_pushback(e.particle(j), box, margin);
  return Ensemble(std::move(out));
}

/// h_i(u) = a_i - u_i (i < m), h_{i+m}(u) = u_i - b_i. Feasible iff all <= 0.
inline Vector constraint_values(const Vector& u, const BoxConstraint& box) {
  const Index m = box.constrained();
  Vector h(2 * m);
  for (Index i = 0; i < m; ++i) {
    h[i] = box.lower(i) - u[i];
    h[i + m] = u[i] - box.upper(i);
  }
  return h;
}

inline bool is_feasible(const Vector& u, const BoxConstraint& box, double tol = 0.0) {
  for (Index i = 0; i < box.constrained(); ++i)
    if (u[i] < box.lower(i) - tol || u[i] > box.upper(i) + tol) return false;
  return true;
}

inline bool is_feasible(const Ensemble& e, const BoxConstraint& box, double tol = 0.0) {
  for (Index j = 0; j < e.count(); ++j)
    if (!is_feasible(e.particle(j), box, tol)) return false;
  return true;
}

inline bool strictly_feasible(const Vector& u, const BoxConstraint& box) {
  for (Index i = 0; i < box.constrained(); ++i)
    if (!(u[i] > box.lower(i) && u[i] < box.upper(i))) return false;
  return true;
}

inline bool strictly_feasible(const Ensemble& e, const BoxConstraint& box) {
  for (Index j = 0; j < e.count(); ++j)
    if (!strictly_feasible(e.particle(j), box)) return false;
  return true;
}

/// sum_i (1/h_i(u)) grad h_i(u), the inward-pointing repulsion of the log
/// barrier: component i equals 1/(u_i - a_i) + 1/(u_i - b_i). Equals the
/// negative gradient of the barrier potential -sum_i log(-h_i(u)).
/// Rejects points on or outside a face so the ODE driver can back off.
inline Vector barrier_gradient(const Vector& u, const BoxConstraint& box) {
  if (u.size() != box.dim())
    throw std::invalid_argument("barrier_gradient: dimension mismatch");
  Vector g = Vector::Zero(box.dim());
  for (Index i = 0; i < box.constrained(); ++i) {
    const double lo = box.lower(i), hi = box.upper(i);
    if (!(u[i] > lo && u[i] < hi))
      throw DomainError("barrier_gradient: component " + std::to_string(i) +
                        " is on or outside a face");
    if (std::isfinite(lo)) g[i] += 1.0 / (u[i] - lo);
    if (std::isfinite(hi)) g[i] += 1.0 / (u[i] - hi);
  }
  return g;
}

/// -sum_i log(-h_i(u)) over finite faces; strict interior required.
inline double barrier_potential(const Vector& u, const BoxConstraint& box) {
  double phi = 0.0;
  for (Index i = 0; i < box.constrained(); ++i) {
    const double lo = box.lower(i), hi = box.upper(i);
    if (!(u[i] > lo && u[i] < hi))
      throw DomainError("barrier_potential: component " + std::to_string(i) +
                        " is on or outside a face");
    if (std::isfinite(lo)) phi -= std::log(u[i] - lo);
    if (std::isfinite(hi)) phi -= std::log(hi - u[i]);
  }
  return phi;
}

enum class Side { lower, upper };

/// Piecewise-linear surrogate of the face indicator: value 1 where the
/// velocity points inward or vanishes, falling linearly to 0 once it points
/// outward by `width`. Lower face blocks v <= -width, upper face v >= width.
inline double smoothed_indicator(double v, Side side, double width) {
  if (!(width > 0.0))
    throw std::invalid_argument("smoothed_indicator: width must be positive");
  const double t = (side == Side::lower) ? 1.0 + v / width : 1.0 - v / width;
  return std::clamp(t, 0.0, 1.0);
}

/// Per-component velocity gate for flows on the closed box. Interior
/// components (more than `face_width` from the face they move toward) keep
/// the raw velocity. Approaching a face, the outward part is damped by the
/// smoothed indicator and fades to zero at the face itself, which keeps the
/// box forward-invariant; inward motion is never gated. Shrinking both
/// widths recovers the discontinuous indicator gating.
inline double gate_component(double u_i, double v_i, double lo, double hi,
                             double ramp_width, double face_width) {
  if (v_i < 0.0 && std::isfinite(lo)) {
    const double q = std::clamp((u_i - lo) / face_width, 0.0, 1.0);
    const double s = smoothed_indicator(v_i, Side::lower, ramp_width);
    return v_i * q * (q + (1.0 - q) * s);
  }
  if (v_i > 0.0 && std::isfinite(hi)) {
    const double q = std::clamp((hi - u_i) / face_width, 0.0, 1.0);
    const double s = smoothed_indicator(v_i, Side::upper, ramp_width);
    return v_i * q * (q + (1.0 - q) * s);
  }
  return v_i;
}

/// Active set at the ensemble mean: indices whose mean sits on a face (to
/// absolute tolerance) with the cost gradient pointing outward through it.
inline std::vector<Index> active_index_set(const Ensemble& e, const Vector& grad_at_mean,
                                           const BoxConstraint& box, double tol = 1e-9) {
  const Vector mean = empirical_mean(e);
  std::vector<Index> active;
  for (Index i = 0; i < box.constrained(); ++i) {
    const bool at_lower = std::isfinite(box.lower(i)) && std::abs(mean[i] - box.lower(i)) <= tol;
    const bool at_upper = std::isfinite(box.upper(i)) && std::abs(mean[i] - box.upper(i)) <= tol;
    if ((at_lower && grad_at_mean[i] > 0.0) || (at_upper && grad_at_mean[i] < 0.0))
      active.push_back(i);
  }
  return active;
}

/// Union variant: a component is active if ANY particle sits on a face with
/// its own gradient pointing outward. `grads` holds one gradient per column.
inline std::vector<Index> active_index_set_union(const Ensemble& e, const Matrix& grads,
                                                 const BoxConstraint& box, double tol = 1e-9) {
  if (grads.cols() != e.count())
    throw std::invalid_argument("active_index_set_union: one gradient column per particle");
  std::vector<Index> active;
  for (Index i = 0; i < box.constrained(); ++i) {
    bool hit = false;
    for (Index j = 0; j < e.count() && !hit; ++j) {
      const double ui = e.data()(i, j);
      const bool at_lower = std::isfinite(box.lower(i)) && std::abs(ui - box.lower(i)) <= tol;
      const bool at_upper = std::isfinite(box.upper(i)) && std::abs(ui - box.upper(i)) <= tol;
      hit = (at_lower && grads(i, j) > 0.0) || (at_upper && grads(i, j) < 0.0);
    }
    if (hit) active.push_back(i);
  }
  return active;
}

/// Preconditioner D built from a covariance C: rows and columns of active
/// indices are zeroed, eps is placed on their diagonal, and the remaining
/// block keeps C + eps I. Symmetric positive definite for eps > 0, C psd.
inline Matrix transform_preconditioner(const Matrix& cov, const std::vector<Index>& active,
                                       double eps) {
  if (cov.rows() != cov.cols())
    throw std::invalid_argument("transform_preconditioner: covariance must be square");
  if (!(eps > 0.0))
    throw std::invalid_argument("transform_preconditioner: eps must be positive");
  Matrix d = cov + eps * Matrix::Identity(cov.rows(), cov.cols());
  for (Index i : active) {
    if (i < 0 || i >= cov.rows())
      throw std::invalid_argument("transform_preconditioner: active index out of range");
    d.row(i).setZero();
    d.col(i).setZero();
    d(i, i) = eps;
  }
  return d;
}

/// Candidate primal-dual pair for the box-constrained least-squares problem.
/// multipliers has length 2m, ordered as the faces of constraint_values.
struct KKTPoint {
  Vector u;
  Vector multipliers;
};

/// Max of the four first-order optimality violations: stationarity
/// |grad Phi + sum lambda_j grad h_j|_inf, primal feasibility max(0, h_j),
/// dual feasibility max(0, -lambda_j), complementarity max |lambda_j h_j|.
/// Infinite faces must carry zero multipliers and are otherwise skipped.
inline double kkt_residual(const Vector& u, const Vector& multipliers, const Vector& grad_at_u,
                           const BoxConstraint& box) {
  const Index m = box.constrained();
  if (multipliers.size() != 2 * m)
    throw std::invalid_argument("kkt_residual: expected 2m multipliers");
  Vector stat = grad_at_u;
  double primal = 0.0, dual = 0.0, comp = 0.0;
  for (Index i = 0; i < m; ++i) {
    const double lam_lo = multipliers[i], lam_hi = multipliers[i + m];
    stat[i] += -lam_lo + lam_hi;  // grad h = -e_i (lower), +e_i (upper)
    dual = std::max({dual, -lam_lo, -lam_hi});
    if (std::isfinite(box.lower(i))) {
      const double h = box.lower(i) - u[i];
      primal = std::max(primal, h);
      comp = std::max(comp, std::abs(lam_lo * h));
    } else if (lam_lo != 0.0) {
      throw std::invalid_argument("kkt_residual: multiplier on an infinite face");
    }
    if (std::isfinite(box.upper(i))) {
      const double h = u[i] - box.upper(i);
      primal = std::max(primal, h);
      comp = std::max(comp, std::abs(lam_hi * h));
    } else if (lam_hi != 0.0) {
      throw std::invalid_argument("kkt_residual: multiplier on an infinite face");
    }
  }
  return std::max({stat.cwiseAbs().maxCoeff(), primal, dual, comp});
}

/// The faces as generic linear inequalities <c_j, u> + delta_j <= 0,
/// ordered like constraint_values. Projection and barriers above are the
/// box specialization; general polytopes are out of scope.
struct LinearConstraint {
  Vector c;
  double delta;
};

inline std::vector<LinearConstraint> box_as_linear_constraints(const BoxConstraint& box) {
  std::vector<LinearConstraint> cs;
  const Index m = box.constrained();
  cs.reserve(static_cast<size_t>(2 * m));
  for (Index i = 0; i < m; ++i) {
    Vector c = Vector::Zero(box.dim());
    c[i] = -1.0;
    cs.push_back({c, box.lower(i)});
  }
  for (Index i = 0; i < m; ++i) {
    Vector c = Vector::Zero(box.dim());
    c[i] = 1.0;
    cs.push_back({c, -box.upper(i)});
  }
  return cs;
}

}  // namespace boxeki
