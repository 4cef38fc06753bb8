#pragma once
// Reference solvers for the box-constrained least-squares problem: projected
// gradient descent with a posteriori multipliers, a log-barrier Newton
// solver, and a brute-force grid oracle for low dimensions.

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "boxeki/box.hpp"
#include "boxeki/ensemble.hpp"

namespace boxeki {

namespace detail {

/// Midpoint of finite faces; unconstrained or one-sided components fall back
/// to zero / unit inset. Strictly interior whenever the box is nonempty.
inline Vector box_center(const BoxConstraint& box) {
  Vector u = Vector::Zero(box.dim());
  for (Index i = 0; i < box.constrained(); ++i) {
    const double lo = box.lower(i), hi = box.upper(i);
    if (std::isfinite(lo) && std::isfinite(hi))
      u[i] = 0.5 * (lo + hi);
    else if (std::isfinite(lo))
      u[i] = lo + 1.0;
    else if (std::isfinite(hi))
      u[i] = hi - 1.0;
  }
  return u;
}

}  // namespace detail

/// Minimizes 0.5 |y - A u|^2_Gamma over the box by projected gradient descent
/// with Barzilai-Borwein step seeds and Armijo backtracking, starting from the
/// box center unless `start` is given. Stops once the unit-step projected
/// gradient has norm <= 1e-10. Multipliers are recovered from the active
/// faces: lambda = |grad_i| where the gradient exits the box, zero elsewhere.
inline KKTPoint solve_box_ls(const Matrix& a, const Vector& y, const NoiseModel& noise,
                             const BoxConstraint& box, std::optional<Vector> start = {},
                             Index max_iter = 1000000) {
  if (a.cols() != box.dim())
    throw std::invalid_argument("solve_box_ls: operator and box dimension mismatch");
  auto value = [&](const Vector& v) { return 0.5 * noise.weighted_norm2(Vector(a * v - y)); };
  auto gradient = [&](const Vector& v) {
    return Vector(a.transpose() * noise.apply_inverse(Vector(a * v - y)));
  };

  Vector u = start ? project(*start, box) : detail::box_center(box);
  double f = value(u);
  Vector g = gradient(u);
  Vector u_prev, g_prev;
  double pg_norm = std::numeric_limits<double>::infinity();

  // Active-set polish: pin the face components whose gradient points outward,
  // solve the reduced normal equations on the free block exactly, and accept
  // when the projected-gradient residual strictly decreases. Close to the
  // optimum the attainable cost decrease falls below double rounding, so
  // descent in value is not a usable accept test; the optimality residual is.
  const Matrix hessian = a.transpose() * noise.apply_inverse(a);
  auto polish = [&]() -> bool {
    std::vector<Index> free_idx;
    for (Index i = 0; i < u.size(); ++i) {
      const bool constrained = i < box.constrained();
      const bool pin_lo = constrained && std::isfinite(box.lower(i)) && u[i] == box.lower(i) &&
                          g[i] > 0.0;
      const bool pin_hi = constrained && std::isfinite(box.upper(i)) && u[i] == box.upper(i) &&
                          g[i] < 0.0;
      if (!pin_lo && !pin_hi) free_idx.push_back(i);
    }
    if (free_idx.empty()) return false;
    const Index r = static_cast<Index>(free_idx.size());
    Matrix hff(r, r);
    Vector gf(r);
    for (Index p = 0; p < r; ++p) {
      gf[p] = g[free_idx[static_cast<size_t>(p)]];
      for (Index q = 0; q < r; ++q)
        hff(p, q) = hessian(free_idx[static_cast<size_t>(p)], free_idx[static_cast<size_t>(q)]);
    }
    const Vector d = hff.ldlt().solve(Vector(-gf));
    if (!d.allFinite()) return false;
    Vector cand = u;
    for (Index p = 0; p < r; ++p) cand[free_idx[static_cast<size_t>(p)]] += d[p];
    cand = project(cand, box);
    if ((cand - u).squaredNorm() == 0.0) return false;
    const Vector gc = gradient(cand);
    if ((cand - project(Vector(cand - gc), box)).norm() >=
        (u - project(Vector(u - g), box)).norm())
      return false;
    u_prev = u;
    g_prev = g;
    u = cand;
    f = value(u);
    g = gc;
    return true;
  };

  for (Index it = 0; it < max_iter; ++it) {
    pg_norm = (u - project(Vector(u - g), box)).norm();
    if (pg_norm <= 1e-10) break;

    double step = 1.0;
    if (it > 0) {
      const Vector s = u - u_prev;
      const Vector dg = g - g_prev;
      const double sy = s.dot(dg);
      step = (sy > 0.0) ? s.squaredNorm() / sy : 1.0;
    }
    step = std::clamp(step, 1e-16, 1e16);

    Vector u_new;
    double f_new = f;
    bool moved = false;
    for (int bt = 0; bt < 200; ++bt) {
      u_new = project(Vector(u - step * g), box);
      // A candidate identical to u means the step fell below representable
      // size; halving further cannot recover, and accepting it would spin.
      if ((u_new - u).squaredNorm() == 0.0) break;
      f_new = value(u_new);
      if (f_new <= f - 1e-4 / step * (u_new - u).squaredNorm()) {
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (moved) {
      u_prev = u;
      g_prev = g;
      u = u_new;
      f = f_new;
      g = gradient(u);
    }
    if ((it > 0 && it % 25 == 0) || !moved) {
      if (!polish() && !moved) break;  // no representable descent step remains
    }
  }

  pg_norm = (u - project(Vector(u - g), box)).norm();
  // 1e-10 is the target; a stall slightly above it is accepted because the
  // cost surface is flat to double precision there, but anything coarser than
  // 1e-9 means the iteration genuinely failed.
  if (pg_norm > 1e-9) {
    char msg[96];
    std::snprintf(msg, sizeof(msg),
                  "solve_box_ls: no convergence, projected-gradient residual = %.3e", pg_norm);
    throw std::runtime_error(msg);
  }
  const Index m = box.constrained();
  Vector lam = Vector::Zero(2 * m);
  for (Index i = 0; i < m; ++i) {
    if (std::isfinite(box.lower(i)) && u[i] == box.lower(i) && g[i] > 0.0)
      lam[i] = g[i];
    else if (std::isfinite(box.upper(i)) && u[i] == box.upper(i) && g[i] < 0.0)
      lam[i + m] = -g[i];
  }
  return KKTPoint{u, lam};
}

/// Minimizes the barrier-smoothed cost, written in its 1/iota scaling
/// Phi(u) + (1/iota) * barrier_potential(u) so the objective stays O(1) for
/// large iota (same minimizer as iota*Phi - sum log(-h_i)). Damped Newton
/// with the exact Hessian A^T Gamma^-1 A + (1/iota) diag(1/(u-a)^2 +
/// 1/(b-u)^2); backtracking keeps every iterate strictly interior. Returns
/// once the gradient norm is <= 1e-10.
inline Vector solve_barrier(const Matrix& a, const Vector& y, const NoiseModel& noise,
                            const BoxConstraint& box, double iota, Index max_iter = 200) {
  if (!(iota > 0.0)) throw std::invalid_argument("solve_barrier: iota must be positive");
  if (a.cols() != box.dim())
    throw std::invalid_argument("solve_barrier: operator and box dimension mismatch");

  const Matrix misfit_hessian = a.transpose() * noise.apply_inverse(a);
  auto value = [&](const Vector& v) {
    return 0.5 * noise.weighted_norm2(Vector(a * v - y)) + barrier_potential(v, box) / iota;
  };

  Vector u = detail::box_center(box);
  for (Index it = 0; it < max_iter; ++it) {
    const Vector g = Vector(a.transpose() * noise.apply_inverse(Vector(a * u - y))) -
                     barrier_gradient(u, box) / iota;
    if (g.norm() <= 1e-10) return u;

    Matrix hess = misfit_hessian;
    for (Index i = 0; i < box.constrained(); ++i) {
      const double lo = box.lower(i), hi = box.upper(i);
      if (std::isfinite(lo)) hess(i, i) += 1.0 / (iota * (u[i] - lo) * (u[i] - lo));
      if (std::isfinite(hi)) hess(i, i) += 1.0 / (iota * (hi - u[i]) * (hi - u[i]));
    }
    Eigen::LLT<Matrix> llt(hess);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("solve_barrier: Hessian not positive definite");
    const Vector p = -llt.solve(g);
    const double slope = g.dot(p);

    const double f = value(u);
    // Allow rounding-level non-decrease so the search cannot stall once the
    // attainable Armijo decrease drops below double precision.
    const double noise_floor =
        16.0 * std::numeric_limits<double>::epsilon() * (std::abs(f) + 1.0);
    double t = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 100; ++bt) {
      const Vector cand = u + t * p;
      if (strictly_feasible(cand, box) && value(cand) <= f + 1e-4 * t * slope + noise_floor) {
        u = cand;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) throw std::runtime_error("solve_barrier: line search failed to progress");
  }
  throw std::runtime_error("solve_barrier: no convergence within the iteration cap");
}

/// Exhaustive argmin of Phi over the tensor grid with `grid_points_per_dim`
/// points per component, faces included exactly. Low dimensions only.
inline Vector brute_force_box(const Matrix& a, const Vector& y, const NoiseModel& noise,
                              const BoxConstraint& box, Index grid_points_per_dim) {
  const Index n = box.dim();
  if (n > 5) throw std::invalid_argument("brute_force_box: dimension too large (max 5)");
  if (grid_points_per_dim < 2)
    throw std::invalid_argument("brute_force_box: need at least two grid points per dim");
  if (box.constrained() != n)
    throw std::invalid_argument("brute_force_box: every component must be box-constrained");
  for (Index i = 0; i < n; ++i)
    if (!std::isfinite(box.lower(i)) || !std::isfinite(box.upper(i)))
      throw std::invalid_argument("brute_force_box: faces must be finite");

  const Index p = grid_points_per_dim;
  std::vector<Index> digit(static_cast<std::size_t>(n), 0);
  Vector u(n), best(n);
  double best_value = std::numeric_limits<double>::infinity();
  while (true) {
    for (Index i = 0; i < n; ++i) {
      const Index k = digit[static_cast<std::size_t>(i)];
      const double lo = box.lower(i), hi = box.upper(i);
      u[i] = (k == p - 1) ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(p - 1);
    }
    const double f = 0.5 * noise.weighted_norm2(Vector(a * u - y));
    if (f < best_value) {
      best_value = f;
      best = u;
    }
    Index carry = 0;
    while (carry < n && ++digit[static_cast<std::size_t>(carry)] == p) {
      digit[static_cast<std::size_t>(carry)] = 0;
      ++carry;
    }
    if (carry == n) break;
  }
  return best;
}

}  // namespace boxeki
