#pragma once

#include <Eigen/Sparse>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "boxeki/forward.hpp"
#include "boxeki/sine_basis.hpp"

namespace boxeki {

/// Five-point finite differences for the Darcy pressure equation
///   -div( exp(u) grad p ) = 1  on (0,1)^2,  p = 0 on the boundary,
/// with the log-permeability u expanded in a truncated sine basis. The
/// transmissibility is the field evaluated at cell-face midpoints, which
/// keeps the scheme second order for smooth fields.
class DarcyProblem2D {
public:
  struct Point {
    double x, y;
  };

  explicit DarcyProblem2D(Index truncation, Index cells = 16,
                          std::vector<Point> obs_points = default_observation_grid())
      : basis_(SineBasis2D::first(truncation)), cells_(cells), obs_(std::move(obs_points)) {
    if (cells_ < 4) throw std::invalid_argument("DarcyProblem2D: mesh too coarse");
    for (const Point& q : obs_)
      if (!(q.x > 0.0 && q.x < 1.0 && q.y > 0.0 && q.y < 1.0))
        throw std::invalid_argument("DarcyProblem2D: observation point outside (0,1)^2");
    h_ = 1.0 / static_cast<double>(cells_);
    build_stencil_tables();
  }

  /// Uniform 4x4 interior grid {0.2, 0.4, 0.6, 0.8}^2.
  static std::vector<Point> default_observation_grid() {
    std::vector<Point> pts;
    for (int i = 1; i <= 4; ++i)
      for (int j = 1; j <= 4; ++j)
        pts.push_back({0.2 * static_cast<double>(i), 0.2 * static_cast<double>(j)});
    return pts;
  }

  Index truncation() const { return basis_.size(); }
  Index cells() const { return cells_; }
  Index obs_count() const { return static_cast<Index>(obs_.size()); }
  const SineBasis2D& basis() const { return basis_; }

  /// Pressure at interior nodes for a log-permeability field given as a
  /// function; lexicographic node order, x fastest.
  Vector solve_field(const std::function<double(double, double)>& log_kappa) const {
    const Index m = cells_ - 1;
    const Index dofs = m * m;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(5 * dofs));
    Vector rhs = Vector::Constant(dofs, 1.0);
    const double ih2 = 1.0 / (h_ * h_);
    auto idx = [m](Index i, Index j) { return j * m + i; };
    for (Index j = 0; j < m; ++j) {
      for (Index i = 0; i < m; ++i) {
        const double x = h_ * static_cast<double>(i + 1);
        const double y = h_ * static_cast<double>(j + 1);
        const double kw = std::exp(log_kappa(x - 0.5 * h_, y));
        const double ke = std::exp(log_kappa(x + 0.5 * h_, y));
        const double ks = std::exp(log_kappa(x, y - 0.5 * h_));
        const double kn = std::exp(log_kappa(x, y + 0.5 * h_));
        trip.emplace_back(idx(i, j), idx(i, j), (kw + ke + ks + kn) * ih2);
        if (i > 0) trip.emplace_back(idx(i, j), idx(i - 1, j), -kw * ih2);
        if (i + 1 < m) trip.emplace_back(idx(i, j), idx(i + 1, j), -ke * ih2);
        if (j > 0) trip.emplace_back(idx(i, j), idx(i, j - 1), -ks * ih2);
        if (j + 1 < m) trip.emplace_back(idx(i, j), idx(i, j + 1), -kn * ih2);
      }
    }
    Eigen::SparseMatrix<double> a(dofs, dofs);
    a.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver(a);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("DarcyProblem2D: factorization failed");
    return solver.solve(rhs);
  }

  /// Bilinear interpolation of the nodal solution (zero boundary values).
  double evaluate(const Vector& p_nodes, double x, double y) const {
    const Index m = cells_ - 1;
    const double sx = x / h_, sy = y / h_;
    const Index cx = std::min<Index>(static_cast<Index>(sx), cells_ - 1);
    const Index cy = std::min<Index>(static_cast<Index>(sy), cells_ - 1);
    const double tx = sx - static_cast<double>(cx);
    const double ty = sy - static_cast<double>(cy);
    auto node = [&](Index gi, Index gj) -> double {
      if (gi == 0 || gj == 0 || gi == cells_ || gj == cells_) return 0.0;
      return p_nodes[(gj - 1) * m + (gi - 1)];
    };
    return (1.0 - tx) * (1.0 - ty) * node(cx, cy) + tx * (1.0 - ty) * node(cx + 1, cy) +
           (1.0 - tx) * ty * node(cx, cy + 1) + tx * ty * node(cx + 1, cy + 1);
  }

  /// Pressure at interior nodes for KL coefficients u. Same scheme as
  /// solve_field, but the face-midpoint basis values are precomputed so the
  /// per-call cost is one matrix-vector product plus the sparse solve.
  Vector solve_coeffs(const Vector& coeffs) const {
    if (coeffs.size() != basis_.size())
      throw std::invalid_argument("DarcyProblem2D: coefficient dimension mismatch");
    const Index m = cells_ - 1;
    const Index dofs = m * m;
    const Vector kappa = (face_basis_ * coeffs).array().exp();
    const double ih2 = 1.0 / (h_ * h_);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(stencil_.size());
    for (const StencilEntry& s : stencil_)
      trip.emplace_back(s.row, s.col, s.sign * kappa[s.face] * ih2);
    Eigen::SparseMatrix<double> a(dofs, dofs);
    a.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver(a);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("DarcyProblem2D: factorization failed");
    return solver.solve(Vector::Constant(dofs, 1.0));
  }

  /// Observations of the pressure for KL coefficients u.
  Vector apply(const Vector& coeffs) const { return observe(solve_coeffs(coeffs)); }

  Vector observe(const Vector& p_nodes) const {
    Vector out(obs_count());
    for (Index k = 0; k < obs_count(); ++k)
      out[k] = evaluate(p_nodes, obs_[static_cast<size_t>(k)].x, obs_[static_cast<size_t>(k)].y);
    return out;
  }

  /// Forward-difference Jacobian with step 1e-6 (1 + |u|_inf). Used only to
  /// precondition flows, so first-order accuracy is enough.
  Matrix jacobian(const Vector& coeffs) const {
    const double step = 1e-6 * (1.0 + coeffs.cwiseAbs().maxCoeff());
    const Vector base = apply(coeffs);
    Matrix jac(obs_count(), coeffs.size());
    for (Index j = 0; j < coeffs.size(); ++j) {
      Vector shifted = coeffs;
      shifted[j] += step;
      jac.col(j) = (apply(shifted) - base) / step;
    }
    return jac;
  }

  /// Wrap as a generic forward map.
  ForwardMap as_forward_map() const {
    const DarcyProblem2D self = *this;  // value copy keeps the map self-contained
    return ForwardMap::nonlinear(
        truncation(), obs_count(), [self](const Vector& u) { return self.apply(u); },
        [self](const Vector& u) { return self.jacobian(u); });
  }

private:
  // One row per node face in node-major order (west, east, south, north);
  // kappa at every face is exp(face_basis_ * coeffs) in a single product.
  struct StencilEntry {
    Index row, col, face;
    double sign;
  };

  void build_stencil_tables() {
    const Index m = cells_ - 1;
    const Index n = basis_.size();
    face_basis_.resize(4 * m * m, n);
    stencil_.clear();
    stencil_.reserve(static_cast<size_t>(8 * m * m));
    for (Index j = 0; j < m; ++j) {
      for (Index i = 0; i < m; ++i) {
        const Index node = j * m + i;
        const double x = h_ * static_cast<double>(i + 1);
        const double y = h_ * static_cast<double>(j + 1);
        const Point faces[4] = {{x - 0.5 * h_, y}, {x + 0.5 * h_, y},
                                {x, y - 0.5 * h_}, {x, y + 0.5 * h_}};
        for (Index s = 0; s < 4; ++s) {
          const Index f = 4 * node + s;
          for (Index k = 0; k < n; ++k)
            face_basis_(f, k) = basis_.eval(k, faces[s].x, faces[s].y);
          stencil_.push_back({node, node, f, 1.0});  // duplicates sum on assembly
        }
        if (i > 0) stencil_.push_back({node, node - 1, 4 * node + 0, -1.0});
        if (i + 1 < m) stencil_.push_back({node, node + 1, 4 * node + 1, -1.0});
        if (j > 0) stencil_.push_back({node, node - m, 4 * node + 2, -1.0});
        if (j + 1 < m) stencil_.push_back({node, node + m, 4 * node + 3, -1.0});
      }
    }
  }

  SineBasis2D basis_;
  Index cells_;
  std::vector<Point> obs_;
  double h_ = 0.0;
  Matrix face_basis_;
  std::vector<StencilEntry> stencil_;
};

inline Vector darcy_apply(const Vector& coeffs, const DarcyProblem2D& problem) {
  return problem.apply(coeffs);
}

inline Matrix darcy_jacobian(const Vector& coeffs, const DarcyProblem2D& problem) {
  return problem.jacobian(coeffs);
}

}  // namespace boxeki
