#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "boxeki/forward.hpp"

namespace boxeki {

/// P1 finite elements for the coercive two-point problem
///   -p'' + p = f  on (0, L),  p(0) = p(L) = 0,
/// on a uniform mesh. The inverse problem's parameter is the source f,
/// given by nodal values on a coarse uniform interior grid and extended by
/// piecewise-linear interpolation (zero at both ends).
class EllipticProblem1D {
public:
  /// mesh_fraction is the cell width relative to the domain length, e.g.
  /// 2^-8 gives 256 cells regardless of L.
  EllipticProblem1D(Index n_params, double mesh_fraction = 1.0 / 256.0,
                    double length = std::numbers::pi)
      : n_(n_params), length_(length) {
    if (n_ < 1) throw std::invalid_argument("EllipticProblem1D: n_params must be positive");
    if (!(mesh_fraction > 0.0 && mesh_fraction < 0.5))
      throw std::invalid_argument("EllipticProblem1D: mesh_fraction out of range");
    cells_ = static_cast<Index>(std::llround(1.0 / mesh_fraction));
    if (cells_ <= n_) throw std::invalid_argument("EllipticProblem1D: mesh coarser than parameters");
    h_ = length_ / static_cast<double>(cells_);
  }

  Index n_params() const { return n_; }
  Index cells() const { return cells_; }
  double length() const { return length_; }

  /// Coarse parameter node i (interior, uniform).
  double param_node(Index i) const {
    return length_ * static_cast<double>(i + 1) / static_cast<double>(n_ + 1);
  }

  /// Solve with source given as a function; returns values at interior fine
  /// nodes. Tridiagonal (stiffness + mass) system solved by elimination.
  Vector solve_source(const std::function<double(double)>& f) const {
    const Index m = cells_ - 1;
    Vector fv(m);
    for (Index i = 0; i < m; ++i) fv[i] = f(fine_node(i));
    return solve_nodes(fv);
  }

  /// Solve with source values sampled at the interior fine nodes.
  Vector solve_nodes(const Vector& f_nodes) const {
    const Index m = cells_ - 1;
    if (f_nodes.size() != m) throw std::invalid_argument("solve_nodes: dimension mismatch");
    // (K + M) p = M f with K = (1/h) tridiag(-1, 2, -1), M = (h/6) tridiag(1, 4, 1).
    const double diag = 2.0 / h_ + 4.0 * h_ / 6.0;
    const double off = -1.0 / h_ + h_ / 6.0;
    Vector rhs(m);
    for (Index i = 0; i < m; ++i) {
      double v = 4.0 * f_nodes[i];
      if (i > 0) v += f_nodes[i - 1];
      if (i + 1 < m) v += f_nodes[i + 1];
      rhs[i] = h_ / 6.0 * v;
    }
    // Thomas elimination; the matrix is SPD tridiagonal Toeplitz.
    Vector c(m), d(m);
    c[0] = off / diag;
    d[0] = rhs[0] / diag;
    for (Index i = 1; i < m; ++i) {
      const double w = diag - off * c[i - 1];
      c[i] = off / w;
      d[i] = (rhs[i] - off * d[i - 1]) / w;
    }
    Vector p(m);
    p[m - 1] = d[m - 1];
    for (Index i = m - 2; i >= 0; --i) p[i] = d[i] - c[i] * p[i + 1];
    return p;
  }

  /// Evaluate the piecewise-linear FEM solution at a point of (0, L).
  double evaluate(const Vector& p_nodes, double x) const {
    if (!(x > 0.0 && x < length_)) throw std::invalid_argument("evaluate: point outside (0, L)");
    const double s = x / h_;
    const Index cell = std::min<Index>(static_cast<Index>(s), cells_ - 1);
    const double t = s - static_cast<double>(cell);
    const double left = (cell == 0) ? 0.0 : p_nodes[cell - 1];
    const double right = (cell == cells_ - 1) ? 0.0 : p_nodes[cell];
    return (1.0 - t) * left + t * right;
  }

  /// Piecewise-linear extension of the coarse nodal parameters, sampled at
  /// the interior fine nodes.
  Vector param_to_field(const Vector& u) const {
    if (u.size() != n_) throw std::invalid_argument("param_to_field: dimension mismatch");
    const Index m = cells_ - 1;
    const double coarse_h = length_ / static_cast<double>(n_ + 1);
    Vector field(m);
    for (Index i = 0; i < m; ++i) {
      const double x = fine_node(i);
      const double s = x / coarse_h;
      const Index seg = std::min<Index>(static_cast<Index>(s), n_);
      const double t = s - static_cast<double>(seg);
      const double left = (seg == 0) ? 0.0 : u[seg - 1];
      const double right = (seg == n_) ? 0.0 : u[seg];
      field[i] = (1.0 - t) * left + t * right;
    }
    return field;
  }

  double fine_node(Index i) const { return h_ * static_cast<double>(i + 1); }

private:
  Index n_;
  double length_;
  Index cells_;
  double h_;
};

/// Uniform interior observation points x_k = k L / (K + 1).
inline std::vector<double> uniform_interior_points(Index count, double length = std::numbers::pi) {
  std::vector<double> pts(static_cast<size_t>(count));
  for (Index k = 0; k < count; ++k)
    pts[static_cast<size_t>(k)] = length * static_cast<double>(k + 1) / static_cast<double>(count + 1);
  return pts;
}

/// Dense observation matrix A: column j is the solve for the j-th parameter
/// basis vector evaluated at the observation points.
inline ForwardMap assemble_elliptic_1d(const EllipticProblem1D& problem,
                                       const std::vector<double>& obs_points) {
  for (double x : obs_points)
    if (!(x > 0.0 && x < problem.length()))
      throw std::invalid_argument("assemble_elliptic_1d: observation point outside (0, L)");
  const Index k = static_cast<Index>(obs_points.size());
  Matrix a(k, problem.n_params());
  for (Index j = 0; j < problem.n_params(); ++j) {
    Vector e = Vector::Zero(problem.n_params());
    e[j] = 1.0;
    const Vector p = problem.solve_nodes(problem.param_to_field(e));
    for (Index r = 0; r < k; ++r) a(r, j) = problem.evaluate(p, obs_points[static_cast<size_t>(r)]);
  }
  return ForwardMap::linear(std::move(a));
}

}  // namespace boxeki
