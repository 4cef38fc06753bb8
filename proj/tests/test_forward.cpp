#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "boxeki/darcy2d.hpp"
#include "boxeki/elliptic1d.hpp"
#include "boxeki/forward.hpp"

using namespace boxeki;

namespace {

constexpr double kPi = std::numbers::pi;

// Series solution of -Laplace p = 1 on the unit square, zero boundary:
// p(x,y) = sum_{k,l odd} 16 / (pi^4 k l (k^2+l^2)) sin(k pi x) sin(l pi y).
double poisson_unit_square(double x, double y) {
  double v = 0.0;
  for (int k = 1; k <= 99; k += 2)
    for (int l = 1; l <= 99; l += 2)
      v += 16.0 / (std::pow(kPi, 4) * k * l * (k * k + l * l)) * std::sin(k * kPi * x) *
           std::sin(l * kPi * y);
  return v;
}

Vector small_random_coeffs(Index n, unsigned seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  Vector u(n);
  for (Index i = 0; i < n; ++i) u[i] = scale * unit(rng);
  return u;
}

}  // namespace

TEST_CASE("elliptic solver: zero source gives zero solution") {
  EllipticProblem1D prob(16);
  const Vector p = prob.solve_source([](double) { return 0.0; });
  CHECK(p.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("elliptic solver reproduces a manufactured solution at O(h^2)") {
  // p(x) = sin(2x) solves -p'' + p = 5 sin(2x) with zero ends on (0, pi).
  auto source = [](double x) { return 5.0 * std::sin(2.0 * x); };
  const auto obs = uniform_interior_points(7);

  double err_coarse = 0.0, err_fine = 0.0;
  {
    EllipticProblem1D prob(16, 1.0 / 128.0);
    const Vector p = prob.solve_source(source);
    for (double x : obs) err_coarse = std::max(err_coarse, std::abs(prob.evaluate(p, x) - std::sin(2.0 * x)));
  }
  {
    EllipticProblem1D prob(16, 1.0 / 256.0);
    const Vector p = prob.solve_source(source);
    for (double x : obs) err_fine = std::max(err_fine, std::abs(prob.evaluate(p, x) - std::sin(2.0 * x)));
  }
  CHECK(err_fine < 2e-4);
  const double ratio = err_coarse / err_fine;
  CHECK(ratio > 2.5);
  CHECK(ratio < 6.0);
}

TEST_CASE("elliptic observation operator is linear and consistent with direct solves") {
  EllipticProblem1D prob(16);
  const auto obs = uniform_interior_points(16);
  const ForwardMap fwd = assemble_elliptic_1d(prob, obs);
  REQUIRE(fwd.is_linear());
  CHECK(fwd.obs_dim() == 16);
  CHECK(fwd.param_dim() == 16);

  const Vector u = small_random_coeffs(16, 91, 1.0);
  const Vector via_matrix = fwd(u);
  const Vector p = prob.solve_nodes(prob.param_to_field(u));
  for (Index k = 0; k < 16; ++k)
    CHECK(via_matrix[k] == Catch::Approx(prob.evaluate(p, obs[static_cast<size_t>(k)])).margin(1e-12));
}

TEST_CASE("full observations give a definite normal matrix, fewer do not") {
  EllipticProblem1D prob(16);
  const NoiseModel noise = NoiseModel::isotropic(16, 0.01);
  const ForwardMap full = assemble_elliptic_1d(prob, uniform_interior_points(16));
  const Matrix m_full = full.matrix().transpose() *
                        noise.apply_inverse(Matrix(full.matrix()));
  Eigen::SelfAdjointEigenSolver<Matrix> es_full(m_full);
  CHECK(es_full.eigenvalues().minCoeff() > 1e-10);

  const NoiseModel noise15 = NoiseModel::isotropic(15, 0.01);
  const ForwardMap low = assemble_elliptic_1d(prob, uniform_interior_points(15));
  const Matrix m_low = low.matrix().transpose() *
                       noise15.apply_inverse(Matrix(low.matrix()));
  Eigen::SelfAdjointEigenSolver<Matrix> es_low(m_low);
  CHECK(es_low.eigenvalues().minCoeff() <= 1e-10);
}

TEST_CASE("misfit and gradient for linear least squares") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix a(5, 3);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 3; ++j) a(i, j) = unit(rng);
  const ForwardMap fwd = ForwardMap::linear(a);
  const NoiseModel noise = NoiseModel::isotropic(5, 0.5);
  const Vector u0 = small_random_coeffs(3, 11, 1.0);
  const Vector y = a * u0;

  // Exact data: zero misfit, zero gradient.
  const auto [phi0, g0] = misfit_and_grad(u0, fwd, y, noise);
  CHECK(phi0 == Catch::Approx(0.0).margin(1e-20));
  CHECK(g0.cwiseAbs().maxCoeff() < 1e-12);

  // Central differences at a generic point.
  const Vector u = small_random_coeffs(3, 13, 2.0);
  const auto [phi, g] = misfit_and_grad(u, fwd, y, noise);
  CHECK(phi > 0.0);
  const double h = 1e-6;
  for (Index i = 0; i < 3; ++i) {
    Vector up = u, dn = u;
    up[i] += h;
    dn[i] -= h;
    const double fd = (misfit_and_grad(up, fwd, y, noise).first -
                       misfit_and_grad(dn, fwd, y, noise).first) / (2.0 * h);
    CHECK(g[i] == Catch::Approx(fd).epsilon(1e-6));
  }

  // Exact quadratic expansion: Phi(u+d) = Phi(u) + g.d + 1/2 d^T H d.
  const Vector d = small_random_coeffs(3, 17, 0.7);
  const Matrix hess = a.transpose() * noise.apply_inverse(Matrix(a));
  const double expansion = phi + g.dot(d) + 0.5 * d.dot(hess * d);
  CHECK(misfit_and_grad(Vector(u + d), fwd, y, noise).first ==
        Catch::Approx(expansion).epsilon(1e-10));
}

TEST_CASE("darcy with unit permeability matches the Poisson series") {
  DarcyProblem2D prob(8);
  const Vector p = prob.solve_field([](double, double) { return 0.0; });
  const Index m = prob.cells() - 1;
  // Maximum principle: positive source, zero boundary -> positive pressure.
  CHECK(p.minCoeff() > 0.0);
  // Center node is an exact grid point; series truncated far beyond h^2.
  const double center = p[(m / 2) * m + (m / 2)];
  CHECK(center == Catch::Approx(poisson_unit_square(0.5, 0.5)).margin(5e-4));
  // Symmetry of the square: reflecting x -> 1-x must leave p unchanged.
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < m; ++i)
      CHECK(p[j * m + i] == Catch::Approx(p[j * m + (m - 1 - i)]).margin(1e-10));
  // And x <-> y symmetry.
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < m; ++i)
      CHECK(p[j * m + i] == Catch::Approx(p[i * m + j]).margin(1e-10));
}

TEST_CASE("darcy observations scale exactly under constant log-permeability shifts") {
  DarcyProblem2D prob(8);
  const Vector base = prob.observe(prob.solve_field([](double, double) { return 0.0; }));
  const Vector shifted = prob.observe(prob.solve_field([](double, double) { return 1.0; }));
  for (Index k = 0; k < prob.obs_count(); ++k)
    CHECK(shifted[k] == Catch::Approx(base[k] / std::numbers::e).epsilon(1e-12));
}

TEST_CASE("darcy observations converge at O(h^2) under refinement") {
  // Probe points shared by all three grids so interpolation is exact and the
  // scheme's truncation error dominates.
  std::vector<DarcyProblem2D::Point> probes;
  for (double x : {0.25, 0.5, 0.75})
    for (double y : {0.25, 0.5, 0.75}) probes.push_back({x, y});
  const Vector u = small_random_coeffs(8, 23, 0.3);
  const Vector obs16 = DarcyProblem2D(8, 16, probes).apply(u);
  const Vector obs32 = DarcyProblem2D(8, 32, probes).apply(u);
  const Vector obs64 = DarcyProblem2D(8, 64, probes).apply(u);
  const double d1 = (obs16 - obs32).cwiseAbs().maxCoeff();
  const double d2 = (obs32 - obs64).cwiseAbs().maxCoeff();
  const double ratio = d1 / d2;
  CHECK(ratio > 2.5);
  CHECK(ratio < 6.0);
}

TEST_CASE("darcy jacobian matches a central-difference reference") {
  DarcyProblem2D prob(8);
  const Vector u = small_random_coeffs(8, 29, 0.2);
  const Matrix jac = prob.jacobian(u);
  const double scale = jac.cwiseAbs().maxCoeff();
  const double step = 1e-5;
  for (Index j = 0; j < u.size(); ++j) {
    Vector up = u, dn = u;
    up[j] += step;
    dn[j] -= step;
    const Vector central = (prob.apply(up) - prob.apply(dn)) / (2.0 * step);
    CHECK((jac.col(j) - central).cwiseAbs().maxCoeff() < 1e-6 * scale);
  }
}

TEST_CASE("forward map wrapper exposes darcy consistently") {
  DarcyProblem2D prob(8);
  const ForwardMap fwd = prob.as_forward_map();
  CHECK_FALSE(fwd.is_linear());
  CHECK(fwd.param_dim() == 8);
  CHECK(fwd.obs_dim() == 16);
  const Vector u = small_random_coeffs(8, 31, 0.2);
  CHECK((fwd(u) - prob.apply(u)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(fwd.matrix(), std::logic_error);

  Matrix two(8, 2);
  two.col(0) = u;
  two.col(1) = 0.5 * u;
  const Matrix images = fwd.map_ensemble(Ensemble{two});
  CHECK((images.col(1) - prob.apply(Vector(0.5 * u))).cwiseAbs().maxCoeff() == 0.0);
}
