#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "boxeki/box.hpp"
#include "boxeki/ensemble.hpp"
#include "boxeki/flows.hpp"
#include "boxeki/forward.hpp"
#include "boxeki/integrate.hpp"

using namespace boxeki;

namespace {

Ensemble random_interior_ensemble(Index n, Index j, std::uint64_t seed, double radius = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-radius, radius);
  Matrix u(n, j);
  for (Index c = 0; c < j; ++c)
    for (Index r = 0; r < n; ++r) u(r, c) = unif(rng);
  return Ensemble(std::move(u));
}

// Classic fixed-step fourth-order reference for cross-checking the adaptive
// integrator on smooth flows.
Matrix rk4_reference(const FlowField& field, Matrix y, double t_end, int steps) {
  const double h = t_end / steps;
  double t = 0.0;
  for (int s = 0; s < steps; ++s) {
    const Matrix k1 = field.rhs(t, Ensemble(Matrix(y)));
    const Matrix k2 = field.rhs(t + 0.5 * h, Ensemble(Matrix(y + 0.5 * h * k1)));
    const Matrix k3 = field.rhs(t + 0.5 * h, Ensemble(Matrix(y + 0.5 * h * k2)));
    const Matrix k4 = field.rhs(t + h, Ensemble(Matrix(y + h * k3)));
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h;
  }
  return y;
}

}  // namespace

TEST_CASE("checkpoint grid spacing") {
  const std::vector<double> g = checkpoint_grid(100.0, 3);
  REQUIRE(g.size() == 4);
  REQUIRE(g[0] == 0.0);
  REQUIRE(g[1] == Catch::Approx(0.01).margin(1e-12));
  REQUIRE(g[2] == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(g[3] == 100.0);

  for (auto [t_end, count] : std::vector<std::pair<double, Index>>{{1e6, 40}, {1e-3, 5}}) {
    const std::vector<double> grid = checkpoint_grid(t_end, count);
    REQUIRE(grid.size() == static_cast<std::size_t>(count) + 1);
    for (std::size_t i = 1; i < grid.size(); ++i) REQUIRE(grid[i] > grid[i - 1]);
    REQUIRE(grid.back() == t_end);
  }

  REQUIRE_THROWS_AS(checkpoint_grid(10.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(checkpoint_grid(0.0, 5), std::invalid_argument);
}

TEST_CASE("zero field keeps the trajectory constant") {
  FlowField field;
  field.rhs = [](double, const Ensemble& e) { return Matrix(Matrix::Zero(e.dim(), e.count())); };
  const Ensemble e0 = random_interior_ensemble(3, 4, 1);

  IntegrationConfig cfg;
  cfg.t_end = 50.0;
  cfg.checkpoint_count = 6;
  const Trajectory traj = integrate(field, e0, cfg);
  REQUIRE(traj.states.size() == traj.times.size());
  for (const Ensemble& s : traj.states) REQUIRE((s.data() - e0.data()).norm() == 0.0);
}

TEST_CASE("scalar exponential decay matches the closed form") {
  FlowField field;
  field.rhs = [](double, const Ensemble& e) { return Matrix(-e.data()); };
  Matrix u0(1, 1);
  u0(0, 0) = 1.0;

  IntegrationConfig cfg;
  cfg.t_end = 1.0;
  cfg.checkpoint_count = 4;
  cfg.rel_tol = 1e-6;
  cfg.abs_tol = 1e-12;
  const Trajectory traj = integrate(field, Ensemble(std::move(u0)), cfg);
  for (std::size_t i = 0; i < traj.times.size(); ++i)
    REQUIRE(traj.states[i].data()(0, 0) ==
            Catch::Approx(std::exp(-traj.times[i])).margin(1e-5));
}

TEST_CASE("two-particle covariance follows the closed-form decay") {
  // One-dimensional identity map: the ensemble covariance solves
  // C' = -2C^2, so C(t) = C0 / (1 + 2 C0 t).
  const ForwardMap fwd = ForwardMap::linear(Matrix::Identity(1, 1));
  const NoiseModel noise = NoiseModel::isotropic(1, 1.0);
  Vector y(1);
  y[0] = 0.3;
  Matrix u0(1, 2);
  u0 << 1.0, -1.0;
  const Ensemble e0{Matrix(u0)};

  const FlowField field = make_flow(fwd, y, noise, FlowSpec{});
  IntegrationConfig cfg;
  cfg.t_end = 3.0;
  cfg.checkpoint_count = 5;
  cfg.rel_tol = 1e-8;
  cfg.abs_tol = 1e-12;
  const Trajectory traj = integrate(field, e0, cfg);

  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double expected = 1.0 / (1.0 + 2.0 * traj.times[i]);
    REQUIRE(empirical_cov(traj.states[i])(0, 0) == Catch::Approx(expected).margin(1e-7));
  }

  const Matrix reference = rk4_reference(field, u0, 3.0, 30000);
  REQUIRE((traj.states.back().data() - reference).norm() < 1e-6);
}

TEST_CASE("halving the tolerance tightens the terminal state") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> gauss;
  Matrix a(3, 3);
  for (Index c = 0; c < 3; ++c)
    for (Index r = 0; r < 3; ++r) a(r, c) = gauss(rng);
  const ForwardMap fwd = ForwardMap::linear(a);
  const NoiseModel noise = NoiseModel::isotropic(3, 0.5);
  Vector y(3);
  y << 0.4, -0.2, 0.1;
  const Ensemble e0 = random_interior_ensemble(3, 4, 78, 1.0);
  const FlowField field = make_flow(fwd, y, noise, FlowSpec{});

  auto terminal = [&](double rel) {
    IntegrationConfig cfg;
    cfg.t_end = 2.0;
    cfg.checkpoint_count = 2;
    cfg.rel_tol = rel;
    cfg.abs_tol = 1e-12;
    return integrate(field, e0, cfg).states.back().data();
  };

  for (double rel : {1e-5, 1e-6})
    REQUIRE((terminal(rel) - terminal(rel / 2.0)).norm() < rel);
}

TEST_CASE("feasibility guard keeps barrier snapshots strictly interior") {
  const ForwardMap fwd = ForwardMap::linear(Matrix::Identity(2, 2));
  const NoiseModel noise = NoiseModel::isotropic(2, 1.0);
  const BoxConstraint box = BoxConstraint::uniform(-1.0, 1.0, 2, 2);
  Vector y(2);
  y << 0.2, -0.3;

  FlowSpec spec;
  spec.constraint_mode = ConstraintMode::transformed_smoothed;
  spec.iota = 1.0;
  spec.eps = 1.0;
  const FlowField field = make_flow(fwd, y, noise, spec, box);

  IntegrationConfig cfg;
  cfg.t_end = 10.0;
  cfg.checkpoint_count = 6;
  const Trajectory traj = integrate(field, random_interior_ensemble(2, 4, 91), cfg);
  for (const Ensemble& s : traj.states) REQUIRE(strictly_feasible(s, box));
}

TEST_CASE("feasibility guard keeps gated snapshots inside the closed box") {
  const ForwardMap fwd = ForwardMap::linear(Matrix::Identity(2, 2));
  const NoiseModel noise = NoiseModel::isotropic(2, 1.0);
  const BoxConstraint box = BoxConstraint::uniform(-1.0, 1.0, 2, 2);
  Vector y(2);
  y << -2.0, 0.3;  // pulls the first component onto the lower face

  FlowSpec spec;
  spec.constraint_mode = ConstraintMode::transformed;
  spec.eps = 0.05;
  const FlowField field = make_flow(fwd, y, noise, spec, box);

  IntegrationConfig cfg;
  cfg.t_end = 30.0;
  cfg.checkpoint_count = 6;
  const Trajectory traj = integrate(field, random_interior_ensemble(2, 4, 92), cfg);
  for (const Ensemble& s : traj.states) REQUIRE(is_feasible(s, box));

  // The pull toward the face actually happened; the gate held the box.
  const Matrix& last = traj.states.back().data();
  for (Index j = 0; j < last.cols(); ++j) REQUIRE(last(0, j) < -0.9);
}

TEST_CASE("initial state outside the domain is rejected") {
  const ForwardMap fwd = ForwardMap::linear(Matrix::Identity(2, 2));
  const NoiseModel noise = NoiseModel::isotropic(2, 1.0);
  const BoxConstraint box = BoxConstraint::uniform(-1.0, 1.0, 2, 2);
  const Vector y = Vector::Zero(2);

  FlowSpec spec;
  spec.constraint_mode = ConstraintMode::barrier_smoothed;
  spec.iota = 1.0;
  const FlowField field = make_flow(fwd, y, noise, spec, box);

  Matrix u(2, 2);
  u << -1.0, 0.2, 0.1, 0.3;  // first particle sits on a face
  IntegrationConfig cfg;
  REQUIRE_THROWS_AS(integrate(field, Ensemble(std::move(u)), cfg), DomainError);
}

TEST_CASE("step size underflow reports time and state") {
  FlowField field;
  field.rhs = [](double, const Ensemble&) -> Matrix { throw DomainError("nowhere to go"); };
  const Ensemble e0 = random_interior_ensemble(2, 3, 101);

  IntegrationConfig cfg;
  cfg.t_end = 1.0;
  try {
    integrate(field, e0, cfg);
    FAIL("expected step size underflow");
  } catch (const StepUnderflow& err) {
    REQUIRE(err.time == 0.0);
    REQUIRE((err.state.data() - e0.data()).norm() == 0.0);
  }
}

TEST_CASE("prepare runs at the start and after accepted steps") {
  std::vector<Matrix> prepared;
  FlowField field;
  field.rhs = [](double, const Ensemble& e) { return Matrix(-e.data()); };
  field.prepare = [&](double, const Ensemble& e) { prepared.push_back(e.data()); };
  const Ensemble e0 = random_interior_ensemble(2, 3, 111);

  IntegrationConfig cfg;
  cfg.t_end = 1.0;
  cfg.checkpoint_count = 2;
  const Trajectory traj = integrate(field, e0, cfg);

  REQUIRE(prepared.size() >= 2);
  REQUIRE((prepared.front() - e0.data()).norm() == 0.0);
  REQUIRE((prepared.back() - traj.states.back().data()).norm() == 0.0);
}

TEST_CASE("step cap forces shorter steps") {
  auto count_prepares = [](double max_step) {
    int prepares = 0;
    FlowField field;
    field.rhs = [](double, const Ensemble& e) {
      return Matrix(Matrix::Zero(e.dim(), e.count()));
    };
    field.prepare = [&](double, const Ensemble&) { ++prepares; };
    IntegrationConfig cfg;
    cfg.t_end = 1.0;
    cfg.checkpoint_count = 2;
    cfg.max_step = max_step;
    integrate(field, random_interior_ensemble(1, 1, 121), cfg);
    return prepares;
  };

  const int capped = count_prepares(0.25);
  const int free_run = count_prepares(std::numeric_limits<double>::infinity());
  REQUIRE(capped >= 6);
  REQUIRE(capped > free_run);
}

TEST_CASE("configuration validation") {
  IntegrationConfig cfg;
  cfg.t_end = -1.0;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.t_end = 1.0;
  cfg.rel_tol = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.rel_tol = 1e-6;
  cfg.checkpoint_count = 1;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.checkpoint_count = 2;
  REQUIRE_NOTHROW(cfg.validate());
}
