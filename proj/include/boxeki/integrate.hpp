#pragma once
// Adaptive embedded Runge-Kutta integration of ensemble flows with
// feasibility-aware step control and log-spaced checkpointing.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "boxeki/ensemble.hpp"
#include "boxeki/flows.hpp"

namespace boxeki {

struct IntegrationConfig {
  double t_end = 1.0;
  double rel_tol = 1e-6;
  double abs_tol = 1e-9;
  double max_step = std::numeric_limits<double>::infinity();
  Index checkpoint_count = 30;
  bool feasibility_guard = true;
  std::function<void(double, const Ensemble&)> on_checkpoint;  // optional

  void validate() const {
    if (!(t_end > 0.0)) throw std::invalid_argument("IntegrationConfig: t_end must be positive");
    if (!(rel_tol > 0.0 && abs_tol > 0.0))
      throw std::invalid_argument("IntegrationConfig: tolerances must be positive");
    if (!(max_step > 0.0))
      throw std::invalid_argument("IntegrationConfig: max_step must be positive");
    if (checkpoint_count < 2)
      throw std::invalid_argument("IntegrationConfig: need at least two checkpoints");
  }
};

/// Snapshots of the ensemble at the checkpoint times; one state per time.
struct Trajectory {
  std::vector<double> times;
  std::vector<Ensemble> states;
};

/// Raised when step halving can no longer make progress; carries the point of
/// failure so callers can inspect the offending ensemble.
class StepUnderflow : public std::runtime_error {
 public:
  StepUnderflow(double t, Ensemble e)
      : std::runtime_error("integrate: step size underflow at t = " + std::to_string(t)),
        time(t),
        state(std::move(e)) {}
  double time;
  Ensemble state;
};

/// {0} followed by `count` log-spaced times ending exactly at t_end. The
/// nominal first positive time is 1e-2, pulled in when t_end is tiny.
inline std::vector<double> checkpoint_grid(double t_end, Index count) {
  if (!(t_end > 0.0)) throw std::invalid_argument("checkpoint_grid: t_end must be positive");
  if (count < 2) throw std::invalid_argument("checkpoint_grid: count must be at least 2");
  const double start = (t_end > 1e-2) ? 1e-2 : t_end / 100.0;
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(count) + 1);
  times.push_back(0.0);
  const double ratio = std::log(t_end / start) / static_cast<double>(count - 1);
  for (Index i = 0; i < count; ++i) times.push_back(start * std::exp(ratio * static_cast<double>(i)));
  times.back() = t_end;
  return times;
}

namespace detail {

// Dormand-Prince 5(4) tableau; the last error weight row is b5 - b4.
struct Dopri {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

inline double error_norm(const Matrix& diff, const Matrix& y0, const Matrix& y1, double abs_tol,
                         double rel_tol) {
  double acc = 0.0;
  for (Index j = 0; j < diff.cols(); ++j)
    for (Index i = 0; i < diff.rows(); ++i) {
      const double scale =
          abs_tol + rel_tol * std::max(std::abs(y0(i, j)), std::abs(y1(i, j)));
      const double r = diff(i, j) / scale;
      acc += r * r;
    }
  return std::sqrt(acc / static_cast<double>(diff.size()));
}

}  // namespace detail

/// Integrates the flow from t=0 to cfg.t_end, landing exactly on every
/// checkpoint. Trial steps whose error estimate exceeds 1 shrink by the
/// standard fifth-order controller; steps that exit the flow's domain (rhs
/// rejection or the feasibility guard) are halved. The field's prepare hook
/// runs at t=0 and after every accepted step, never on retries.
inline Trajectory integrate(const FlowField& field, const Ensemble& e0,
                            const IntegrationConfig& cfg) {
  cfg.validate();
  if (!field.rhs) throw std::invalid_argument("integrate: flow field has no rhs");
  if (field.in_domain && !field.in_domain(e0))
    throw DomainError("integrate: initial ensemble is outside the flow domain");

  Trajectory traj;
  traj.times = checkpoint_grid(cfg.t_end, cfg.checkpoint_count);
  traj.states.reserve(traj.times.size());

  Matrix y = e0.data();
  double t = 0.0;
  if (field.prepare) field.prepare(t, e0);

  auto snapshot = [&](double tc) {
    traj.states.emplace_back(Ensemble(Matrix(y)));
    if (cfg.on_checkpoint) cfg.on_checkpoint(tc, traj.states.back());
  };
  snapshot(0.0);

  auto eval = [&](double tt, const Matrix& state) { return field.rhs(tt, Ensemble(Matrix(state))); };

  using D = detail::Dopri;
  double h = std::min(cfg.max_step, traj.times[1]);

  for (std::size_t cp = 1; cp < traj.times.size();) {
    const double target = traj.times[cp];
    double h_try = std::min(h, cfg.max_step);
    const bool clipped = t + h_try >= target;
    if (clipped) h_try = target - t;
    if (!(h_try > 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(t), 1.0)))
      throw StepUnderflow(t, Ensemble(Matrix(y)));

    bool domain_reject = false;
    double err = 0.0;
    Matrix y1;
    try {
      const Matrix k1 = eval(t, y);
      const Matrix k2 = eval(t + D::c2 * h_try, Matrix(y + h_try * (D::a21 * k1)));
      const Matrix k3 = eval(t + D::c3 * h_try, Matrix(y + h_try * (D::a31 * k1 + D::a32 * k2)));
      const Matrix k4 = eval(t + D::c4 * h_try,
                             Matrix(y + h_try * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3)));
      const Matrix k5 =
          eval(t + D::c5 * h_try,
               Matrix(y + h_try * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4)));
      const Matrix k6 = eval(t + h_try, Matrix(y + h_try * (D::a61 * k1 + D::a62 * k2 +
                                                            D::a63 * k3 + D::a64 * k4 +
                                                            D::a65 * k5)));
      y1 = y + h_try * (D::b1 * k1 + D::b3 * k3 + D::b4 * k4 + D::b5 * k5 + D::b6 * k6);
      const Matrix k7 = eval(t + h_try, y1);
      const Matrix diff = h_try * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 +
                                   D::e6 * k6 + D::e7 * k7);
      err = detail::error_norm(diff, y, y1, cfg.abs_tol, cfg.rel_tol);
      if (!std::isfinite(err)) domain_reject = true;
      if (!domain_reject && err <= 1.0 && cfg.feasibility_guard && field.in_domain &&
          !field.in_domain(Ensemble(Matrix(y1))))
        domain_reject = true;
    } catch (const DomainError&) {
      domain_reject = true;
    }

    if (domain_reject) {
      h = 0.5 * h_try;
      continue;
    }
    if (err > 1.0) {
      h = h_try * std::clamp(0.9 * std::pow(err, -0.2), 0.2, 0.9);
      continue;
    }

    t = clipped ? target : t + h_try;
    y = std::move(y1);
    if (field.prepare) field.prepare(t, Ensemble(Matrix(y)));
    const double grow =
        (err < 1e-10) ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h = clipped ? std::max(h, h_try * grow) : h_try * grow;
    if (clipped) {
      snapshot(target);
      ++cp;
    }
  }
  return traj;
}

}  // namespace boxeki
