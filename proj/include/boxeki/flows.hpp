#pragma once
// Discrete Kalman analysis steps and continuous-time ensemble flow fields.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "boxeki/box.hpp"
#include "boxeki/ensemble.hpp"
#include "boxeki/forward.hpp"

namespace boxeki {

enum class Family { eki, esrf };
enum class ConstraintMode { none, projected, barrier_smoothed, transformed, transformed_smoothed };
enum class InflationSchedule { constant, decaying };
enum class NonlinearInflation { off, jacobian };

/// Selection and parameters of one right-hand-side family.
struct FlowSpec {
  Family family = Family::eki;
  ConstraintMode constraint_mode = ConstraintMode::none;
  double iota = 1e3;        // barrier weight of the smoothed flows
  double eps = 1e-3;        // preconditioner floor / constant schedule value
  InflationSchedule schedule = InflationSchedule::constant;
  double alpha = 0.75;      // decaying schedule exponent
  double R = 1.0;           // decaying schedule offset
  double ramp_width = 1e-3;  // velocity smoothing of the face indicator
  double face_width = 1e-3;  // positional smoothing of the face indicator
  double active_tol = 1e-9;  // face detection tolerance for the active set
  NonlinearInflation nonlinear_inflation = NonlinearInflation::off;
  double theta = 0.0;       // additive inflation weight
  Matrix prior_cov;         // C0 for additive inflation; empty when unused

  bool barrier() const {
    return constraint_mode == ConstraintMode::barrier_smoothed ||
           constraint_mode == ConstraintMode::transformed_smoothed;
  }
  bool gated() const {
    return constraint_mode == ConstraintMode::projected ||
           constraint_mode == ConstraintMode::transformed;
  }
  bool preconditioned() const {
    return constraint_mode == ConstraintMode::transformed ||
           constraint_mode == ConstraintMode::transformed_smoothed;
  }
  bool constrained() const { return constraint_mode != ConstraintMode::none; }

  void validate() const {
    if (schedule == InflationSchedule::decaying) {
      if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("FlowSpec: decaying schedule needs alpha in (0,1)");
      if (!(R > 0.0)) throw std::invalid_argument("FlowSpec: decaying schedule needs R > 0");
    }
    if (barrier() && !(iota > 0.0))
      throw std::invalid_argument("FlowSpec: barrier flows need iota > 0");
    if (preconditioned() && schedule == InflationSchedule::constant && !(eps > 0.0))
      throw std::invalid_argument("FlowSpec: transformed flows need eps > 0");
    if (gated() && !(ramp_width > 0.0 && face_width > 0.0))
      throw std::invalid_argument("FlowSpec: gated flows need positive smoothing widths");
    if (theta < 0.0) throw std::invalid_argument("FlowSpec: theta must be nonnegative");
    if (nonlinear_inflation == NonlinearInflation::jacobian &&
        constraint_mode != ConstraintMode::none)
      throw std::invalid_argument("FlowSpec: jacobian inflation only applies unconstrained");
  }
};

/// epsilon(t): the constant value, or 1/(t^alpha + R) when decaying.
inline double inflation_schedule(double t, const FlowSpec& spec) {
  if (!(t >= 0.0)) throw std::invalid_argument("inflation_schedule: t must be nonnegative");
  if (spec.schedule == InflationSchedule::constant) return spec.eps;
  return 1.0 / (std::pow(t, spec.alpha) + spec.R);
}

/// One stochastic analysis step with perturbed observations:
/// u_+ = u + C^{up} (C^{pp} + Gamma)^{-1} (y + eta^(j) - G(u)),
/// eta^(j) fresh N(0, perturb_scale^2 Gamma), one substream per particle index.
inline Ensemble eki_discrete_step(const Ensemble& e, const ForwardMap& fwd, const Vector& y,
                                  const NoiseModel& noise, std::mt19937_64& rng,
                                  double perturb_scale = 1.0) {
  const Matrix images = fwd.map_ensemble(e);
  const Matrix cup = cross_cov(e, images);
  const Matrix cpp = empirical_cov_columns(images);
  Eigen::LLT<Matrix> gain(cpp + noise.covariance());
  if (gain.info() != Eigen::Success)
    throw std::runtime_error("eki_discrete_step: singular innovation covariance");

  const std::uint64_t base = rng();
  Matrix out(e.dim(), e.count());
  for (Index j = 0; j < e.count(); ++j) {
    std::mt19937_64 sub(base + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(j + 1));
    const Vector eta = perturb_scale * noise.sample(sub);
    out.col(j) = e.particle(j) + cup * gain.solve(y + eta - images.col(j));
  }
  return Ensemble(std::move(out));
}

/// Projected analysis step: project, form statistics from projected particles,
/// update against unperturbed y with step-scaled noise h^{-1} Gamma, project.
inline Ensemble projected_eki_step(const Ensemble& e, const ForwardMap& fwd, const Vector& y,
                                   const NoiseModel& noise, const BoxConstraint& box, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("projected_eki_step: h must be positive");
  const Ensemble ep = project(e, box);
  const Matrix images = fwd.map_ensemble(ep);
  const Matrix cup = cross_cov(ep, images);
  const Matrix cpp = empirical_cov_columns(images);
  Eigen::LLT<Matrix> gain(cpp + noise.covariance() / h);
  if (gain.info() != Eigen::Success)
    throw std::runtime_error("projected_eki_step: singular innovation covariance");

  Matrix out(e.dim(), e.count());
  for (Index j = 0; j < e.count(); ++j)
    out.col(j) = project(Vector(ep.particle(j) + cup * gain.solve(y - images.col(j))), box);
  return Ensemble(std::move(out));
}

/// du^(j)/dt = C^{up} Gamma^{-1} (y - G(u^(j))); equals the particle double sum
/// (1/J) sum_k <G(u^(k)) - G(u^(j)), y - G(u^(j))>_Gamma (u^(k) - ubar) and,
/// for linear G, the preconditioned gradient flow -C(u) grad Phi(u^(j)).
inline std::vector<Vector> eki_flow_rhs(const Ensemble& e, const ForwardMap& fwd, const Vector& y,
                                        const NoiseModel& noise) {
  const Matrix images = fwd.map_ensemble(e);
  const Matrix cup = cross_cov(e, images);
  std::vector<Vector> v(static_cast<std::size_t>(e.count()));
  for (Index j = 0; j < e.count(); ++j)
    v[static_cast<std::size_t>(j)] = cup * noise.apply_inverse(Vector(y - images.col(j)));
  return v;
}

/// Deterministic square-root variant: innovation y - (G(u^(j)) + Gbar)/2,
/// i.e. -C(u)(grad Phi(u^(j)) + grad Phi(ubar))/2 in the linear case.
inline std::vector<Vector> esrf_flow_rhs(const Ensemble& e, const ForwardMap& fwd, const Vector& y,
                                         const NoiseModel& noise) {
  const Matrix images = fwd.map_ensemble(e);
  const Matrix cup = cross_cov(e, images);
  const Vector gbar = images.rowwise().mean();
  std::vector<Vector> v(static_cast<std::size_t>(e.count()));
  for (Index j = 0; j < e.count(); ++j)
    v[static_cast<std::size_t>(j)] =
        cup * noise.apply_inverse(Vector(y - 0.5 * images.col(j) - 0.5 * gbar));
  return v;
}

namespace detail {

/// Misfit gradients at every particle through a shared linearization:
/// g_j = Jac^T Gamma^{-1} (G(u^(j)) - y); the ESRF family averages each with
/// the mean gradient. Column j holds g_j.
inline Matrix misfit_gradients(const Matrix& images, const Matrix& jac, const Vector& y,
                               const NoiseModel& noise, Family family) {
  Matrix g = jac.transpose() * noise.apply_inverse(Matrix(images.colwise() - y));
  if (family == Family::esrf) {
    const Vector shift = 0.5 * g.rowwise().mean();
    g *= 0.5;
    g.colwise() += shift;
  }
  return g;
}

inline Matrix jacobian_at_mean(const Ensemble& e, const ForwardMap& fwd, const Matrix* frozen) {
  if (frozen != nullptr && frozen->size() > 0) return *frozen;
  return fwd.jacobian(empirical_mean(e));
}

}  // namespace detail

/// Gated preconditioned flow: p = -D(u) g_j with D built from the ensemble
/// covariance, the active set at the mean, and epsilon(t); constrained
/// components are gated at the faces, the rest move freely.
/// A precomputed Jacobian (shared linearization) may be supplied.
inline std::vector<Vector> transformed_flow_rhs(const Ensemble& e, const ForwardMap& fwd,
                                                const Vector& y, const NoiseModel& noise,
                                                const BoxConstraint& box, const FlowSpec& spec,
                                                double t = 0.0,
                                                const Matrix* jac_at_mean = nullptr) {
  if (!is_feasible(e, box, 1e-9))
    throw DomainError("transformed_flow_rhs: infeasible particle");
  const Matrix images = fwd.map_ensemble(e);
  const Matrix jac = detail::jacobian_at_mean(e, fwd, jac_at_mean);
  const Matrix grads = detail::misfit_gradients(images, jac, y, noise, spec.family);
  const Vector grad_at_mean =
      jac.transpose() * noise.apply_inverse(Vector(images.rowwise().mean() - y));
  const std::vector<Index> active = active_index_set(e, grad_at_mean, box, spec.active_tol);
  const Matrix d =
      transform_preconditioner(empirical_cov(e), active, inflation_schedule(t, spec));

  std::vector<Vector> v(static_cast<std::size_t>(e.count()));
  for (Index j = 0; j < e.count(); ++j) {
    Vector p = -(d * grads.col(j));
    for (Index i = 0; i < box.constrained(); ++i)
      p[i] = gate_component(e.data()(i, j), p[i], box.lower(i), box.upper(i), spec.ramp_width,
                            spec.face_width);
    v[static_cast<std::size_t>(j)] = std::move(p);
  }
  return v;
}

/// Barrier-smoothed flows: -iota P(u) grad Phi(u^(j)) + barrier_gradient(u^(j))
/// with P = C(u) (ensemble form through C^{up}) or P = D(u_t).
inline std::vector<Vector> smoothed_flow_rhs(const Ensemble& e, const ForwardMap& fwd,
                                             const Vector& y, const NoiseModel& noise,
                                             const BoxConstraint& box, const FlowSpec& spec,
                                             double t = 0.0,
                                             const Matrix* jac_at_mean = nullptr) {
  if (!(spec.iota > 0.0)) throw std::invalid_argument("smoothed_flow_rhs: iota must be positive");
  const Matrix images = fwd.map_ensemble(e);
  std::vector<Vector> v(static_cast<std::size_t>(e.count()));

  if (spec.constraint_mode == ConstraintMode::transformed_smoothed) {
    const Matrix jac = detail::jacobian_at_mean(e, fwd, jac_at_mean);
    const Matrix grads = detail::misfit_gradients(images, jac, y, noise, spec.family);
    const Vector grad_at_mean =
        jac.transpose() * noise.apply_inverse(Vector(images.rowwise().mean() - y));
    const std::vector<Index> active = active_index_set(e, grad_at_mean, box, spec.active_tol);
    const Matrix d =
        transform_preconditioner(empirical_cov(e), active, inflation_schedule(t, spec));
    for (Index j = 0; j < e.count(); ++j)
      v[static_cast<std::size_t>(j)] =
          Vector(-spec.iota * (d * grads.col(j)) + barrier_gradient(e.particle(j), box));
    return v;
  }

  // P = C(u): written with the cross covariance, so nonlinear maps stay
  // derivative-free; coincides with -C grad Phi exactly for linear G.
  const Matrix cup = cross_cov(e, images);
  const Vector gbar = images.rowwise().mean();
  for (Index j = 0; j < e.count(); ++j) {
    const Vector innovation = (spec.family == Family::eki)
                                  ? Vector(y - images.col(j))
                                  : Vector(y - 0.5 * images.col(j) - 0.5 * gbar);
    v[static_cast<std::size_t>(j)] =
        Vector(spec.iota * (cup * noise.apply_inverse(innovation)) +
               barrier_gradient(e.particle(j), box));
  }
  return v;
}

/// Additive-inflation flow for maps exposing a Jacobian:
/// du^(j)/dt = (C^{up} + theta C0 Jac(ubar)^T) Gamma^{-1} (y - G(u^(j))).
inline std::vector<Vector> nonlinear_inflated_rhs(const Ensemble& e, const ForwardMap& fwd,
                                                  const Vector& y, const NoiseModel& noise,
                                                  const FlowSpec& spec,
                                                  const Matrix* jac_at_mean = nullptr) {
  if (spec.prior_cov.rows() != e.dim() || spec.prior_cov.cols() != e.dim())
    throw std::invalid_argument("nonlinear_inflated_rhs: prior_cov must be n x n");
  const Matrix images = fwd.map_ensemble(e);
  const Matrix jac = detail::jacobian_at_mean(e, fwd, jac_at_mean);
  const Matrix gain = cross_cov(e, images) + spec.theta * spec.prior_cov * jac.transpose();
  std::vector<Vector> v(static_cast<std::size_t>(e.count()));
  for (Index j = 0; j < e.count(); ++j)
    v[static_cast<std::size_t>(j)] = gain * noise.apply_inverse(Vector(y - images.col(j)));
  return v;
}

/// A flow field ready for integration: the right-hand side as an n x J matrix,
/// an optional domain predicate (strict interior for barrier flows, the closed
/// box for gated ones), and an optional per-step hook that refreshes the
/// shared linearization for nonlinear maps.
struct FlowField {
  std::function<Matrix(double, const Ensemble&)> rhs;
  std::function<bool(const Ensemble&)> in_domain;
  std::function<void(double, const Ensemble&)> prepare;
};

namespace detail {

inline Matrix pack(const std::vector<Vector>& cols) {
  Matrix out(cols.front().size(), static_cast<Index>(cols.size()));
  for (Index j = 0; j < out.cols(); ++j) out.col(j) = cols[static_cast<std::size_t>(j)];
  return out;
}

}  // namespace detail

/// Assembles the right-hand side selected by `spec`. Constrained modes require
/// a box. Nonlinear maps behind preconditioned or inflated flows get their
/// Jacobian frozen at the ensemble mean once per prepare() call.
inline FlowField make_flow(const ForwardMap& fwd, const Vector& y, const NoiseModel& noise,
                           const FlowSpec& spec, std::optional<BoxConstraint> box = {}) {
  spec.validate();
  if (spec.constrained() && !box.has_value())
    throw std::invalid_argument("make_flow: constrained modes require a box");

  FlowField field;
  const bool wants_jacobian =
      spec.preconditioned() || spec.nonlinear_inflation == NonlinearInflation::jacobian;
  std::shared_ptr<Matrix> frozen;  // shared with the rhs lambdas below
  if (wants_jacobian && !fwd.is_linear()) {
    frozen = std::make_shared<Matrix>();
    field.prepare = [frozen, fwd](double, const Ensemble& e) {
      *frozen = fwd.jacobian(empirical_mean(e));
    };
  }

  switch (spec.constraint_mode) {
    case ConstraintMode::none:
      if (spec.nonlinear_inflation == NonlinearInflation::jacobian)
        field.rhs = [=](double, const Ensemble& e) {
          return detail::pack(nonlinear_inflated_rhs(e, fwd, y, noise, spec, frozen.get()));
        };
      else if (spec.family == Family::eki)
        field.rhs = [=](double, const Ensemble& e) {
          return detail::pack(eki_flow_rhs(e, fwd, y, noise));
        };
      else
        field.rhs = [=](double, const Ensemble& e) {
          return detail::pack(esrf_flow_rhs(e, fwd, y, noise));
        };
      break;
    case ConstraintMode::projected: {
      // Continuous limit of the projected analysis step: the plain flow with
      // per-component gating at the faces.
      const BoxConstraint b = *box;
      field.rhs = [=](double, const Ensemble& e) {
        if (!is_feasible(e, b, 1e-9)) throw DomainError("projected flow: infeasible particle");
        std::vector<Vector> v = (spec.family == Family::eki) ? eki_flow_rhs(e, fwd, y, noise)
                                                             : esrf_flow_rhs(e, fwd, y, noise);
        for (Index j = 0; j < e.count(); ++j) {
          Vector& p = v[static_cast<std::size_t>(j)];
          for (Index i = 0; i < b.constrained(); ++i)
            p[i] = gate_component(e.data()(i, j), p[i], b.lower(i), b.upper(i), spec.ramp_width,
                                  spec.face_width);
        }
        return detail::pack(v);
      };
      field.in_domain = [b](const Ensemble& e) { return is_feasible(e, b); };
      break;
    }
    case ConstraintMode::transformed: {
      const BoxConstraint b = *box;
      field.rhs = [=](double t, const Ensemble& e) {
        return detail::pack(transformed_flow_rhs(e, fwd, y, noise, b, spec, t, frozen.get()));
      };
      field.in_domain = [b](const Ensemble& e) { return is_feasible(e, b); };
      break;
    }
    case ConstraintMode::barrier_smoothed:
    case ConstraintMode::transformed_smoothed: {
      const BoxConstraint b = *box;
      field.rhs = [=](double t, const Ensemble& e) {
        return detail::pack(smoothed_flow_rhs(e, fwd, y, noise, b, spec, t, frozen.get()));
      };
      field.in_domain = [b](const Ensemble& e) { return strictly_feasible(e, b); };
      break;
    }
  }
  return field;
}

}  // namespace boxeki
