#pragma once

#include <functional>
#include <stdexcept>
#include <utility>

#include "boxeki/ensemble.hpp"

namespace boxeki {

/// Observation operator G: R^n -> R^K. Linear maps carry their matrix so
/// gradients are exact; nonlinear maps provide a Jacobian callback (used
/// only as a preconditioner ingredient, so low accuracy is acceptable).
class ForwardMap {
public:
  static ForwardMap linear(Matrix a) {
    ForwardMap f;
    f.a_ = std::move(a);
    return f;
  }

  static ForwardMap nonlinear(Index param_dim, Index obs_dim,
                              std::function<Vector(const Vector&)> apply,
                              std::function<Matrix(const Vector&)> jacobian) {
    ForwardMap f;
    f.apply_ = std::move(apply);
    f.jacobian_ = std::move(jacobian);
    f.param_dim_ = param_dim;
    f.obs_dim_ = obs_dim;
    return f;
  }

  bool is_linear() const { return a_.size() > 0; }

  Index param_dim() const { return is_linear() ? a_.cols() : param_dim_; }
  Index obs_dim() const { return is_linear() ? a_.rows() : obs_dim_; }

  const Matrix& matrix() const {
    if (!is_linear()) throw std::logic_error("ForwardMap: nonlinear map has no matrix");
    return a_;
  }

  Vector operator()(const Vector& u) const { return is_linear() ? Vector(a_ * u) : apply_(u); }

  Matrix jacobian(const Vector& u) const {
    if (is_linear()) return a_;
    if (!jacobian_) throw std::logic_error("ForwardMap: no jacobian provided");
    return jacobian_(u);
  }

  /// One image column per particle.
  Matrix map_ensemble(const Ensemble& e) const {
    if (is_linear()) return a_ * e.data();
    Matrix images(obs_dim(), e.count());
    for (Index j = 0; j < e.count(); ++j) images.col(j) = apply_(e.particle(j));
    return images;
  }

private:
  Matrix a_;
  std::function<Vector(const Vector&)> apply_;
  std::function<Matrix(const Vector&)> jacobian_;
  Index param_dim_ = 0, obs_dim_ = 0;
};

/// Phi(u) = 1/2 |y - A u|_Gamma^2 and its gradient A^T Gamma^{-1} (A u - y)
/// for linear observation operators.
inline std::pair<double, Vector> misfit_and_grad(const Vector& u, const ForwardMap& fwd,
                                                 const Vector& y, const NoiseModel& noise) {
  const Matrix& a = fwd.matrix();
  const Vector r = a * u - y;
  const Vector w = noise.apply_inverse(r);
  return {0.5 * r.dot(w), a.transpose() * w};
}

}  // namespace boxeki
