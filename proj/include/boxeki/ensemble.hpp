#pragma once

#include <Eigen/Dense>
#include <random>
#include <stdexcept>
#include <utility>

namespace boxeki {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Thrown when an input leaves the domain of an operation (e.g. a barrier
/// term evaluated on or outside a face). The ODE driver treats this as a
/// rejected trial step, so it must stay distinguishable from hard errors.
class DomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Ordered collection of J parameter vectors in R^n, stored column-wise.
/// Value semantics; snapshots taken during integration are deep copies.
class Ensemble {
public:
  Ensemble() = default;

  explicit Ensemble(Matrix particles) : data_(std::move(particles)) {
    if (data_.cols() < 1)
      throw std::invalid_argument("Ensemble: at least one particle required");
    if (data_.rows() < 1)
      throw std::invalid_argument("Ensemble: parameter dimension must be positive");
  }

  Index dim() const { return data_.rows(); }
  Index count() const { return data_.cols(); }

  Vector particle(Index j) const { return data_.col(j); }
  Matrix::ColXpr col(Index j) { return data_.col(j); }

  const Matrix& data() const { return data_; }
  Matrix& data() { return data_; }

private:
  Matrix data_;
};

/// Gaussian observation noise N(0, Gamma). Gamma must be symmetric positive
/// definite; its Cholesky factor is cached once so repeated weighted inner
/// products and samples reuse the factorization.
class NoiseModel {
public:
  explicit NoiseModel(Matrix gamma) : gamma_(std::move(gamma)) {
    if (gamma_.rows() != gamma_.cols())
      throw std::invalid_argument("NoiseModel: covariance must be square");
    const double scale = gamma_.cwiseAbs().maxCoeff();
    if (!(scale > 0.0))
      throw std::invalid_argument("NoiseModel: covariance must be nonzero");
    if ((gamma_ - gamma_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw std::invalid_argument("NoiseModel: covariance must be symmetric");
    llt_.compute(gamma_);
    if (llt_.info() != Eigen::Success)
      throw std::invalid_argument("NoiseModel: covariance must be positive definite");
  }

  /// Isotropic noise gamma^2 * I_k.
  static NoiseModel isotropic(Index k, double gamma) {
    if (!(gamma > 0.0))
      throw std::invalid_argument("NoiseModel: gamma must be positive");
    return NoiseModel(Matrix(gamma * gamma * Matrix::Identity(k, k)));
  }

  Index dim() const { return gamma_.rows(); }
  const Matrix& covariance() const { return gamma_; }

  Vector apply_inverse(const Vector& v) const { return llt_.solve(v); }
  Matrix apply_inverse(const Matrix& m) const { return llt_.solve(m); }

  /// <a, b>_Gamma = a^T Gamma^{-1} b.
  double weighted_ip(const Vector& a, const Vector& b) const {
    return a.dot(llt_.solve(b));
  }

  /// |r|_Gamma^2 = r^T Gamma^{-1} r.
  double weighted_norm2(const Vector& r) const { return weighted_ip(r, r); }

  /// Draw one sample of N(0, Gamma) from the given engine.
  Vector sample(std::mt19937_64& rng) const {
    std::normal_distribution<double> unit(0.0, 1.0);
    Vector z(dim());
    for (Index i = 0; i < dim(); ++i) z[i] = unit(rng);
    return llt_.matrixL() * z;
  }

private:
  Matrix gamma_;
  Eigen::LLT<Matrix> llt_;
};

/// ubar = (1/J) sum_j u^(j).
inline Vector empirical_mean(const Ensemble& e) {
  return e.data().rowwise().mean();
}

/// C(u) = (1/J) sum_j (u^(j) - ubar)(u^(j) - ubar)^T.
/// Normalization is 1/J, not 1/(J-1); rank <= J - 1.
inline Matrix empirical_cov(const Ensemble& e) {
  const Matrix dev = e.data().colwise() - e.data().rowwise().mean().eval();
  return (dev * dev.transpose()) / static_cast<double>(e.count());
}

/// Covariance of raw column samples with the same 1/J normalization.
inline Matrix empirical_cov_columns(const Matrix& columns) {
  const Matrix dev = columns.colwise() - columns.rowwise().mean().eval();
  return (dev * dev.transpose()) / static_cast<double>(columns.cols());
}

/// C^{up} = (1/J) sum_j (u^(j) - ubar)(g^(j) - gbar)^T for images g^(j)
/// stored column-wise (one column per particle).
inline Matrix cross_cov(const Ensemble& e, const Matrix& images) {
  if (images.cols() != e.count())
    throw std::invalid_argument("cross_cov: one image column per particle required");
  const Matrix du = e.data().colwise() - e.data().rowwise().mean().eval();
  const Matrix dg = images.colwise() - images.rowwise().mean().eval();
  return (du * dg.transpose()) / static_cast<double>(e.count());
}

/// Phi(r) = 1/2 r^T Gamma^{-1} r.
inline double weighted_misfit(const Vector& r, const NoiseModel& noise) {
  return 0.5 * noise.weighted_norm2(r);
}

}  // namespace boxeki
