#pragma once
// Karhunen-Loeve prior sampling and initial-ensemble construction.

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <utility>

#include "boxeki/box.hpp"
#include "boxeki/ensemble.hpp"
#include "boxeki/sine_basis.hpp"

namespace boxeki {

/// Truncated KL expansion of N(0, sigma2 (I - Laplacian)^{-nu}) on the unit
/// square with homogeneous Dirichlet boundary. Eigenfunctions are the sine
/// modes of SineBasis2D, kept symbolically and sampled on a uniform interior
/// grid for discrete inner products.
class KLPrior {
public:
  KLPrior(SineBasis2D basis, Vector eigenvalues, Matrix grid_functions, Index grid_side,
          double sigma2, double nu)
      : basis_(std::move(basis)),
        eigenvalues_(std::move(eigenvalues)),
        grid_functions_(std::move(grid_functions)),
        grid_side_(grid_side),
        sigma2_(sigma2),
        nu_(nu) {}

  Index truncation() const { return eigenvalues_.size(); }
  const SineBasis2D& basis() const { return basis_; }
  const Vector& eigenvalues() const { return eigenvalues_; }
  /// Columns are eigenfunctions at the grid_side^2 interior nodes
  /// ((ix+1)h, (iy+1)h), h = 1/(grid_side+1), lexicographic in (ix, iy).
  const Matrix& grid_functions() const { return grid_functions_; }
  Index grid_side() const { return grid_side_; }
  double sigma2() const { return sigma2_; }
  double nu() const { return nu_; }

  /// Diagonal covariance of the KL coefficient vector.
  Matrix coefficient_covariance() const { return eigenvalues_.asDiagonal(); }

  /// Discrete L2 inner product of two grid-sampled functions.
  double grid_inner_product(const Vector& f, const Vector& g) const {
    const double h = 1.0 / static_cast<double>(grid_side_ + 1);
    return h * h * f.dot(g);
  }

  /// Field value sum_j coeffs_j phi_j(x, y).
  double field(const Vector& coeffs, double x, double y) const {
    return basis_.field(coeffs, x, y);
  }

private:
  SineBasis2D basis_;
  Vector eigenvalues_;
  Matrix grid_functions_;
  Index grid_side_;
  double sigma2_;
  double nu_;
};

/// Eigenpairs lambda_{k,l} = sigma2 (1 + pi^2 (k^2 + l^2))^{-nu} with sine
/// eigenfunctions, in SineBasis2D order (eigenvalues descending).
inline KLPrior build_kl_prior(Index grid_side, double sigma2, double nu, Index truncation) {
  if (!(nu > 1.0)) throw std::invalid_argument("build_kl_prior: need nu > d/2 = 1");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("build_kl_prior: sigma2 must be positive");
  if (truncation < 1) throw std::invalid_argument("build_kl_prior: empty truncation");
  SineBasis2D basis = SineBasis2D::first(truncation);

  // Discrete sine orthogonality needs every frequency below the grid Nyquist.
  Index max_freq = 0;
  for (Index k = 0; k < basis.size(); ++k)
    max_freq = std::max<Index>(max_freq, std::max(basis.mode(k).kx, basis.mode(k).ky));
  if (max_freq > grid_side)
    throw std::invalid_argument("build_kl_prior: truncation exceeds grid capacity");

  Vector eigenvalues(truncation);
  for (Index k = 0; k < truncation; ++k)
    eigenvalues[k] = sigma2 * std::pow(1.0 + basis.laplacian_eigenvalue(k), -nu);

  const double h = 1.0 / static_cast<double>(grid_side + 1);
  Matrix grid_functions(grid_side * grid_side, truncation);
  for (Index k = 0; k < truncation; ++k)
    for (Index iy = 0; iy < grid_side; ++iy)
      for (Index ix = 0; ix < grid_side; ++ix)
        grid_functions(iy * grid_side + ix, k) =
            basis.eval(k, static_cast<double>(ix + 1) * h, static_cast<double>(iy + 1) * h);

  return KLPrior(std::move(basis), std::move(eigenvalues), std::move(grid_functions), grid_side,
                 sigma2, nu);
}

/// J independent coefficient draws u_k = sqrt(lambda_k) xi_k, xi ~ N(0, I).
inline Ensemble kl_sample(const KLPrior& prior, Index count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("kl_sample: count must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix draws(prior.truncation(), count);
  for (Index j = 0; j < count; ++j)
    for (Index i = 0; i < prior.truncation(); ++i)
      draws(i, j) = std::sqrt(prior.eigenvalues()[i]) * normal(rng);
  return Ensemble(std::move(draws));
}

/// Initial ensemble for the 1D experiments: random sine series
/// sum_{k=1..10} xi_k sin(k x), xi_k ~ N(0, k^{-2}), evaluated at the n
/// parameter nodes x_i = length (i+1)/(n+1), projected into the box and pushed
/// strictly inside by `margin`.
inline Ensemble fourier_initial_ensemble(Index n, Index count, std::uint64_t seed,
                                         const BoxConstraint& box, double margin = 1e-6,
                                         double length = std::numbers::pi) {
  if (count < 1) throw std::invalid_argument("fourier_initial_ensemble: count must be positive");
  if (box.dim() != n)
    throw std::invalid_argument("fourier_initial_ensemble: box dimension mismatch");
  constexpr Index kModes = 10;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix particles(n, count);
  for (Index j = 0; j < count; ++j) {
    Vector xi(kModes);
    for (Index k = 0; k < kModes; ++k) xi[k] = normal(rng) / static_cast<double>(k + 1);
    for (Index i = 0; i < n; ++i) {
      const double x = length * static_cast<double>(i + 1) / static_cast<double>(n + 1);
      double s = 0.0;
      for (Index k = 0; k < kModes; ++k) s += xi[k] * std::sin(static_cast<double>(k + 1) * x);
      particles(i, j) = s;
    }
  }
  return interior_pushback(Ensemble(std::move(particles)), box, margin);
}

}  // namespace boxeki
