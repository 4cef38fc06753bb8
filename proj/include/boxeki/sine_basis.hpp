#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "boxeki/ensemble.hpp"

namespace boxeki {

/// L2-orthonormal Dirichlet eigenfunctions of the Laplacian on (0,1)^2,
/// phi_{k,l}(x,y) = 2 sin(k pi x) sin(l pi y), ordered by increasing
/// eigenvalue pi^2 (k^2 + l^2) with deterministic tie-breaking.
class SineBasis2D {
public:
  struct Mode {
    int kx, ky;
  };

  static SineBasis2D first(Index count) {
    if (count < 1) throw std::invalid_argument("SineBasis2D: count must be positive");
    // Enumerate a generous square of modes, then keep the leading ones.
    const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count)))) + 2;
    std::vector<Mode> modes;
    for (int kx = 1; kx <= side; ++kx)
      for (int ky = 1; ky <= side; ++ky) modes.push_back({kx, ky});
    std::stable_sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) {
      const int ea = a.kx * a.kx + a.ky * a.ky, eb = b.kx * b.kx + b.ky * b.ky;
      if (ea != eb) return ea < eb;
      if (a.kx != b.kx) return a.kx < b.kx;
      return a.ky < b.ky;
    });
    SineBasis2D basis;
    basis.modes_.assign(modes.begin(), modes.begin() + count);
    return basis;
  }

  Index size() const { return static_cast<Index>(modes_.size()); }
  const Mode& mode(Index k) const { return modes_[static_cast<size_t>(k)]; }

  /// Laplacian eigenvalue pi^2 (kx^2 + ky^2) of mode k.
  double laplacian_eigenvalue(Index k) const {
    const Mode& m = modes_[static_cast<size_t>(k)];
    return std::numbers::pi * std::numbers::pi * static_cast<double>(m.kx * m.kx + m.ky * m.ky);
  }

  double eval(Index k, double x, double y) const {
    const Mode& m = modes_[static_cast<size_t>(k)];
    return 2.0 * std::sin(m.kx * std::numbers::pi * x) * std::sin(m.ky * std::numbers::pi * y);
  }

  /// Field value sum_k coeffs_k phi_k(x, y).
  double field(const Vector& coeffs, double x, double y) const {
    if (coeffs.size() != size()) throw std::invalid_argument("SineBasis2D: coefficient mismatch");
    double v = 0.0;
    for (Index k = 0; k < size(); ++k) v += coeffs[k] * eval(k, x, y);
    return v;
  }

private:
  std::vector<Mode> modes_;
};

}  // namespace boxeki
