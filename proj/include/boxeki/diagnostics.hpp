#pragma once
// Per-checkpoint convergence metrics, power-law rate fits, and CSV output.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "boxeki/ensemble.hpp"
#include "boxeki/forward.hpp"

namespace boxeki {

/// Particle-averaged squared metrics at one checkpoint. The observation-space
/// entries generalize |Ae|^2_Gamma to nonlinear maps through image
/// differences; they reduce to the linear forms exactly when G = A.
struct DiagnosticsRecord {
  double t = 0.0;
  double spread = 0.0;        // (1/J) sum |u_j - mean|^2
  double residual = 0.0;      // (1/J) sum |u_j - truth|^2
  double kkt_residual = 0.0;  // (1/J) sum |u_j - u_star|^2
  double obs_spread = 0.0;    // (1/J) sum |G(u_j) - G(mean)|^2_Gamma
  double obs_residual = 0.0;  // (1/J) sum |G(u_j) - G(truth)|^2_Gamma
  double cost_gap = 0.0;      // (1/J) sum (Phi(u_j) - Phi(u_star))^2
};

enum class Metric { spread, residual, kkt_residual, obs_spread, obs_residual, cost_gap };

inline double metric_value(const DiagnosticsRecord& r, Metric m) {
  switch (m) {
    case Metric::spread: return r.spread;
    case Metric::residual: return r.residual;
    case Metric::kkt_residual: return r.kkt_residual;
    case Metric::obs_spread: return r.obs_spread;
    case Metric::obs_residual: return r.obs_residual;
    case Metric::cost_gap: return r.cost_gap;
  }
  throw std::invalid_argument("metric_value: unknown metric");
}

inline DiagnosticsRecord compute_record(const Ensemble& e, const Vector& truth,
                                        const Vector& u_star, const ForwardMap& fwd,
                                        const Vector& y, const NoiseModel& noise, double t) {
  if (truth.size() != e.dim() || u_star.size() != e.dim())
    throw std::invalid_argument("compute_record: reference point dimension mismatch");

  DiagnosticsRecord rec;
  rec.t = t;
  const Vector mean = empirical_mean(e);
  const Vector g_mean = fwd(mean);
  const Vector g_truth = fwd(truth);
  const double phi_star = weighted_misfit(Vector(y - fwd(u_star)), noise);
  const double j = static_cast<double>(e.count());

  for (Index k = 0; k < e.count(); ++k) {
    const Vector u = e.particle(k);
    const Vector gu = fwd(u);
    rec.spread += (u - mean).squaredNorm() / j;
    rec.residual += (u - truth).squaredNorm() / j;
    rec.kkt_residual += (u - u_star).squaredNorm() / j;
    rec.obs_spread += noise.weighted_norm2(Vector(gu - g_mean)) / j;
    rec.obs_residual += noise.weighted_norm2(Vector(gu - g_truth)) / j;
    const double gap = weighted_misfit(Vector(y - gu), noise) - phi_star;
    rec.cost_gap += gap * gap / j;
  }
  return rec;
}

/// Least-squares slope of log(metric) against log(t) over the trailing
/// window t >= window_fraction * t_max (the last decade by default).
inline double estimate_rate(const std::vector<DiagnosticsRecord>& records, Metric metric,
                            double window_fraction = 0.1) {
  if (records.empty()) throw std::invalid_argument("estimate_rate: no records");
  double t_max = 0.0;
  for (const DiagnosticsRecord& r : records) t_max = std::max(t_max, r.t);
  if (!(t_max > 0.0)) throw std::invalid_argument("estimate_rate: no positive times");

  std::vector<double> xs, zs;
  for (const DiagnosticsRecord& r : records) {
    if (r.t < window_fraction * t_max || r.t <= 0.0) continue;
    const double v = metric_value(r, metric);
    if (!(v > 0.0))
      throw std::invalid_argument("estimate_rate: nonpositive metric value in the fit window");
    xs.push_back(std::log(r.t));
    zs.push_back(std::log(v));
  }
  if (xs.size() < 5)
    throw std::invalid_argument("estimate_rate: need at least 5 records in the fit window");

  const double n = static_cast<double>(xs.size());
  double x_bar = 0.0, z_bar = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    x_bar += xs[i] / n;
    z_bar += zs[i] / n;
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - x_bar) * (zs[i] - z_bar);
    den += (xs[i] - x_bar) * (xs[i] - x_bar);
  }
  return num / den;
}

inline void write_csv(std::ostream& out, const std::vector<DiagnosticsRecord>& records) {
  out << "t,spread,residual,kkt_residual,obs_spread,obs_residual,cost_gap\n";
  char buf[64];
  for (const DiagnosticsRecord& r : records) {
    const double vals[7] = {r.t,          r.spread,       r.residual, r.kkt_residual,
                            r.obs_spread, r.obs_residual, r.cost_gap};
    for (int i = 0; i < 7; ++i) {
      std::snprintf(buf, sizeof(buf), "%.16e", vals[i]);
      out << (i ? "," : "") << buf;
    }
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const std::vector<DiagnosticsRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  write_csv(out, records);
}

}  // namespace boxeki
