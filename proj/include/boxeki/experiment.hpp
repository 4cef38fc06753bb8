#pragma once
// Config-driven experiment runner: assembles the benchmark inverse problems,
// integrates each requested method's flow, and serializes diagnostics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "boxeki/box.hpp"
#include "boxeki/darcy2d.hpp"
#include "boxeki/diagnostics.hpp"
#include "boxeki/elliptic1d.hpp"
#include "boxeki/ensemble.hpp"
#include "boxeki/flows.hpp"
#include "boxeki/forward.hpp"
#include "boxeki/integrate.hpp"
#include "boxeki/kkt.hpp"
#include "boxeki/prior.hpp"

namespace boxeki {

/// Invalid or inconsistent experiment configuration. Messages carry the
/// dotted field path so users can locate the offending entry.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ExperimentConfig {
  // problem
  std::string kind;              // "linear_sine" | "darcy"
  Index dim = 0;                 // parameter dimension n
  Index observations = 0;        // K (linear problems only)
  double gamma = 0.0;            // isotropic noise stddev
  std::uint64_t data_seed = 0;   // observation-noise draw
  Vector truth;                  // length dim, recorded explicitly
  Vector lower, upper;           // box bounds, length dim
  double mesh_fraction = 1.0 / 256.0;  // linear FEM cell width / length
  Index mesh_cells = 16;               // darcy grid cells per side
  double prior_sigma2 = 1.0;           // darcy KL prior
  double prior_nu = 2.0;
  Index prior_grid = 32;

  // method
  std::vector<std::string> methods;
  Index ensemble_size = 5;
  double init_margin = 1e-2;  // pushback distance of the initial ensemble

  // flow
  FlowSpec flow;  // constraint_mode is set per method at run time

  // integration
  IntegrationConfig integration;

  // output
  std::string out_dir = "results";
  std::uint64_t seed = 1;
};

namespace detail {

[[noreturn]] inline void config_fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

inline const nlohmann::json& need(const nlohmann::json& obj, const char* key,
                                  const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) config_fail(path + "." + key, "missing required field");
  return *it;
}

inline double need_number(const nlohmann::json& obj, const char* key, const std::string& path) {
  const nlohmann::json& v = need(obj, key, path);
  if (!v.is_number()) config_fail(path + "." + key, "must be a number");
  return v.get<double>();
}

inline double opt_number(const nlohmann::json& obj, const char* key, const std::string& path,
                         double fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number()) config_fail(path + "." + key, "must be a number");
  return it->get<double>();
}

inline Index need_index(const nlohmann::json& obj, const char* key, const std::string& path) {
  const nlohmann::json& v = need(obj, key, path);
  if (!v.is_number_integer()) config_fail(path + "." + key, "must be an integer");
  return v.get<Index>();
}

inline Index opt_index(const nlohmann::json& obj, const char* key, const std::string& path,
                       Index fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number_integer()) config_fail(path + "." + key, "must be an integer");
  return it->get<Index>();
}

inline std::uint64_t opt_seed(const nlohmann::json& obj, const char* key, const std::string& path,
                              std::uint64_t fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number_unsigned() && !it->is_number_integer())
    config_fail(path + "." + key, "must be a nonnegative integer");
  if (it->is_number_integer() && it->get<long long>() < 0)
    config_fail(path + "." + key, "must be a nonnegative integer");
  return it->get<std::uint64_t>();
}

inline std::string opt_string(const nlohmann::json& obj, const char* key, const std::string& path,
                              const std::string& fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_string()) config_fail(path + "." + key, "must be a string");
  return it->get<std::string>();
}

inline bool opt_bool(const nlohmann::json& obj, const char* key, const std::string& path,
                     bool fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) config_fail(path + "." + key, "must be a boolean");
  return it->get<bool>();
}

inline Vector need_vector(const nlohmann::json& obj, const char* key, const std::string& path,
                          Index expected) {
  const nlohmann::json& v = need(obj, key, path);
  if (!v.is_array()) config_fail(path + "." + key, "must be an array of numbers");
  if (static_cast<Index>(v.size()) != expected)
    config_fail(path + "." + key, "must have length " + std::to_string(expected) + " (got " +
                                      std::to_string(v.size()) + ")");
  Vector out(expected);
  for (Index i = 0; i < expected; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number())
      config_fail(path + "." + key, "entry " + std::to_string(i) + " must be a number");
    out[i] = v[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

/// Bound entry: scalar broadcast to `dim`, or an explicit array of length dim.
inline Vector bound_vector(const nlohmann::json& box, const char* key, Index dim) {
  const nlohmann::json& v = need(box, key, "problem.box");
  if (v.is_number()) return Vector::Constant(dim, v.get<double>());
  return need_vector(box, key, "problem.box", dim);
}

inline void validate_method_name(const std::string& name) {
  if (name != "eki" && name != "projected" && name != "transformed")
    config_fail("method.list",
                "unknown method '" + name + "' (expected eki, projected, or transformed)");
}

constexpr std::array<std::pair<Metric, const char*>, 6> kMetricNames = {{
    {Metric::spread, "spread"},
    {Metric::residual, "residual"},
    {Metric::kkt_residual, "kkt_residual"},
    {Metric::obs_spread, "obs_spread"},
    {Metric::obs_residual, "obs_residual"},
    {Metric::cost_gap, "cost_gap"},
}};

inline nlohmann::json json_array(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

}  // namespace detail

inline void set_methods(ExperimentConfig& cfg, const std::vector<std::string>& methods) {
  if (methods.empty()) detail::config_fail("method.list", "must list at least one method");
  for (const std::string& m : methods) {
    detail::validate_method_name(m);
    if (std::count(methods.begin(), methods.end(), m) != 1)
      detail::config_fail("method.list", "method '" + m + "' listed more than once");
  }
  cfg.methods = methods;
}

inline ExperimentConfig parse_config(const nlohmann::json& root) {
  using namespace detail;
  if (!root.is_object()) config_fail("config", "top level must be a JSON object");
  ExperimentConfig cfg;

  const nlohmann::json& problem = need(root, "problem", "config");
  cfg.kind = opt_string(problem, "kind", "problem", "");
  if (cfg.kind != "linear_sine" && cfg.kind != "darcy")
    config_fail("problem.kind", "must be 'linear_sine' or 'darcy'");
  cfg.dim = need_index(problem, "dim", "problem");
  if (cfg.dim < 1) config_fail("problem.dim", "must be positive");
  cfg.gamma = need_number(problem, "gamma", "problem");
  if (!(cfg.gamma > 0.0)) config_fail("problem.gamma", "must be positive");
  cfg.data_seed = opt_seed(problem, "data_seed", "problem", 0);
  cfg.truth = need_vector(problem, "truth", "problem", cfg.dim);

  const nlohmann::json& box = need(problem, "box", "problem");
  if (!box.is_object()) config_fail("problem.box", "must be an object with lower and upper");
  cfg.lower = bound_vector(box, "lower", cfg.dim);
  cfg.upper = bound_vector(box, "upper", cfg.dim);
  for (Index i = 0; i < cfg.dim; ++i) {
    if (!(cfg.lower[i] < cfg.upper[i]))
      config_fail("problem.box", "lower bound must be strictly below upper bound at component " +
                                     std::to_string(i) + " (lower = " +
                                     std::to_string(cfg.lower[i]) + ", upper = " +
                                     std::to_string(cfg.upper[i]) + ")");
  }

  if (cfg.kind == "linear_sine") {
    cfg.observations = need_index(problem, "observations", "problem");
    if (cfg.observations < 1) config_fail("problem.observations", "must be positive");
    cfg.mesh_fraction = opt_number(problem, "mesh_fraction", "problem", 1.0 / 256.0);
    if (!(cfg.mesh_fraction > 0.0 && cfg.mesh_fraction < 0.5))
      config_fail("problem.mesh_fraction", "must lie in (0, 0.5)");
  } else {
    cfg.mesh_cells = opt_index(problem, "mesh_cells", "problem", 16);
    if (cfg.mesh_cells < 4) config_fail("problem.mesh_cells", "must be at least 4");
    if (const auto it = problem.find("prior"); it != problem.end()) {
      if (!it->is_object()) config_fail("problem.prior", "must be an object");
      cfg.prior_sigma2 = opt_number(*it, "sigma2", "problem.prior", 1.0);
      cfg.prior_nu = opt_number(*it, "nu", "problem.prior", 2.0);
      cfg.prior_grid = opt_index(*it, "grid_side", "problem.prior", 32);
    }
    if (!(cfg.prior_sigma2 > 0.0)) config_fail("problem.prior.sigma2", "must be positive");
    if (!(cfg.prior_nu > 1.0)) config_fail("problem.prior.nu", "must exceed 1");
    if (cfg.prior_grid < 2) config_fail("problem.prior.grid_side", "must be at least 2");
  }

  const nlohmann::json& method = need(root, "method", "config");
  const nlohmann::json& list = need(method, "list", "method");
  if (!list.is_array()) config_fail("method.list", "must be an array of method names");
  std::vector<std::string> names;
  for (const auto& entry : list) {
    if (!entry.is_string()) config_fail("method.list", "entries must be strings");
    names.push_back(entry.get<std::string>());
  }
  set_methods(cfg, names);
  cfg.ensemble_size = opt_index(method, "ensemble_size", "method", 5);
  if (cfg.ensemble_size < 2) config_fail("method.ensemble_size", "must be at least 2");
  cfg.init_margin = opt_number(method, "init_margin", "method", 1e-2);
  if (!(cfg.init_margin > 0.0)) config_fail("method.init_margin", "must be positive");

  if (const auto it = root.find("flow"); it != root.end()) {
    if (!it->is_object()) config_fail("flow", "must be an object");
    const nlohmann::json& flow = *it;
    const std::string family = opt_string(flow, "family", "flow", "eki");
    if (family == "eki") cfg.flow.family = Family::eki;
    else if (family == "esrf") cfg.flow.family = Family::esrf;
    else config_fail("flow.family", "must be 'eki' or 'esrf'");
    const std::string schedule = opt_string(flow, "schedule", "flow", "decaying");
    if (schedule == "constant") cfg.flow.schedule = InflationSchedule::constant;
    else if (schedule == "decaying") cfg.flow.schedule = InflationSchedule::decaying;
    else config_fail("flow.schedule", "must be 'constant' or 'decaying'");
    cfg.flow.iota = opt_number(flow, "iota", "flow", cfg.flow.iota);
    cfg.flow.eps = opt_number(flow, "eps", "flow", cfg.flow.eps);
    cfg.flow.alpha = opt_number(flow, "alpha", "flow", cfg.flow.alpha);
    cfg.flow.R = opt_number(flow, "R", "flow", cfg.flow.R);
    cfg.flow.ramp_width = opt_number(flow, "ramp_width", "flow", cfg.flow.ramp_width);
    cfg.flow.face_width = opt_number(flow, "face_width", "flow", cfg.flow.face_width);
    cfg.flow.active_tol = opt_number(flow, "active_tol", "flow", cfg.flow.active_tol);
  } else {
    cfg.flow.schedule = InflationSchedule::decaying;
  }

  const nlohmann::json& integration = need(root, "integration", "config");
  cfg.integration.t_end = need_number(integration, "t_end", "integration");
  cfg.integration.rel_tol = opt_number(integration, "rel_tol", "integration", 1e-6);
  cfg.integration.abs_tol = opt_number(integration, "abs_tol", "integration", 1e-9);
  cfg.integration.max_step =
      opt_number(integration, "max_step", "integration", cfg.integration.max_step);
  cfg.integration.checkpoint_count =
      opt_index(integration, "checkpoint_count", "integration", 30);
  cfg.integration.feasibility_guard =
      opt_bool(integration, "feasibility_guard", "integration", true);

  if (const auto it = root.find("output"); it != root.end()) {
    if (!it->is_object()) config_fail("output", "must be an object");
    cfg.out_dir = opt_string(*it, "dir", "output", cfg.out_dir);
    cfg.seed = opt_seed(*it, "seed", "output", cfg.seed);
  }

  // Shared validation of the numeric flow and integration parameters.
  try {
    FlowSpec probe = cfg.flow;
    probe.constraint_mode = ConstraintMode::transformed;
    probe.validate();
    cfg.integration.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: parse failure in '" + path + "': " + e.what());
  }
  return parse_config(root);
}

/// Resolved-config echo with every default filled in; same shape as the input.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  using detail::json_array;
  nlohmann::json problem{{"kind", cfg.kind},
                         {"dim", cfg.dim},
                         {"gamma", cfg.gamma},
                         {"data_seed", cfg.data_seed},
                         {"truth", json_array(cfg.truth)},
                         {"box", {{"lower", json_array(cfg.lower)}, {"upper", json_array(cfg.upper)}}}};
  if (cfg.kind == "linear_sine") {
    problem["observations"] = cfg.observations;
    problem["mesh_fraction"] = cfg.mesh_fraction;
  } else {
    problem["mesh_cells"] = cfg.mesh_cells;
    problem["prior"] = {{"sigma2", cfg.prior_sigma2}, {"nu", cfg.prior_nu},
                        {"grid_side", cfg.prior_grid}};
  }
  const nlohmann::json flow{
      {"family", cfg.flow.family == Family::eki ? "eki" : "esrf"},
      {"schedule", cfg.flow.schedule == InflationSchedule::constant ? "constant" : "decaying"},
      {"iota", cfg.flow.iota},
      {"eps", cfg.flow.eps},
      {"alpha", cfg.flow.alpha},
      {"R", cfg.flow.R},
      {"ramp_width", cfg.flow.ramp_width},
      {"face_width", cfg.flow.face_width},
      {"active_tol", cfg.flow.active_tol}};
  nlohmann::json integration{{"t_end", cfg.integration.t_end},
                             {"rel_tol", cfg.integration.rel_tol},
                             {"abs_tol", cfg.integration.abs_tol},
                             {"checkpoint_count", cfg.integration.checkpoint_count},
                             {"feasibility_guard", cfg.integration.feasibility_guard}};
  if (std::isfinite(cfg.integration.max_step)) integration["max_step"] = cfg.integration.max_step;
  return nlohmann::json{
      {"problem", problem},
      {"method", {{"list", cfg.methods}, {"ensemble_size", cfg.ensemble_size},
                  {"init_margin", cfg.init_margin}}},
      {"flow", flow},
      {"integration", integration},
      {"output", {{"dir", cfg.out_dir}, {"seed", cfg.seed}}}};
}

/// Gauss-Newton outer loop around the box least-squares solver; the KKT
/// reference for nonlinear forward maps. Multipliers come from the final
/// linearization.
inline KKTPoint solve_box_gauss_newton(const ForwardMap& fwd, const Vector& y,
                                       const NoiseModel& noise, const BoxConstraint& box,
                                       const Vector& start, int max_outer = 40) {
  Vector u = project(start, box);
  KKTPoint point{u, Vector::Zero(2 * box.constrained())};
  for (int it = 0; it < max_outer; ++it) {
    const Matrix jac = fwd.jacobian(u);
    const Vector z = y - fwd(u) + jac * u;  // linearized data
    point = solve_box_ls(jac, z, noise, box, u);
    const double move = (point.u - u).norm();
    u = point.u;
    if (move <= 1e-12 * (1.0 + u.norm())) break;
  }
  return point;
}

struct ProblemSetup {
  ForwardMap fwd;
  NoiseModel noise;
  Vector y;
  Vector truth;
  BoxConstraint box;
  Ensemble initial;
  KKTPoint kkt;
};

inline ProblemSetup build_problem(const ExperimentConfig& cfg) {
  BoxConstraint box(cfg.lower, cfg.upper, cfg.dim);
  std::mt19937_64 data_rng(cfg.data_seed);
  if (cfg.kind == "linear_sine") {
    const EllipticProblem1D problem(cfg.dim, cfg.mesh_fraction);
    ForwardMap fwd =
        assemble_elliptic_1d(problem, uniform_interior_points(cfg.observations, problem.length()));
    NoiseModel noise = NoiseModel::isotropic(cfg.observations, cfg.gamma);
    Vector y = fwd(cfg.truth) + noise.sample(data_rng);
    Ensemble initial = fourier_initial_ensemble(cfg.dim, cfg.ensemble_size, cfg.seed, box,
                                                cfg.init_margin, problem.length());
    KKTPoint kkt = solve_box_ls(fwd.matrix(), y, noise, box);
    return ProblemSetup{std::move(fwd), std::move(noise), std::move(y),
                        cfg.truth,       box,              std::move(initial),
                        std::move(kkt)};
  }
  const DarcyProblem2D problem(cfg.dim, cfg.mesh_cells);
  ForwardMap fwd = problem.as_forward_map();
  NoiseModel noise = NoiseModel::isotropic(problem.obs_count(), cfg.gamma);
  Vector y = fwd(cfg.truth) + noise.sample(data_rng);
  const KLPrior prior = build_kl_prior(cfg.prior_grid, cfg.prior_sigma2, cfg.prior_nu, cfg.dim);
  Ensemble initial =
      interior_pushback(kl_sample(prior, cfg.ensemble_size, cfg.seed), box, cfg.init_margin);
  KKTPoint kkt = solve_box_gauss_newton(fwd, y, noise, box, project(cfg.truth, box));
  return ProblemSetup{std::move(fwd), std::move(noise), std::move(y),
                      cfg.truth,       box,              std::move(initial),
                      std::move(kkt)};
}

inline FlowSpec method_flow_spec(const ExperimentConfig& cfg, const std::string& method) {
  FlowSpec spec = cfg.flow;
  if (method == "eki") spec.constraint_mode = ConstraintMode::none;
  else if (method == "projected") spec.constraint_mode = ConstraintMode::projected;
  else spec.constraint_mode = ConstraintMode::transformed;
  return spec;
}

struct MethodRun {
  std::string method;
  std::vector<DiagnosticsRecord> records;
  bool completed = true;
  std::string failure;
  bool feasible_at_checkpoints = true;  // against the configured box, exact
  bool terminal_feasible = true;
  std::map<std::string, double> slopes;  // metrics whose tail admits a log fit
};

inline MethodRun run_method(const ExperimentConfig& cfg, const ProblemSetup& p,
                            const std::string& method) {
  MethodRun out;
  out.method = method;
  const FlowSpec spec = method_flow_spec(cfg, method);
  std::optional<BoxConstraint> box;
  if (spec.constrained()) box = p.box;
  const FlowField field = make_flow(p.fwd, p.y, p.noise, spec, box);

  IntegrationConfig icfg = cfg.integration;
  icfg.on_checkpoint = [&](double t, const Ensemble& e) {
    out.records.push_back(compute_record(e, p.truth, p.kkt.u, p.fwd, p.y, p.noise, t));
    out.terminal_feasible = is_feasible(e, p.box);
    if (!out.terminal_feasible) out.feasible_at_checkpoints = false;
  };
  try {
    integrate(field, p.initial, icfg);
  } catch (const std::exception& e) {
    out.completed = false;
    out.failure = e.what();
  }
  for (const auto& [metric, name] : detail::kMetricNames) {
    try {
      out.slopes[name] = estimate_rate(out.records, metric);
    } catch (const std::invalid_argument&) {
      // tail not fittable (zeros or too few checkpoints); omit
    }
  }
  return out;
}

struct ExperimentResult {
  ExperimentConfig config;
  Vector kkt_u;
  Vector kkt_multipliers;
  std::vector<MethodRun> runs;
  bool all_completed = true;
};

/// Runs every configured method on the shared problem instance. Methods are
/// independent jobs over immutable shared state, so they run concurrently.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const ProblemSetup p = build_problem(cfg);
  ExperimentResult result;
  result.config = cfg;
  result.kkt_u = p.kkt.u;
  result.kkt_multipliers = p.kkt.multipliers;

  std::vector<std::future<MethodRun>> jobs;
  jobs.reserve(cfg.methods.size());
  for (const std::string& method : cfg.methods)
    jobs.push_back(std::async(std::launch::async,
                              [&cfg, &p, method] { return run_method(cfg, p, method); }));
  for (auto& job : jobs) {
    result.runs.push_back(job.get());
    result.all_completed = result.all_completed && result.runs.back().completed;
  }
  return result;
}

inline const MethodRun* find_run(const ExperimentResult& r, const std::string& method) {
  for (const MethodRun& run : r.runs)
    if (run.method == method) return &run;
  return nullptr;
}

/// True when both the transformed and projected methods produced records and
/// the transformed terminal cost gap is strictly smaller.
inline std::optional<bool> transformed_below_projected(const ExperimentResult& r) {
  const MethodRun* a = find_run(r, "transformed");
  const MethodRun* b = find_run(r, "projected");
  if (!a || !b || a->records.empty() || b->records.empty()) return std::nullopt;
  return a->records.back().cost_gap < b->records.back().cost_gap;
}

/// Fixed-width side-by-side table of terminal metrics, one row per method.
inline std::string compare_methods(const ExperimentResult& r) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-12s %-12s %-12s %-12s %-12s %-12s %-12s %s\n", "method",
                "spread", "residual", "kkt_residual", "obs_spread", "obs_residual", "cost_gap",
                "feasible");
  out << buf;
  for (const MethodRun& run : r.runs) {
    if (!run.completed || run.records.empty()) {
      std::snprintf(buf, sizeof(buf), "%-12s failed: %s\n", run.method.c_str(),
                    run.failure.c_str());
      out << buf;
      continue;
    }
    const DiagnosticsRecord& t = run.records.back();
    std::snprintf(buf, sizeof(buf), "%-12s %-12.3e %-12.3e %-12.3e %-12.3e %-12.3e %-12.3e %s\n",
                  run.method.c_str(), t.spread, t.residual, t.kkt_residual, t.obs_spread,
                  t.obs_residual, t.cost_gap, run.feasible_at_checkpoints ? "yes" : "no");
    out << buf;
  }
  if (const auto flag = transformed_below_projected(r)) {
    const double a = find_run(r, "transformed")->records.back().cost_gap;
    const double b = find_run(r, "projected")->records.back().cost_gap;
    std::snprintf(buf, sizeof(buf),
                  "transformed cost_gap %.3e is %sbelow projected cost_gap %.3e\n", a,
                  *flag ? "" : "NOT ", b);
    out << buf;
  }
  return out.str();
}

/// Writes <out>/<method>.csv per run plus <out>/summary.json (terminal
/// metrics, fitted slopes, KKT reference, resolved config echo).
inline void write_outputs(const ExperimentResult& r, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json methods = nlohmann::json::object();
  for (const MethodRun& run : r.runs) {
    write_csv(out_dir + "/" + run.method + ".csv", run.records);
    nlohmann::json entry{{"completed", run.completed},
                         {"feasible_at_checkpoints", run.feasible_at_checkpoints},
                         {"terminal_feasible", run.terminal_feasible},
                         {"slopes", run.slopes}};
    if (!run.completed) entry["failure"] = run.failure;
    if (!run.records.empty()) {
      const DiagnosticsRecord& t = run.records.back();
      entry["terminal"] = {{"t", t.t},
                           {"spread", t.spread},
                           {"residual", t.residual},
                           {"kkt_residual", t.kkt_residual},
                           {"obs_spread", t.obs_spread},
                           {"obs_residual", t.obs_residual},
                           {"cost_gap", t.cost_gap}};
    }
    methods[run.method] = std::move(entry);
  }
  nlohmann::json summary{{"config", config_to_json(r.config)},
                         {"kkt", {{"u", detail::json_array(r.kkt_u)},
                                  {"multipliers", detail::json_array(r.kkt_multipliers)}}},
                         {"methods", std::move(methods)},
                         {"all_completed", r.all_completed}};
  if (const auto flag = transformed_below_projected(r))
    summary["transformed_below_projected"] = *flag;
  std::ofstream out(out_dir + "/summary.json");
  if (!out) throw std::runtime_error("write_outputs: cannot open " + out_dir + "/summary.json");
  out << summary.dump(2) << '\n';
}

}  // namespace boxeki
