#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wdro/montecarlo.hpp"
#include "wdro/saddle_solver.hpp"
#include "wdro/validation.hpp"

namespace wdro {

using json = nlohmann::ordered_json;

enum class SweepAxis { Epsilon0, Lambda0, Rho };
enum class GridScale { Linear, Log };

struct SweepSpec {
  SweepAxis axis = SweepAxis::Epsilon0;
  GridScale scale = GridScale::Log;
  double start = 0.1;
  double stop = 1.0;
  int points = 2;
  bool simulate = false;
  double jump_tol = 0.05;  // adjacent-point relative change that raises the jump flag

  std::vector<double> grid() const {
    std::vector<double> g(points);
    for (int i = 0; i < points; ++i) {
      const double t = double(i) / (points - 1);
      g[i] = scale == GridScale::Log
                 ? std::exp(std::log(start) + t * (std::log(stop) - std::log(start)))
                 : start + t * (stop - start);
    }
    g.front() = start;
    g.back() = stop;
    return g;
  }
};

struct RunConfig {
  ProblemSpec problem;
  ExperimentSpec experiment;  // experiment.problem mirrors problem
  QuadratureConfig quadrature;
  SolverOptions solver;
  bool certify = true;
  SweepSpec sweep;
  bool has_sweep = false;
  EnvelopeSuiteOptions envelopes;
};

inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::Epsilon0: return "epsilon0";
    case SweepAxis::Lambda0: return "lambda0";
    case SweepAxis::Rho: return "rho";
  }
  return "?";
}

inline std::string to_string(GridScale s) { return s == GridScale::Log ? "log" : "linear"; }

inline std::string to_string(QuadratureMode m) {
  return m == QuadratureMode::Quadrature ? "quadrature" : "montecarlo";
}

// ---------------------------------------------------------------------------
// Strict JSON reading: unknown keys and wrong types are config errors.

namespace detail {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  template <class T>
  void get(const std::string& k, T& out) {
    seen_.insert(k);
    if (!j_.contains(k)) return;
    try {
      out = j_.at(k).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + k + ": wrong type");
    }
  }

  template <class T>
  void get_opt(const std::string& k, std::optional<T>& out) {
    seen_.insert(k);
    if (!j_.contains(k) || j_.at(k).is_null()) return;
    T v{};
    get(k, v);
    out = v;
  }

  Section sub(const std::string& k) {
    seen_.insert(k);
    return Section(j_.at(k), path_ + "." + k);
  }

  const json& raw(const std::string& k) {
    seen_.insert(k);
    return j_.at(k);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + path_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class E>
E parse_enum(const std::string& s, const std::vector<std::pair<std::string, E>>& table,
             const std::string& what) {
  for (auto& [name, v] : table)
    if (name == s) return v;
  std::string opts;
  for (auto& [name, v] : table) opts += (opts.empty() ? "" : ", ") + name;
  throw ConfigError(what + ": unknown value '" + s + "' (expected one of " + opts + ")");
}

inline void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw ConfigError(what + " must be finite");
}

}  // namespace detail

inline Mode parse_mode(const std::string& s) {
  return detail::parse_enum<Mode>(s,
                                  {{"w1", Mode::W1},
                                   {"w2_dro", Mode::W2_DRO},
                                   {"w2_dro_squared", Mode::W2_DRO_Squared},
                                   {"dre", Mode::DRE},
                                   {"dre_squared", Mode::DRE_Squared}},
                                  "problem.mode");
}

inline ProblemSpec parse_problem(detail::Section s) {
  ProblemSpec p;
  std::string mode = to_string(p.mode);
  s.get("mode", mode);
  p.mode = parse_mode(mode);
  if (s.has("loss")) {
    auto l = s.sub("loss");
    std::string kind = "huber";
    double delta = p.loss.delta;
    l.get("kind", kind);
    auto k = detail::parse_enum<LossKind>(
        kind, {{"squared", LossKind::Squared}, {"absolute", LossKind::Absolute}, {"huber", LossKind::Huber}},
        "problem.loss.kind");
    if (k == LossKind::Huber) l.get("delta", delta);
    l.finish();
    p.loss = k == LossKind::Huber ? LossModel::huber(delta)
             : k == LossKind::Squared ? LossModel::squared()
                                      : LossModel::absolute();
  }
  if (s.has("noise")) {
    auto n = s.sub("noise");
    std::string kind = "gaussian";
    double sigma = 1.0, scale = 1.0;
    n.get("kind", kind);
    auto k = detail::parse_enum<NoiseKind>(kind,
                                           {{"gaussian", NoiseKind::Gaussian},
                                            {"laplace", NoiseKind::Laplace},
                                            {"pointmass", NoiseKind::PointMass}},
                                           "problem.noise.kind");
    // only the parameter of the chosen kind is accepted
    if (k == NoiseKind::Gaussian) n.get("sigma", sigma);
    if (k == NoiseKind::Laplace) n.get("scale", scale);
    n.finish();
    p.noise = k == NoiseKind::Gaussian ? NoiseModel::gaussian(sigma)
              : k == NoiseKind::Laplace ? NoiseModel::laplace(scale)
                                        : NoiseModel::point_mass();
  }
  s.get("rho", p.rho);
  s.get("epsilon0", p.epsilon0);
  s.get("lambda0", p.lambda0);
  s.get("sigma_theta0", p.sigma_theta0);
  s.get_opt("r_theta", p.r_theta);
  s.get_opt("l_lower", p.l_lower);
  s.get("shift", p.shift);
  s.finish();
  for (auto [v, name] : {std::pair{p.rho, "problem.rho"}, {p.epsilon0, "problem.epsilon0"},
                         {p.lambda0, "problem.lambda0"}, {p.sigma_theta0, "problem.sigma_theta0"}})
    detail::require_finite(v, name);
  return p;
}

inline QuadratureConfig parse_quadrature(detail::Section s) {
  QuadratureConfig q;
  std::string mode = to_string(q.mode);
  s.get("gh_nodes", q.gh_nodes);
  s.get("mc_samples", q.mc_samples);
  s.get("mode", mode);
  s.get("seed", q.seed);
  s.finish();
  q.mode = detail::parse_enum<QuadratureMode>(
      mode, {{"quadrature", QuadratureMode::Quadrature}, {"montecarlo", QuadratureMode::MonteCarlo}},
      "quadrature.mode");
  q.validate();
  return q;
}

inline void parse_experiment(detail::Section s, ExperimentSpec& e) {
  if (s.has("dims")) {
    const json& d = s.raw("dims");
    if (!d.is_array()) throw ConfigError("experiment.dims must be an array of [d, n] pairs");
    e.dims.clear();
    for (const auto& pr : d) {
      if (!pr.is_array() || pr.size() != 2 || !pr[0].is_number_integer() || !pr[1].is_number_integer())
        throw ConfigError("experiment.dims entries must be [d, n] integer pairs");
      e.dims.emplace_back(pr[0].get<int>(), pr[1].get<int>());
    }
  }
  s.get("trials", e.trials);
  s.get("base_seed", e.base_seed);
  s.get("threads", e.threads);
  std::string style = to_string(e.theta0_style);
  s.get("theta0_style", style);
  e.theta0_style = detail::parse_enum<Theta0Style>(
      style, {{"sphere_scaled", Theta0Style::SphereScaled}, {"gaussian_entries", Theta0Style::GaussianEntries}},
      "experiment.theta0_style");
  if (s.has("fit")) {
    auto f = s.sub("fit");
    f.get("max_iter", e.fit.max_iter);
    f.get("tol", e.fit.tol);
    f.get("stall_tol", e.fit.stall_tol);
    f.get("stall_window", e.fit.stall_window);
    f.get("pg_tol", e.fit.pg_tol);
    f.get("armijo", e.fit.armijo);
    f.get("shrink", e.fit.shrink);
    f.finish();
    if (e.fit.max_iter < 1 || !(e.fit.tol > 0) || !(e.fit.pg_tol > 0) || e.fit.stall_window < 1 ||
        !(e.fit.armijo > 0 && e.fit.armijo < 1) || !(e.fit.shrink > 0 && e.fit.shrink < 1))
      throw ConfigError("experiment.fit: invalid solver settings");
  }
  s.finish();
}

inline SweepSpec parse_sweep(detail::Section s) {
  SweepSpec w;
  std::string axis = to_string(w.axis), scale = to_string(w.scale);
  s.get("axis", axis);
  s.get("scale", scale);
  s.get("start", w.start);
  s.get("stop", w.stop);
  s.get("points", w.points);
  s.get("simulate", w.simulate);
  s.get("jump_tol", w.jump_tol);
  s.finish();
  w.axis = detail::parse_enum<SweepAxis>(
      axis, {{"epsilon0", SweepAxis::Epsilon0}, {"lambda0", SweepAxis::Lambda0}, {"rho", SweepAxis::Rho}},
      "sweep.axis");
  w.scale = detail::parse_enum<GridScale>(scale, {{"linear", GridScale::Linear}, {"log", GridScale::Log}},
                                          "sweep.scale");
  if (w.points < 2) throw ConfigError("sweep.points must be >= 2");
  detail::require_finite(w.start, "sweep.start");
  detail::require_finite(w.stop, "sweep.stop");
  if (w.scale == GridScale::Log && !(w.start > 0 && w.stop > 0))
    throw ConfigError("sweep: log grid needs start > 0 and stop > 0");
  if (!(w.jump_tol > 0)) throw ConfigError("sweep.jump_tol must be > 0");
  return w;
}

inline EnvelopeSuiteOptions parse_envelopes(detail::Section s) {
  EnvelopeSuiteOptions o;
  s.get("c_points", o.c_points);
  s.get("c_max", o.c_max);
  s.get("taus", o.taus);
  s.get("huber_delta", o.huber_delta);
  s.get("tol", o.tol);
  s.get("branch_triples", o.branch_triples);
  s.get("branch_tol", o.branch_tol);
  s.get("seed", o.seed);
  s.get("huber_perturbation", o.huber_perturbation);
  s.finish();
  if (o.c_points < 2 || o.taus.empty() || o.branch_triples < 1 || !(o.huber_delta > 0))
    throw ConfigError("envelopes: invalid suite settings");
  for (double t : o.taus)
    if (!(t > 0)) throw ConfigError("envelopes.taus must be positive");
  return o;
}

inline RunConfig parse_config(const json& j) {
  RunConfig c;
  detail::Section root(j, "config");
  if (root.has("problem")) c.problem = parse_problem(root.sub("problem"));
  if (root.has("quadrature")) c.quadrature = parse_quadrature(root.sub("quadrature"));
  if (root.has("solver")) {
    auto s = root.sub("solver");
    s.get("tol", c.solver.tol);
    s.get("tie_tol", c.solver.tie_tol);
    s.get("flat_width", c.solver.flat_width);
    s.get("flat_tol", c.solver.flat_tol);
    s.finish();
    if (!(c.solver.tol > 0) || !(c.solver.tie_tol > 0) || !(c.solver.flat_width > 0) ||
        !(c.solver.flat_tol > 0))
      throw ConfigError("solver tolerances must be positive");
    c.solver.search.tol = c.solver.tol;
  }
  root.get("certify", c.certify);
  if (root.has("experiment")) parse_experiment(root.sub("experiment"), c.experiment);
  if (root.has("sweep")) {
    c.sweep = parse_sweep(root.sub("sweep"));
    c.has_sweep = true;
  }
  if (root.has("envelopes")) c.envelopes = parse_envelopes(root.sub("envelopes"));
  root.finish();
  c.experiment.problem = c.problem;
  c.experiment.quadrature = c.quadrature;
  c.experiment.solver = c.solver;
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Serialization.

inline json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

inline json to_json(const ProblemSpec& p) {
  json j;
  j["mode"] = to_string(p.mode);
  j["loss"] = {{"kind", to_string(p.loss.kind)}};
  if (p.loss.kind == LossKind::Huber) j["loss"]["delta"] = p.loss.delta;
  j["noise"] = {{"kind", to_string(p.noise.kind)}};
  if (p.noise.kind == NoiseKind::Gaussian) j["noise"]["sigma"] = p.noise.param;
  if (p.noise.kind == NoiseKind::Laplace) j["noise"]["scale"] = p.noise.param;
  j["rho"] = p.rho;
  j["epsilon0"] = p.epsilon0;
  j["lambda0"] = p.lambda0;
  j["sigma_theta0"] = p.sigma_theta0;
  j["r_theta"] = p.radius();
  j["l_lower"] = optional_json(p.l_lower);
  j["shift"] = p.shift;
  return j;
}

inline json to_json(const QuadratureConfig& q) {
  return {{"gh_nodes", q.gh_nodes}, {"mc_samples", q.mc_samples}, {"mode", to_string(q.mode)},
          {"seed", q.seed}};
}

inline json to_json(const ExperimentSpec& e) {
  json dims = json::array();
  for (auto [d, n] : e.dims) dims.push_back({d, n});
  return {{"dims", dims},
          {"trials", e.trials},
          {"base_seed", e.base_seed},
          {"threads", e.threads},
          {"theta0_style", to_string(e.theta0_style)},
          {"fit",
           {{"max_iter", e.fit.max_iter},
            {"tol", e.fit.tol},
            {"stall_tol", e.fit.stall_tol},
            {"stall_window", e.fit.stall_window},
            {"pg_tol", e.fit.pg_tol},
            {"armijo", e.fit.armijo},
            {"shrink", e.fit.shrink}}}};
}

inline json to_json(const SweepSpec& w) {
  return {{"axis", to_string(w.axis)}, {"scale", to_string(w.scale)}, {"start", w.start},
          {"stop", w.stop},           {"points", w.points},          {"simulate", w.simulate},
          {"jump_tol", w.jump_tol}};
}

inline json to_json(const EnvelopeSuiteOptions& o) {
  return {{"c_points", o.c_points},
          {"c_max", o.c_max},
          {"taus", o.taus},
          {"huber_delta", o.huber_delta},
          {"tol", o.tol},
          {"branch_triples", o.branch_triples},
          {"branch_tol", o.branch_tol},
          {"seed", o.seed},
          {"huber_perturbation", o.huber_perturbation}};
}

// Effective configuration with every default filled in.
inline json to_json(const RunConfig& c) {
  json j;
  j["problem"] = to_json(c.problem);
  j["quadrature"] = to_json(c.quadrature);
  j["solver"] = {{"tol", c.solver.tol},
                 {"tie_tol", c.solver.tie_tol},
                 {"flat_width", c.solver.flat_width},
                 {"flat_tol", c.solver.flat_tol}};
  j["certify"] = c.certify;
  j["experiment"] = to_json(c.experiment);
  if (c.has_sweep) j["sweep"] = to_json(c.sweep);
  j["envelopes"] = to_json(c.envelopes);
  return j;
}

inline std::string flags_string(unsigned flags) {
  std::string s;
  for (const auto& f : flag_names(flags)) s += (s.empty() ? "" : "|") + f;
  return s;
}

inline json to_json(const Prediction& p) {
  json j;
  j["mode"] = to_string(p.mode);
  j["alpha_star"] = p.alpha_star;
  j["alpha_star_sq"] = p.alpha_star_sq;
  j["value"] = p.value;
  j["value_v1"] = optional_json(p.value_v1);
  j["value_v2"] = optional_json(p.value_v2);
  j["alpha_v1"] = optional_json(p.alpha_v1);
  j["alpha_v2"] = optional_json(p.alpha_v2);
  j["witness"] = {{"tau1", p.witness.tau1}, {"tau2", p.witness.tau2}, {"beta", p.witness.beta}};
  j["branch"] = to_string(p.branch);
  j["flags"] = flag_names(p.flags);
  return j;
}

inline json to_json(const Certificate& c) {
  return {{"slope_minus", optional_json(c.slope_minus)},
          {"slope_plus", optional_json(c.slope_plus)},
          {"min_max", c.min_max},
          {"max_min", c.max_min}};
}

// CSV number formatting: 17 significant digits, "nan"/"inf"/"-inf" spelled out.
inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt17(const std::optional<double>& v) { return v ? fmt17(*v) : std::string(); }

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  void header(const std::vector<std::string>& cols) { row(cols); }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os_ << ',';
      os_ << quote(cells[i]);
    }
    os_ << '\n';
  }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  }
  std::ostream& os_;
};

inline const std::vector<std::string>& prediction_columns() {
  static const std::vector<std::string> cols{
      "mode",  "alpha_star", "alpha_star_sq", "value",       "value_v1",   "value_v2",
      "alpha_v1", "alpha_v2", "tau1",        "tau2",        "beta",       "branch",
      "flags", "slope_minus", "slope_plus",  "min_max",     "max_min"};
  return cols;
}

inline std::vector<std::string> prediction_row(const Prediction& p, const std::optional<Certificate>& c) {
  return {to_string(p.mode),
          fmt17(p.alpha_star),
          fmt17(p.alpha_star_sq),
          fmt17(p.value),
          fmt17(p.value_v1),
          fmt17(p.value_v2),
          fmt17(p.alpha_v1),
          fmt17(p.alpha_v2),
          fmt17(p.witness.tau1),
          fmt17(p.witness.tau2),
          fmt17(p.witness.beta),
          to_string(p.branch),
          flags_string(p.flags),
          c ? fmt17(c->slope_minus) : "",
          c ? fmt17(c->slope_plus) : "",
          c ? fmt17(c->min_max) : "",
          c ? fmt17(c->max_min) : ""};
}

inline const std::vector<std::string>& trial_columns() {
  static const std::vector<std::string> cols{"d", "n", "trial", "seed", "error", "iterations", "converged"};
  return cols;
}

inline std::vector<std::string> trial_row(const TrialRecord& r) {
  return {std::to_string(r.d),          std::to_string(r.n),
          std::to_string(r.trial),      std::to_string(r.seed),
          fmt17(r.failed ? std::nan("") : r.error), std::to_string(r.iterations),
          r.converged ? "1" : "0"};
}

inline const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols{"d",  "n",  "trials",     "failures",    "mean",
                                             "std", "se", "prediction", "relative_gap"};
  return cols;
}

inline std::vector<std::string> summary_row(const DimSummary& s, double prediction) {
  return {std::to_string(s.d),  std::to_string(s.n),  std::to_string(s.trials),
          std::to_string(s.failures), fmt17(s.mean), fmt17(s.std),
          fmt17(s.se),           fmt17(prediction),    fmt17(s.relative_gap)};
}

inline json to_json(const TrialRecord& r) {
  json j{{"d", r.d},       {"n", r.n},
         {"trial", r.trial}, {"seed", r.seed},
         {"error", r.failed ? json(nullptr) : json(r.error)},
         {"iterations", r.iterations},
         {"converged", r.converged}};
  if (r.failed) j["failure"] = r.failure;
  return j;
}

inline json to_json(const DimSummary& s) {
  return {{"d", s.d},       {"n", s.n},   {"trials", s.trials},
          {"failures", s.failures}, {"mean", s.mean}, {"std", s.std},
          {"se", s.se},     {"relative_gap", s.relative_gap}};
}

}  // namespace wdro
