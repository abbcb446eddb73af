#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wdro/io.hpp"

namespace wdro {

inline constexpr const char* kThreadsEnv = "WDRO_THREADS";

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitNumeric = 2 };

enum class Format { Csv, Json };

struct Invocation {
  std::string command;
  std::string config_path;
  std::string out_path;
  Format format = Format::Csv;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
};

// Files written by one command, path -> contents. Nothing touches disk until
// the command has finished without error.
using Outputs = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline json metadata(const std::string& command, const RunConfig& cfg) {
  return {{"tool", "wdro"}, {"command", command}, {"format_version", 1}, {"config", to_json(cfg)}};
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline std::optional<Certificate> maybe_certify(const RunConfig& cfg, const ProblemSpec& p,
                                                const Prediction& pred) {
  if (!cfg.certify) return std::nullopt;
  return certify(p, cfg.quadrature, pred, 1e-4, cfg.solver);
}

inline ProblemSpec at_grid_point(ProblemSpec p, SweepAxis axis, double v) {
  switch (axis) {
    case SweepAxis::Epsilon0: p.epsilon0 = v; break;
    case SweepAxis::Lambda0: p.lambda0 = v; break;
    case SweepAxis::Rho: p.rho = v; break;
  }
  return p;
}

// A rho sweep keeps each configured d and sets n = round(d / rho).
inline ExperimentSpec experiment_at(const RunConfig& cfg, const ProblemSpec& p) {
  ExperimentSpec e = cfg.experiment;
  e.problem = p;
  if (cfg.sweep.axis == SweepAxis::Rho)
    for (auto& [d, n] : e.dims) n = std::max(1, int(std::lround(d / p.rho)));
  return e;
}

}  // namespace detail

inline Outputs cmd_predict(const RunConfig& cfg, const Invocation& inv) {
  validate(cfg.problem);
  const Prediction pred = predict(cfg.problem, cfg.quadrature, cfg.solver);
  const auto cert = detail::maybe_certify(cfg, cfg.problem, pred);
  json meta = detail::metadata("predict", cfg);
  if (inv.format == Format::Json) {
    json j{{"metadata", meta}, {"prediction", to_json(pred)}};
    j["certificate"] = cert ? to_json(*cert) : json(nullptr);
    return {{inv.out_path, detail::dump(j)}};
  }
  std::ostringstream os;
  CsvWriter w(os);
  w.header(prediction_columns());
  w.row(prediction_row(pred, cert));
  return {{inv.out_path, os.str()}, {inv.out_path + ".meta.json", detail::dump(meta)}};
}

inline Outputs cmd_simulate(const RunConfig& cfg, const Invocation& inv) {
  validate(cfg.experiment);
  const ExperimentSummary s = run_experiment(cfg.experiment);
  json meta = detail::metadata("simulate", cfg);
  if (inv.format == Format::Json) {
    json trials = json::array(), per_dim = json::array();
    for (const auto& r : s.records) trials.push_back(to_json(r));
    for (const auto& d : s.per_dim) per_dim.push_back(to_json(d));
    json j{{"metadata", meta},
           {"prediction", to_json(s.prediction)},
           {"summary", per_dim},
           {"trials", trials}};
    return {{inv.out_path, detail::dump(j)}};
  }
  std::ostringstream trials, summary;
  CsvWriter tw(trials), sw(summary);
  tw.header(trial_columns());
  for (const auto& r : s.records) tw.row(trial_row(r));
  sw.header(summary_columns());
  for (const auto& d : s.per_dim) sw.row(summary_row(d, s.prediction.alpha_star_sq));
  meta["prediction"] = to_json(s.prediction);
  return {{inv.out_path, trials.str()},
          {inv.out_path + ".summary.csv", summary.str()},
          {inv.out_path + ".meta.json", detail::dump(meta)}};
}

struct SweepRow {
  double x = 0.0;
  Prediction pred;
  bool jump = false;
  std::optional<DimSummary> sim;  // largest configured d
};

inline std::vector<SweepRow> run_sweep(const RunConfig& cfg) {
  if (!cfg.has_sweep) throw ConfigError("sweep command needs a 'sweep' block");
  const auto grid = cfg.sweep.grid();
  std::vector<ProblemSpec> problems;
  for (double x : grid) {
    problems.push_back(detail::at_grid_point(cfg.problem, cfg.sweep.axis, x));
    validate(problems.back());
    if (cfg.sweep.simulate) validate(detail::experiment_at(cfg, problems.back()));
  }
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    SweepRow r;
    r.x = grid[i];
    r.pred = predict(problems[i], cfg.quadrature, cfg.solver);
    if (!rows.empty()) {
      const double prev = rows.back().pred.alpha_star_sq;
      const double gap = std::abs(r.pred.alpha_star_sq - prev) / std::max(std::abs(prev), 1e-300);
      r.jump = gap > cfg.sweep.jump_tol;
    }
    if (cfg.sweep.simulate) {
      const auto e = detail::experiment_at(cfg, problems[i]);
      const auto s = run_experiment(e);
      auto best = std::max_element(s.per_dim.begin(), s.per_dim.end(),
                                   [](const DimSummary& a, const DimSummary& b) { return a.d < b.d; });
      r.sim = *best;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline const std::vector<std::string>& sweep_columns() {
  static const std::vector<std::string> cols{"axis",  "x",    "alpha_star_sq", "alpha_star",
                                             "value", "branch", "flags",       "jump",
                                             "sim_d", "sim_n", "sim_mean",     "sim_se",
                                             "sim_trials", "sim_failures"};
  return cols;
}

inline Outputs cmd_sweep(const RunConfig& cfg, const Invocation& inv) {
  const auto rows = run_sweep(cfg);
  json meta = detail::metadata("sweep", cfg);
  const std::string axis = to_string(cfg.sweep.axis);
  if (inv.format == Format::Json) {
    json arr = json::array();
    for (const auto& r : rows) {
      json j{{"axis", axis}, {"x", r.x}, {"prediction", to_json(r.pred)}, {"jump", r.jump}};
      j["simulation"] = r.sim ? to_json(*r.sim) : json(nullptr);
      arr.push_back(j);
    }
    return {{inv.out_path, detail::dump(json{{"metadata", meta}, {"rows", arr}})}};
  }
  std::ostringstream os;
  CsvWriter w(os);
  w.header(sweep_columns());
  for (const auto& r : rows) {
    std::vector<std::string> cells{axis,
                                   fmt17(r.x),
                                   fmt17(r.pred.alpha_star_sq),
                                   fmt17(r.pred.alpha_star),
                                   fmt17(r.pred.value),
                                   to_string(r.pred.branch),
                                   flags_string(r.pred.flags),
                                   r.jump ? "1" : "0"};
    if (r.sim) {
      for (auto c : {std::to_string(r.sim->d), std::to_string(r.sim->n), fmt17(r.sim->mean),
                     fmt17(r.sim->se), std::to_string(r.sim->trials), std::to_string(r.sim->failures)})
        cells.push_back(c);
    } else {
      cells.resize(sweep_columns().size());
    }
    w.row(cells);
  }
  return {{inv.out_path, os.str()}, {inv.out_path + ".meta.json", detail::dump(meta)}};
}

// Returns the outputs plus whether every check passed.
inline std::pair<Outputs, bool> cmd_validate_envelopes(const RunConfig& cfg, const Invocation& inv,
                                                       std::ostream& log) {
  const SuiteReport rep = run_envelope_suite(cfg.envelopes);
  for (const auto& c : rep.checks)
    log << c.name << " max_dev=" << fmt17(c.max_dev) << " tol=" << fmt17(c.tol)
        << (c.pass() ? " ok" : " FAIL") << '\n';
  json meta = detail::metadata("validate-envelopes", cfg);
  if (inv.format == Format::Json) {
    json arr = json::array();
    for (const auto& c : rep.checks)
      arr.push_back({{"check", c.name}, {"max_dev", c.max_dev}, {"tol", c.tol}, {"pass", c.pass()}});
    return {{{inv.out_path, detail::dump(json{{"metadata", meta}, {"checks", arr}, {"pass", rep.pass()}})}},
            rep.pass()};
  }
  std::ostringstream os;
  CsvWriter w(os);
  w.header({"check", "max_dev", "tol", "pass"});
  for (const auto& c : rep.checks) w.row({c.name, fmt17(c.max_dev), fmt17(c.tol), c.pass() ? "1" : "0"});
  return {{{inv.out_path, os.str()}, {inv.out_path + ".meta.json", detail::dump(meta)}}, rep.pass()};
}

// Thread count precedence: --threads, then the environment variable, then
// the config file.
inline int resolve_threads(const Invocation& inv, int from_config) {
  if (inv.threads) return *inv.threads;
  if (const char* env = std::getenv(kThreadsEnv)) {
    try {
      std::size_t pos = 0;
      int v = std::stoi(env, &pos);
      if (pos != std::string(env).size()) throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string(kThreadsEnv) + " must be an integer");
    }
  }
  return from_config;
}

inline void write_outputs(const Outputs& outs) {
  for (const auto& [path, text] : outs) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open output file " + path);
    f << text;
    if (!f.flush()) throw ConfigError("failed writing " + path);
  }
}

inline int run_invocation(const Invocation& inv, std::ostream& log, std::ostream& err) {
  try {
    RunConfig cfg = load_config(inv.config_path);
    cfg.experiment.threads = resolve_threads(inv, cfg.experiment.threads);
    if (cfg.experiment.threads < 1) throw ConfigError("threads must be >= 1");
    if (inv.seed) cfg.experiment.base_seed = *inv.seed;
    if (inv.command == "predict") {
      write_outputs(cmd_predict(cfg, inv));
    } else if (inv.command == "simulate") {
      write_outputs(cmd_simulate(cfg, inv));
    } else if (inv.command == "sweep") {
      write_outputs(cmd_sweep(cfg, inv));
    } else if (inv.command == "validate-envelopes") {
      auto [outs, ok] = cmd_validate_envelopes(cfg, inv, log);
      write_outputs(outs);
      if (!ok) {
        err << "error: envelope suite failed\n";
        return kExitNumeric;
      }
    } else {
      throw ConfigError("unknown command " + inv.command);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}

inline int run_cli(int argc, char** argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Scalar predictions and simulations for Wasserstein DRO regression"};
  Invocation inv;
  std::string format = "csv";
  app.add_option("command", inv.command, "predict | simulate | sweep | validate-envelopes")
      ->required()
      ->check(CLI::IsMember({"predict", "simulate", "sweep", "validate-envelopes"}));
  app.add_option("--config", inv.config_path, "JSON config file")->required();
  app.add_option("--out", inv.out_path, "output file")->required();
  app.add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--threads", inv.threads, "worker threads (overrides " + std::string(kThreadsEnv) + ")")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", inv.seed, "base seed for trials");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      log << app.help();
      return kExitOk;
    }
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  inv.format = format == "json" ? Format::Json : Format::Csv;
  return run_invocation(inv, log, err);
}

}  // namespace wdro
