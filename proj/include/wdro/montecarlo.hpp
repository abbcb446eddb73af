#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "wdro/errors.hpp"
#include "wdro/finite_sample.hpp"
#include "wdro/noise_models.hpp"
#include "wdro/saddle_solver.hpp"
#include "wdro/scalarization.hpp"

namespace wdro {

enum class Theta0Style { GaussianEntries, SphereScaled };

inline std::string to_string(Theta0Style s) {
  return s == Theta0Style::GaussianEntries ? "gaussian_entries" : "sphere_scaled";
}

struct ExperimentSpec {
  ProblemSpec problem;
  std::vector<std::pair<int, int>> dims;  // (d, n)
  int trials = 1;
  std::uint64_t base_seed = 1;
  Theta0Style theta0_style = Theta0Style::SphereScaled;
  QuadratureConfig quadrature;
  FitOptions fit;
  SolverOptions solver;
  int threads = 1;
};

struct TrialRecord {
  int d = 0;
  int n = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  double error = 0.0;
  int iterations = 0;
  bool converged = false;
  bool failed = false;
  std::string failure;
};

struct DimSummary {
  int d = 0;
  int n = 0;
  int trials = 0;
  int failures = 0;
  double mean = 0.0;
  double std = 0.0;
  double se = 0.0;
  double relative_gap = 0.0;
};

struct ExperimentSummary {
  std::vector<TrialRecord> records;  // ordered by (dim index, trial)
  std::vector<DimSummary> per_dim;
  Prediction prediction;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t trial_seed(std::uint64_t base, int d, int n, int k) {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(d));
  h = splitmix64(h ^ static_cast<std::uint64_t>(n));
  h = splitmix64(h ^ static_cast<std::uint64_t>(k));
  return base ^ h;
}

inline Dataset generate_instance(const ProblemSpec& problem, int d, int n, std::uint64_t seed,
                                 Theta0Style style = Theta0Style::SphereScaled) {
  if (d < 1 || n < 1) throw DomainError("generate_instance requires d, n >= 1");
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Dataset ds;
  ds.d = d;
  ds.n = n;
  ds.theta0.resize(d);
  for (int j = 0; j < d; ++j) ds.theta0(j) = nd(rng);
  if (style == Theta0Style::SphereScaled)
    ds.theta0 *= problem.sigma_theta0 * std::sqrt(double(d)) / ds.theta0.norm();
  else
    ds.theta0 *= problem.sigma_theta0;
  ds.A.resize(n, d);
  const double sc = 1.0 / std::sqrt(double(d));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) ds.A(i, j) = sc * nd(rng);
  ds.z.resize(n);
  for (int i = 0; i < n; ++i) ds.z(i) = draw(problem.noise, rng);
  ds.y = ds.A * ds.theta0 + ds.z;
  return ds;
}

// Fits one instance with the estimator of the problem's mode, applying the
// sample-size scaling of the radius (eps0/sqrt(n) for W1, eps0/n for W2) or
// of the penalty (d lambda0 for DRE).
inline FitResult fit_for_mode(const ProblemSpec& p, const Dataset& ds, const FitOptions& opt) {
  const double n = ds.n;
  switch (p.mode) {
    case Mode::W1: return fit_w1(ds, p.loss, p.epsilon0 / std::sqrt(n), opt);
    case Mode::W2_DRO: return fit_w2_smooth(ds, p.loss, p.epsilon0 / n, p.radius(), opt);
    case Mode::W2_DRO_Squared: return fit_w2_squared(ds, p.epsilon0 / n, opt);
    case Mode::DRE:
    case Mode::DRE_Squared:
      return fit_dre(ds, p.loss, double(ds.d) * p.lambda0, p.radius(), opt);
  }
  throw ConfigError("unknown mode");
}

inline TrialRecord run_trial(const ExperimentSpec& spec, int d, int n, int k) {
  TrialRecord rec;
  rec.d = d;
  rec.n = n;
  rec.trial = k;
  rec.seed = trial_seed(spec.base_seed, d, n, k);
  try {
    Dataset ds = generate_instance(spec.problem, d, n, rec.seed, spec.theta0_style);
    FitResult fr = fit_for_mode(spec.problem, ds, spec.fit);
    rec.error = fr.normalized_error;
    rec.iterations = fr.iterations;
    rec.converged = fr.converged;
  } catch (const NumericError& e) {
    rec.failed = true;
    rec.failure = e.what();
  }
  return rec;
}

inline DimSummary summarize(int d, int n, const std::vector<TrialRecord>& recs,
                            double prediction) {
  DimSummary s;
  s.d = d;
  s.n = n;
  std::vector<double> v;
  for (const auto& r : recs) {
    if (r.d != d || r.n != n) continue;
    ++s.trials;
    if (r.failed)
      ++s.failures;
    else
      v.push_back(r.error);
  }
  if (!v.empty()) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= double(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    s.mean = m;
    s.std = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0;
    s.se = s.std / std::sqrt(double(v.size()));
  }
  s.relative_gap = prediction > 0 ? std::abs(s.mean - prediction) / prediction
                                  : std::abs(s.mean - prediction);
  return s;
}

inline void validate(const ExperimentSpec& e) {
  validate(e.problem);
  if (e.trials < 1) throw ConfigError("experiment.trials must be >= 1");
  if (e.dims.empty()) throw ConfigError("experiment.dims must not be empty");
  for (auto [d, n] : e.dims) {
    if (d < 1 || n < 1) throw ConfigError("experiment.dims entries must be positive");
    if (std::abs(double(d) / n - e.problem.rho) > 1.0 / n)
      throw ConfigError("experiment.dims: d/n must equal rho within 1/n");
  }
  if (e.threads < 1) throw ConfigError("threads must be >= 1");
}

inline ExperimentSummary run_experiment(const ExperimentSpec& spec) {
  validate(spec);
  ExperimentSummary out;
  out.prediction = predict(spec.problem, spec.quadrature, spec.solver);

  std::vector<std::pair<int, int>> jobs;  // (dim index, trial)
  for (std::size_t i = 0; i < spec.dims.size(); ++i)
    for (int k = 0; k < spec.trials; ++k) jobs.emplace_back(int(i), k);
  out.records.resize(jobs.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      auto [di, k] = jobs[j];
      auto [d, n] = spec.dims[di];
      out.records[j] = run_trial(spec, d, n, k);
    }
  };
  const int nt = std::max(1, std::min<int>(spec.threads, int(jobs.size())));
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::size_t failures = 0;
  for (const auto& r : out.records) failures += r.failed ? 1 : 0;
  for (auto [d, n] : spec.dims)
    out.per_dim.push_back(summarize(d, n, out.records, out.prediction.alpha_star_sq));
  if (double(failures) > 0.1 * double(out.records.size()))
    throw ExperimentError("more than 10% of trials failed (" + std::to_string(failures) +
                          " of " + std::to_string(out.records.size()) + ")");
  return out;
}

}  // namespace wdro
