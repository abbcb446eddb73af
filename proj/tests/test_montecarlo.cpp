#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "wdro/montecarlo.hpp"

using namespace wdro;

namespace {

ProblemSpec squared_w2(double rho, double eps0) {
  ProblemSpec p;
  p.mode = Mode::W2_DRO_Squared;
  p.loss = LossModel::squared();
  p.noise = NoiseModel::gaussian(1.0);
  p.rho = rho;
  p.epsilon0 = eps0;
  p.r_theta = 2.0;
  return p;
}

ExperimentSpec experiment(const ProblemSpec& p, std::vector<std::pair<int, int>> dims, int trials) {
  ExperimentSpec e;
  e.problem = p;
  e.dims = std::move(dims);
  e.trials = trials;
  e.base_seed = 2024;
  return e;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(GenerateInstance, AssembledExactly) {
  ProblemSpec p = squared_w2(0.5, 1.0);
  Dataset ds = generate_instance(p, 7, 13, 99);
  ASSERT_EQ(ds.A.rows(), 13);
  ASSERT_EQ(ds.A.cols(), 7);
  Eigen::VectorXd y = ds.A * ds.theta0 + ds.z;
  for (int i = 0; i < 13; ++i) EXPECT_EQ(ds.y(i), y(i));
  EXPECT_THROW(generate_instance(p, 0, 5, 1), DomainError);
}

TEST(GenerateInstance, SphereScaledNormIsExact) {
  ProblemSpec p = squared_w2(0.5, 1.0);
  p.sigma_theta0 = 1.7;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Dataset ds = generate_instance(p, 50, 100, seed);
    EXPECT_NEAR(ds.theta0.squaredNorm() / 50, 1.7 * 1.7, 1e-13);
  }
}

TEST(GenerateInstance, GaussianEntriesConcentrate) {
  ProblemSpec p = squared_w2(0.5, 1.0);
  p.sigma_theta0 = 0.8;
  Dataset ds = generate_instance(p, 10000, 1, 5, Theta0Style::GaussianEntries);
  EXPECT_NEAR(ds.theta0.squaredNorm() / 10000 / 0.64, 1.0, 0.05);
}

TEST(GenerateInstance, DesignColumnMeansAndScale) {
  const int d = 100, n = 10000;
  Dataset ds = generate_instance(squared_w2(0.01, 1.0), d, n, 8);
  const double bound = 4.0 / std::sqrt(double(n) * d);
  Eigen::VectorXd means = ds.A.colwise().mean();
  EXPECT_LE(means.cwiseAbs().maxCoeff(), bound);
  // entries have variance 1/d
  EXPECT_NEAR(ds.A.squaredNorm() / (double(n) * d) * d, 1.0, 0.01);
}

TEST(GenerateInstance, SeedDeterminism) {
  ProblemSpec p = squared_w2(0.5, 1.0);
  p.noise = NoiseModel::laplace(0.5);
  Dataset a = generate_instance(p, 10, 20, 77), b = generate_instance(p, 10, 20, 77),
          c = generate_instance(p, 10, 20, 78);
  EXPECT_TRUE(a.y == b.y && a.A == b.A && a.theta0 == b.theta0);
  EXPECT_FALSE(a.y == c.y);
}

TEST(TrialSeed, DistinctAcrossCoordinates) {
  std::set<std::uint64_t> seen;
  for (int d : {10, 20})
    for (int n : {40, 80})
      for (int k = 0; k < 50; ++k) seen.insert(trial_seed(1, d, n, k));
  EXPECT_EQ(seen.size(), 200u);
  EXPECT_EQ(trial_seed(5, 10, 20, 3) ^ 5, trial_seed(0, 10, 20, 3));
}

TEST(RunExperiment, NoiselessSquaredRecovery) {
  ProblemSpec p = squared_w2(0.5, 0.0);
  p.mode = Mode::W1;
  p.noise = NoiseModel::point_mass();
  auto s = run_experiment(experiment(p, {{20, 40}}, 1));
  EXPECT_LE(s.per_dim[0].mean, 1e-12);
  EXPECT_LE(s.prediction.alpha_star_sq, 1e-10);
}

TEST(RunExperiment, LeastSquaresLimit) {
  auto s = run_experiment(experiment(squared_w2(0.5, 1e-12), {{400, 800}}, 10));
  EXPECT_NEAR(s.per_dim[0].mean, 1.0, 0.05);
  EXPECT_NEAR(s.prediction.alpha_star_sq, 1.0, 0.02);
}

TEST(RunExperiment, SingleTrialReproducesRecord) {
  ProblemSpec p = squared_w2(0.25, 0.0);
  p.mode = Mode::W1;
  p.loss = LossModel::huber(1.0);
  auto e = experiment(p, {{10, 40}, {20, 80}}, 4);
  auto s = run_experiment(e);
  ASSERT_EQ(s.records.size(), 8u);
  for (const auto& r : s.records) {
    TrialRecord again = run_trial(e, r.d, r.n, r.trial);
    EXPECT_EQ(again.seed, trial_seed(e.base_seed, r.d, r.n, r.trial));
    EXPECT_EQ(again.seed, r.seed);
    EXPECT_TRUE(same_bits(again.error, r.error));
    EXPECT_EQ(again.iterations, r.iterations);
  }
  // records ordered by (dim, trial)
  EXPECT_EQ(s.records[5].d, 20);
  EXPECT_EQ(s.records[5].trial, 1);
}

TEST(RunExperiment, AggregatesRecomputable) {
  auto s = run_experiment(experiment(squared_w2(0.5, 1.0), {{20, 40}, {40, 80}}, 6));
  for (const auto& dim : s.per_dim) {
    std::vector<double> v;
    for (const auto& r : s.records)
      if (r.d == dim.d) v.push_back(r.error);
    ASSERT_EQ(v.size(), 6u);
    double m = 0;
    for (double x : v) m += x;
    m /= 6;
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / 5);
    EXPECT_NEAR(dim.mean, m, 1e-15 * m);
    EXPECT_NEAR(dim.std, sd, 1e-13 * sd);
    EXPECT_NEAR(dim.se, sd / std::sqrt(6.0), 1e-13 * sd);
    const double a2 = s.prediction.alpha_star_sq;
    EXPECT_NEAR(dim.relative_gap, std::abs(m - a2) / a2, 1e-12);
    EXPECT_GE(dim.std, 0.0);
  }
}

TEST(Summarize, FailuresExcludedAndCounted) {
  std::vector<TrialRecord> recs(4);
  for (int k = 0; k < 4; ++k) recs[k] = TrialRecord{5, 10, k, 0, double(k + 1), 1, true, false, ""};
  recs[3].failed = true;
  recs[3].error = 1e9;
  DimSummary s = summarize(5, 10, recs, 2.0);
  EXPECT_EQ(s.trials, 4);
  EXPECT_EQ(s.failures, 1);
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.std, 1.0);
  EXPECT_DOUBLE_EQ(s.relative_gap, 0.0);
  // zero prediction falls back to the absolute gap
  EXPECT_DOUBLE_EQ(summarize(5, 10, recs, 0.0).relative_gap, 2.0);
}

TEST(RunExperiment, ThreadCountDoesNotChangeResults) {
  ProblemSpec p = squared_w2(0.3, 0.5);
  p.mode = Mode::W1;
  p.loss = LossModel::absolute();
  auto e = experiment(p, {{15, 50}, {30, 100}}, 5);
  auto a = run_experiment(e);
  e.threads = 4;
  auto b = run_experiment(e);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].seed, b.records[i].seed);
    EXPECT_TRUE(same_bits(a.records[i].error, b.records[i].error));
  }
  for (std::size_t i = 0; i < a.per_dim.size(); ++i) EXPECT_TRUE(same_bits(a.per_dim[i].mean, b.per_dim[i].mean));
}

TEST(RunExperiment, GapShrinksWithDimension) {
  auto s = run_experiment(experiment(squared_w2(0.5, 1.0), {{50, 100}, {100, 200}, {200, 400}, {400, 800}}, 20));
  int nonincreasing = 0;
  for (std::size_t i = 1; i < s.per_dim.size(); ++i)
    nonincreasing += s.per_dim[i].relative_gap <= s.per_dim[i - 1].relative_gap ? 1 : 0;
  EXPECT_GE(nonincreasing, 2);
}

TEST(ExperimentValidation, Rejections) {
  auto e = experiment(squared_w2(0.5, 1.0), {{20, 40}}, 1);
  e.trials = 0;
  EXPECT_THROW(run_experiment(e), ConfigError);
  e.trials = 1;
  e.dims = {{20, 60}};
  EXPECT_THROW(run_experiment(e), ConfigError);
  e.dims = {};
  EXPECT_THROW(run_experiment(e), ConfigError);
  e.dims = {{20, 41}};  // within 1/n of rho
  EXPECT_NO_THROW(validate(e));
  e.threads = 0;
  EXPECT_THROW(validate(e), ConfigError);
}
