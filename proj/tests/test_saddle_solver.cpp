#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "wdro/saddle_solver.hpp"

using namespace wdro;

namespace {

const QuadratureConfig kQuad{};

ProblemSpec make(Mode mode, LossModel loss, NoiseModel noise, double rho) {
  ProblemSpec s;
  s.mode = mode;
  s.loss = loss;
  s.noise = noise;
  s.rho = rho;
  return s;
}

ProblemSpec huber_w1(double rho = 0.3) {
  return make(Mode::W1, LossModel::huber(1.0), NoiseModel::gaussian(1.0), rho);
}

ProblemSpec sq_dro(double rho, double sigma_z, double eps0) {
  auto s = make(Mode::W2_DRO_Squared, LossModel::squared(), NoiseModel::gaussian(sigma_z), rho);
  s.epsilon0 = eps0;
  s.r_theta = 2.0;
  return s;
}

void expect_certified(const ProblemSpec& s, const Prediction& p, double slope_tol = 1e-3,
                      double exch_tol = 1e-7) {
  Certificate c = certify(s, kQuad, p);
  EXPECT_TRUE(c.stationary(slope_tol)) << "slopes " << c.slope_minus.value_or(0) << " "
                                       << c.slope_plus.value_or(0);
  EXPECT_TRUE(c.exchange_ok(exch_tol)) << c.min_max << " vs " << c.max_min;
}

}  // namespace

TEST(DerivedB, Example) {
  auto s = make(Mode::W2_DRO, LossModel::huber(1.0), NoiseModel::gaussian(1.0), 0.25);
  s.epsilon0 = 0.04;
  s.r_theta = 4.0;
  EXPECT_NEAR(derived_constants(s).B, 0.4, 1e-15);
}

TEST(SolveW1, NoiselessRecoveryIsExact) {
  auto s = make(Mode::W1, LossModel::absolute(), NoiseModel::point_mass(), 0.5);
  Prediction p = solve_w1(s, kQuad);
  EXPECT_LT(p.alpha_star, 1e-6);
  expect_certified(s, p);
}

// Squared loss through the generic W1 path at eps0 = 0 against the
// squared-loss specialization and the least-squares limit rho sz^2/(1-rho).
TEST(SolveW1, SquaredLossCrossPath) {
  auto w = make(Mode::W1, LossModel::squared(), NoiseModel::gaussian(1.0), 0.5);
  Prediction a = solve_w1(w, kQuad);
  Prediction b = solve_squared_dro(sq_dro(0.5, 1.0, 0.0), kQuad);
  EXPECT_NEAR(a.alpha_star_sq, b.alpha_star_sq, 1e-4);
  EXPECT_NEAR(a.alpha_star_sq, 1.0, 1e-4);
}

TEST(SolveW1, FrozenLadValues) {
  auto s = make(Mode::W1, LossModel::absolute(), NoiseModel::gaussian(1.0), 0.2);
  Prediction p0 = solve_w1(s, kQuad);
  EXPECT_NEAR(p0.alpha_star_sq, 0.38495, 2e-5);
  expect_certified(s, p0);
  s.epsilon0 = 0.5;
  Prediction p5 = solve_w1(s, kQuad);
  EXPECT_NEAR(p5.alpha_star_sq, 0.26647, 2e-5);
  expect_certified(s, p5);
}

TEST(SolveW1, WrongModeRejected) {
  auto s = huber_w1();
  s.mode = Mode::DRE;
  s.lambda0 = 10;
  EXPECT_THROW(solve_w1(s, kQuad), ConfigError);
}

TEST(SolveW2, VanishingEpsilonMatchesUnregularized) {
  Prediction ref = solve_w1(huber_w1(0.3), kQuad);
  auto s = make(Mode::W2_DRO, LossModel::huber(1.0), NoiseModel::gaussian(1.0), 0.3);
  s.epsilon0 = 1e-10;
  s.r_theta = 2.0;
  Prediction p = solve_w2(s, kQuad);
  EXPECT_NEAR(p.alpha_star / ref.alpha_star, 1.0, 0.02);
  EXPECT_TRUE(p.has(kEpsilonBoundUnverified));
  EXPECT_TRUE(p.value_v1 && p.value_v2 && p.alpha_v1 && p.alpha_v2);
}

TEST(SolveW2, BranchesFlagsAndWitness) {
  auto s = make(Mode::W2_DRO, LossModel::huber(1.0), NoiseModel::gaussian(1.0), 0.3);
  s.epsilon0 = 0.1;
  s.r_theta = 2.0;
  s.l_lower = 0.3;
  Prediction p = solve_w2(s, kQuad);
  EXPECT_FALSE(p.has(kEpsilonBoundUnverified));
  EXPECT_FALSE(p.has(kEpsilonBoundViolated));  // eps0_max = 0.3 / (0.3 * 4) = 0.25
  const double B = derived_constants(s).B;
  if (p.branch == Branch::V1) {
    EXPECT_GT(p.witness.beta, B);
  } else if (p.branch == Branch::V2) {
    EXPECT_LE(p.witness.beta, B);
  }
  if (p.branch != Branch::Tie) {
    EXPECT_GT(std::abs(*p.value_v1 - *p.value_v2), 1e-8);
    EXPECT_EQ(p.value, std::max(*p.value_v1, *p.value_v2));
  }
  EXPECT_GE(p.alpha_star, 0.0);
  EXPECT_LE(p.alpha_star, s.sigma_theta0);
  expect_certified(s, p);

  s.epsilon0 = 0.5;
  EXPECT_TRUE(solve_w2(s, kQuad).has(kEpsilonBoundViolated));
}

TEST(SolveDre, LargeLambdaMatchesUnregularized) {
  Prediction ref = solve_w1(huber_w1(0.3), kQuad);
  auto s = make(Mode::DRE, LossModel::huber(1.0), NoiseModel::gaussian(1.0), 0.3);
  s.lambda0 = 1e6;
  s.r_theta = 2.0;
  Prediction p = solve_dre(s, kQuad);
  EXPECT_NEAR(p.alpha_star / ref.alpha_star, 1.0, 0.02);
  EXPECT_GE(p.value, 0.0);  // the objective vanishes at beta = 0
  EXPECT_FALSE(p.has(kDreUpperBoundOnly));
  expect_certified(s, p);
}

TEST(SolveDre, UpperBoundOnlyFlag) {
  // Tight radius: alpha* exceeds R - sigma_theta0 = 0.05.
  auto s = make(Mode::DRE, LossModel::huber(1.0), NoiseModel::gaussian(1.0), 0.5);
  s.r_theta = 1.05;
  s.lambda0 = 1.0;
  Prediction p = solve_dre(s, kQuad);
  EXPECT_GT(p.alpha_star, 0.05);
  EXPECT_TRUE(p.has(kDreUpperBoundOnly));
}

TEST(SolveSquared, LeastSquaresLimits) {
  EXPECT_NEAR(solve_squared_dro(sq_dro(0.5, 1.0, 1e-12), kQuad).alpha_star_sq, 1.0, 0.02);
  EXPECT_NEAR(solve_squared_dro(sq_dro(0.25, 2.0, 1e-12), kQuad).alpha_star_sq, 4.0 / 3.0, 0.02);
  auto e = make(Mode::DRE_Squared, LossModel::squared(), NoiseModel::gaussian(1.0), 0.5);
  e.lambda0 = 1e6;
  e.r_theta = 2.0;
  EXPECT_NEAR(solve_squared_dre(e).alpha_star_sq, 1.0, 0.02);
}

TEST(SolveSquared, FrozenDroValuesAndCertificates) {
  const std::pair<double, double> cases[] = {{1.0, 0.52138}, {0.1, 0.52020}, {std::sqrt(0.1), 0.41998}};
  for (auto [eps, want] : cases) {
    auto s = sq_dro(0.5, 1.0, eps);
    Prediction p = solve_squared_dro(s, kQuad);
    EXPECT_NEAR(p.alpha_star_sq, want, 2e-5) << eps;
    EXPECT_FALSE(p.has(kNonUniqueWarning));
    expect_certified(s, p);
  }
}

TEST(SolveSquared, ContinuousInEpsilon) {
  double prev = -1;
  for (double eps = 0.05; eps < 0.5; eps *= 1.1) {
    double v = solve_squared_dro(sq_dro(0.5, 1.0, eps), kQuad).alpha_star_sq;
    if (prev > 0) {
      EXPECT_LE(std::abs(v - prev) / prev, 0.05) << eps;
    }
    prev = v;
  }
}

TEST(Predict, DispatchAndReproducibility) {
  auto s = huber_w1();
  Prediction a = predict(s, kQuad), b = predict(s, kQuad);
  EXPECT_EQ(std::memcmp(&a.alpha_star, &b.alpha_star, sizeof(double)), 0);
  EXPECT_EQ(std::memcmp(&a.value, &b.value, sizeof(double)), 0);
  EXPECT_EQ(a.witness.tau1, b.witness.tau1);
  EXPECT_EQ(a.witness.tau2, b.witness.tau2);
  EXPECT_EQ(a.mode, Mode::W1);
  EXPECT_GT(a.witness.tau1, 0.0);
  EXPECT_GT(a.witness.tau2, 0.0);
  EXPECT_GT(a.witness.beta, 0.0);
}

TEST(FlagNames, Names) {
  EXPECT_EQ(flag_names(kAlphaAtUpperBound | kNonUniqueWarning),
            (std::vector<std::string>{"AlphaAtUpperBound", "NonUniqueWarning"}));
  EXPECT_TRUE(flag_names(0).empty());
}
