#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "wdro/montecarlo.hpp"

using namespace wdro;

namespace {

Dataset instance(int d, int n, std::uint64_t seed, NoiseModel noise = NoiseModel::gaussian(1.0)) {
  ProblemSpec p;
  p.noise = noise;
  p.rho = double(d) / n;
  return generate_instance(p, d, n, seed);
}

// Brute-force dual value at fixed theta: min over lambda >= floor of
//   lambda eps + (1/n) sum_i max_u [u r_i + u^2 |theta|^2 / (4 lambda) - L*(u)]
// with the u-maximization done by grid scan plus golden refinement (Huber, M = 1).
double inner_grid(double r, double s, double delta) {
  auto f = [&](double u) { return u * r + u * u * s - 0.5 * u * u; };
  const int N = 2000;
  int kb = 0;
  double best = f(-delta);
  for (int k = 1; k <= N; ++k) {
    double v = f(-delta + 2.0 * delta * k / N);
    if (v > best) best = v, kb = k;
  }
  // golden refinement on the neighbouring cells
  double a = -delta + 2.0 * delta * std::max(kb - 1, 0) / N;
  double b = -delta + 2.0 * delta * std::min(kb + 1, N) / N;
  for (int k = 0; k < 60; ++k) {
    double m1 = b - 0.618 * (b - a), m2 = a + 0.618 * (b - a);
    if (f(m1) > f(m2)) b = m2;
    else a = m1;
  }
  return std::max(best, f(0.5 * (a + b)));
}

double dual_grid_value(const Dataset& ds, const Eigen::VectorXd& th, double delta, double eps,
                       double R, std::optional<double> fixed_lambda) {
  Eigen::VectorXd r = ds.y - ds.A * th;
  const double t = th.squaredNorm();
  auto g = [&](double lam) {
    double acc = 0.0;
    for (int i = 0; i < ds.n; ++i) acc += inner_grid(r(i), t / (4 * lam), delta);
    return lam * eps + acc / ds.n;
  };
  if (fixed_lambda) return g(*fixed_lambda);
  const double lo = R * std::sqrt(double(ds.d)) * std::sqrt(t) / 2.0;
  // log scan then golden refinement
  double best_t = std::log(lo), best = g(lo);
  for (int k = 1; k <= 60; ++k) {
    double tt = std::log(lo) + 0.2 * k;
    double v = g(std::exp(tt));
    if (v < best) {
      best = v;
      best_t = tt;
    }
  }
  double a = std::max(std::log(lo), best_t - 0.2), b = best_t + 0.2;
  double m1 = b - 0.618 * (b - a), m2 = a + 0.618 * (b - a);
  double f1 = g(std::exp(m1)), f2 = g(std::exp(m2));
  for (int k = 0; k < 45; ++k) {
    if (f1 < f2) {
      b = m2, m2 = m1, f2 = f1;
      m1 = b - 0.618 * (b - a), f1 = g(std::exp(m1));
    } else {
      a = m1, m1 = m2, f1 = f2;
      m2 = a + 0.618 * (b - a), f2 = g(std::exp(m2));
    }
  }
  return std::min({best, f1, f2});
}

}  // namespace

TEST(NormalizedError, Examples) {
  Eigen::VectorXd t0 = Eigen::VectorXd::LinSpaced(4, -1, 2);
  EXPECT_EQ(normalized_error(t0, t0, 4), 0.0);
  Eigen::VectorXd t1 = t0;
  t1(0) += 1.0;
  EXPECT_DOUBLE_EQ(normalized_error(t1, t0, 4), 0.25);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  Eigen::VectorXd a(50), b(50);
  for (int i = 0; i < 50; ++i) a(i) = nd(rng), b(i) = nd(rng);
  double s = 0;
  for (int i = 0; i < 50; ++i) s += (a(i) - b(i)) * (a(i) - b(i));
  EXPECT_NEAR(normalized_error(a, b, 50), s / 50, 1e-14);
  EXPECT_THROW(normalized_error(a, b, 49), DomainError);
}

TEST(FitW1, HugeEpsilonCollapsesToOrigin) {
  Dataset ds = instance(20, 100, 1);
  double scale = ds.y.cwiseAbs().mean();
  FitResult r = fit_w1(ds, LossModel::absolute(), 10.0 * scale * 10.0);
  EXPECT_LT(r.theta_hat.norm(), 1e-8);
  EXPECT_NEAR(r.objective, ds.y.cwiseAbs().mean(), 1e-10);
}

TEST(FitW1, NoiselessSquaredRecovery) {
  Dataset ds = instance(20, 60, 2, NoiseModel::point_mass());
  FitResult r = fit_w1(ds, LossModel::squared(), 0.0);
  EXPECT_LE(r.normalized_error, 1e-16);
}

TEST(FitW1, TinyAbsoluteAgainstGrid) {
  Dataset ds = instance(2, 6, 5, NoiseModel::laplace(1.0));
  for (double eps : {0.0, 0.2}) {
    FitResult r = fit_w1(ds, LossModel::absolute(), eps);
    auto obj = [&](double a, double b) {
      Eigen::Vector2d th(a, b);
      return w1_objective(ds, LossModel::absolute(), eps, th);
    };
    // coarse grid then successive zoom
    double ca = 0, cb = 0, half = 10.0, best = obj(0, 0);
    for (int level = 0; level < 12; ++level) {
      double na = ca, nb = cb;
      for (int i = -50; i <= 50; ++i)
        for (int j = -50; j <= 50; ++j) {
          double a = ca + half * i / 50, b = cb + half * j / 50;
          double v = obj(a, b);
          if (v < best) best = v, na = a, nb = b;
        }
      ca = na, cb = nb;
      half /= 8;
    }
    EXPECT_NEAR(r.objective, best, 1e-5) << eps;
    EXPECT_GE(r.objective, best - 1e-9);
  }
}

TEST(FitW1, RegularizationIsActive) {
  Dataset ds = instance(40, 200, 7);
  double e1 = 0.5 / std::sqrt(200.0);
  FitResult a = fit_w1(ds, LossModel::huber(1.0), e1), b = fit_w1(ds, LossModel::huber(1.0), 2 * e1);
  EXPECT_GT(b.objective - a.objective, 0.0);
}

TEST(FitW1, HistoryIsNonIncreasing) {
  Dataset ds = instance(30, 100, 8);
  FitOptions o;
  o.keep_history = true;
  FitResult r = fit_w1(ds, LossModel::absolute(), 0.05, o);
  ASSERT_FALSE(r.history.empty());
  for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_LE(r.history[i], r.history[i - 1]);
  EXPECT_EQ(r.history.back(), r.objective);
}

TEST(FitW2Squared, OlsOrthogonality) {
  Dataset ds = instance(50, 200, 9);
  FitResult r = fit_w2_squared(ds, 0.0);
  EXPECT_LE((ds.A.transpose() * (ds.A * r.theta_hat - ds.y)).norm() / ds.n, 1e-8);
}

TEST(FitW2Squared, HugeEpsilonCollapses) {
  Dataset ds = instance(50, 200, 10);
  FitResult r = fit_w2_squared(ds, 1e6);
  EXPECT_LT(r.theta_hat.norm(), 1e-12);
  EXPECT_NEAR(r.objective, ds.y.squaredNorm() / ds.n, 1e-12);
}

TEST(FitW2Squared, LocalOptimalityOfSquareRootForm) {
  Dataset ds = instance(10, 30, 11);
  const double eps = 0.05;
  FitResult r = fit_w2_squared(ds, eps);
  auto J = [&](const Eigen::VectorXd& th) {
    return std::sqrt((ds.y - ds.A * th).squaredNorm() / ds.n) + std::sqrt(eps) * th.norm();
  };
  EXPECT_NEAR(r.objective, J(r.theta_hat) * J(r.theta_hat), 1e-14);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 500; ++k) {
    Eigen::VectorXd dir(10);
    for (int i = 0; i < 10; ++i) dir(i) = nd(rng);
    EXPECT_GE(J(r.theta_hat + 1e-4 * dir.normalized()), J(r.theta_hat) - 1e-12);
  }
}

TEST(InnerSup, Examples) {
  auto h = LossModel::huber(1.0);
  auto a = inner_sup(0.5, 0.0, h);
  EXPECT_DOUBLE_EQ(a.value, 0.125);
  EXPECT_DOUBLE_EQ(a.u_star, 0.5);
  auto b = inner_sup(2.0, 0.0, h);
  EXPECT_DOUBLE_EQ(b.value, 1.5);
  EXPECT_DOUBLE_EQ(b.u_star, 1.0);
  auto c = inner_sup(1.0, 0.25, h);
  EXPECT_DOUBLE_EQ(c.u_star, 1.0);
  EXPECT_DOUBLE_EQ(c.value, 0.75);
  EXPECT_NEAR(c.value, inner_grid(1.0, 0.25, 1.0), 1e-9);
  EXPECT_THROW(inner_sup(1.0, 0.5, h), ConcavityViolation);
  EXPECT_THROW(inner_sup(1.0, 0.0, LossModel::absolute()), NotSmooth);
}

TEST(InnerSup, AgainstGrid) {
  for (double r : {-3.0, -0.4, 0.0, 0.7, 2.5})
    for (double s : {0.0, 0.1, 0.3, 0.49})
      EXPECT_NEAR(inner_sup(r, s, LossModel::huber(1.0)).value, inner_grid(r, s, 1.0), 1e-9);
}

TEST(FitW2Smooth, VanishingEpsilonMatchesW1) {
  Dataset ds = instance(40, 150, 12);
  FitResult a = fit_w2_smooth(ds, LossModel::huber(1.0), 1e-12, 4.0);
  FitResult b = fit_w1(ds, LossModel::huber(1.0), 0.0);
  EXPECT_LE((a.theta_hat - b.theta_hat).norm() / std::sqrt(40.0), 1e-4);
}

TEST(FitW2Smooth, DualGridOracleTinyInstance) {
  Dataset ds = instance(3, 5, 13);
  const double R = 2.0;
  for (double eps : {0.05, 0.5}) {
    FitResult r = fit_w2_smooth(ds, LossModel::huber(1.0), eps, R);
    EXPECT_NEAR(r.objective, dual_grid_value(ds, r.theta_hat, 1.0, eps, R, std::nullopt), 1e-6);
    // convex in theta: no random perturbation inside the ball improves on it
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd;
    double worst = 0.0;
    for (int k = 0; k < 12; ++k) {
      Eigen::VectorXd dir(3);
      for (int i = 0; i < 3; ++i) dir(i) = nd(rng);
      Eigen::VectorXd th = r.theta_hat + 1e-3 * dir.normalized();
      if (th.norm() > R * std::sqrt(3.0)) continue;
      worst = std::max(worst, r.objective - dual_grid_value(ds, th, 1.0, eps, R, std::nullopt));
    }
    EXPECT_LE(worst, 1e-5);
    EXPECT_LE(r.theta_hat.norm(), R * std::sqrt(3.0) * (1 + 1e-12));
    EXPECT_TRUE(r.converged) << eps;
  }
}

TEST(FitW2Smooth, IteratesStayInBall) {
  Dataset ds = instance(20, 40, 14);
  const double R = 0.3;  // tight: the constraint is active
  FitResult r = fit_w2_smooth(ds, LossModel::huber(1.0), 0.01, R);
  EXPECT_LE(r.theta_hat.norm(), R * std::sqrt(20.0) * (1 + 1e-12));
  EXPECT_GT(r.theta_hat.norm(), 0.99 * R * std::sqrt(20.0));
}

TEST(FitDre, LargeLambdaMatchesW1) {
  Dataset ds = instance(40, 150, 15);
  FitResult a = fit_dre(ds, LossModel::huber(1.0), 40 * 1e8, 4.0);
  FitResult b = fit_w1(ds, LossModel::huber(1.0), 0.0);
  EXPECT_LE((a.theta_hat - b.theta_hat).norm() / std::sqrt(40.0), 1e-3);
}

TEST(FitDre, DualGridOracleTinyInstance) {
  Dataset ds = instance(3, 5, 16);
  const double R = 1.5, lambda = 3 * 2.0;  // d lambda0 with lambda0 = 2 > M R^2 / 2
  FitResult r = fit_dre(ds, LossModel::huber(1.0), lambda, R);
  EXPECT_NEAR(r.objective, dual_grid_value(ds, r.theta_hat, 1.0, 0.0, R, lambda), 1e-6);
  EXPECT_THROW(fit_dre(ds, LossModel::huber(1.0), 3 * 1.0, R), ConcavityViolation);
  EXPECT_THROW(fit_dre(ds, LossModel::absolute(), lambda, R), NotSmooth);
}
