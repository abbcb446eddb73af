#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "wdro/errors.hpp"
#include "wdro/loss_models.hpp"

namespace wdro {

enum class NoiseKind { Gaussian, Laplace, PointMass };

struct NoiseModel {
  NoiseKind kind = NoiseKind::Gaussian;
  double param = 1.0;  // Gaussian std, Laplace scale; unused for PointMass

  static NoiseModel gaussian(double sigma) {
    if (!(sigma >= 0) || !std::isfinite(sigma))
      throw ConfigError("gaussian sigma must be finite and >= 0");
    return {NoiseKind::Gaussian, sigma};
  }
  static NoiseModel laplace(double b) {
    if (!(b > 0) || !std::isfinite(b))
      throw ConfigError("laplace scale must be finite and > 0");
    return {NoiseKind::Laplace, b};
  }
  static NoiseModel point_mass() { return {NoiseKind::PointMass, 0.0}; }

  double second_moment() const {
    switch (kind) {
      case NoiseKind::Gaussian: return param * param;
      case NoiseKind::Laplace: return 2.0 * param * param;
      case NoiseKind::PointMass: return 0.0;
    }
    return 0.0;
  }
  double std_dev() const { return std::sqrt(second_moment()); }
};

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::Laplace: return "laplace";
    case NoiseKind::PointMass: return "pointmass";
  }
  return "?";
}

enum class QuadratureMode { Quadrature, MonteCarlo };

struct QuadratureConfig {
  int gh_nodes = 64;
  std::int64_t mc_samples = 100000;
  QuadratureMode mode = QuadratureMode::Quadrature;
  std::uint64_t seed = 20240601;

  void validate() const {
    if (gh_nodes < 8) throw ConfigError("quadrature.gh_nodes must be >= 8");
    if (mc_samples < 10000)
      throw ConfigError("quadrature.mc_samples must be >= 10000");
  }
};

using Rng = std::mt19937_64;

inline double draw(const NoiseModel& m, Rng& rng) {
  switch (m.kind) {
    case NoiseKind::Gaussian:
      return m.param * std::normal_distribution<double>(0.0, 1.0)(rng);
    case NoiseKind::Laplace: {
      double e = std::exponential_distribution<double>(1.0)(rng);
      bool neg = (rng() >> 63) != 0;
      return neg ? -m.param * e : m.param * e;
    }
    case NoiseKind::PointMass: return 0.0;
  }
  return 0.0;
}

inline std::vector<double> sample(const NoiseModel& m, std::uint64_t seed,
                                  std::size_t n) {
  if (n == 0) throw DomainError("sample requires n >= 1");
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) v = draw(m, rng);
  return out;
}

// Gauss rules from the Golub-Welsch eigenproblem.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

inline GaussRule golub_welsch(const Eigen::VectorXd& diag,
                              const Eigen::VectorXd& off, double mu0) {
  const int n = static_cast<int>(diag.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) J(i, i) = diag(i);
  for (int i = 0; i + 1 < n; ++i) J(i, i + 1) = J(i + 1, i) = off(i);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    r.nodes[i] = es.eigenvalues()(i);
    double v = es.eigenvectors()(0, i);
    r.weights[i] = mu0 * v * v;
  }
  return r;
}

template <class Build>
const GaussRule& cached_rule(std::map<int, std::unique_ptr<GaussRule>>& table,
                             std::mutex& mu, int n, Build&& build) {
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = table[n];
  if (!slot) slot = std::make_unique<GaussRule>(build(n));
  return *slot;
}

}  // namespace detail

// Probabilists' Hermite: weight exp(-x^2/2)/sqrt(2 pi), weights sum to one.
inline const GaussRule& hermite_rule(int n) {
  static std::map<int, std::unique_ptr<GaussRule>> table;
  static std::mutex mu;
  return detail::cached_rule(table, mu, n, [](int k) {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd off(k > 1 ? k - 1 : 0);
    for (int i = 0; i + 1 < k; ++i) off(i) = std::sqrt(double(i + 1));
    return detail::golub_welsch(diag, off, 1.0);
  });
}

// Legendre on [-1, 1], weights sum to two.
inline const GaussRule& legendre_rule(int n) {
  static std::map<int, std::unique_ptr<GaussRule>> table;
  static std::mutex mu;
  return detail::cached_rule(table, mu, n, [](int k) {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd off(k > 1 ? k - 1 : 0);
    for (int i = 0; i + 1 < k; ++i) {
      double j = i + 1.0;
      off(i) = j / std::sqrt(4.0 * j * j - 1.0);
    }
    return detail::golub_welsch(diag, off, 2.0);
  });
}

// Laguerre: weight exp(-x) on [0, inf).
inline const GaussRule& laguerre_rule(int n) {
  static std::map<int, std::unique_ptr<GaussRule>> table;
  static std::mutex mu;
  return detail::cached_rule(table, mu, n, [](int k) {
    Eigen::VectorXd diag(k);
    Eigen::VectorXd off(k > 1 ? k - 1 : 0);
    for (int i = 0; i < k; ++i) diag(i) = 2.0 * i + 1.0;
    for (int i = 0; i + 1 < k; ++i) off(i) = double(i + 1);
    return detail::golub_welsch(diag, off, 1.0);
  });
}

// E f(G, Z) with G ~ N(0,1) independent of Z.
template <class F>
double product_expectation(F&& integrand, const NoiseModel& noise,
                           const QuadratureConfig& cfg) {
  auto checked = [&](double g, double z) {
    double v = integrand(g, z);
    if (!std::isfinite(v))
      throw EvaluationError("non-finite integrand at quadrature node", g, z);
    return v;
  };
  if (cfg.mode == QuadratureMode::MonteCarlo) {
    Rng rng(cfg.seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    double sum = 0.0;
    for (std::int64_t i = 0; i < cfg.mc_samples; ++i) {
      double g = nd(rng);
      double z = draw(noise, rng);
      sum += checked(g, z);
    }
    return sum / double(cfg.mc_samples);
  }
  const GaussRule& gh = hermite_rule(cfg.gh_nodes);
  const int n = cfg.gh_nodes;
  double total = 0.0;
  switch (noise.kind) {
    case NoiseKind::PointMass:
      for (int i = 0; i < n; ++i) total += gh.weights[i] * checked(gh.nodes[i], 0.0);
      break;
    case NoiseKind::Gaussian:
      for (int i = 0; i < n; ++i) {
        double inner = 0.0;
        for (int j = 0; j < n; ++j)
          inner += gh.weights[j] * checked(gh.nodes[i], noise.param * gh.nodes[j]);
        total += gh.weights[i] * inner;
      }
      break;
    case NoiseKind::Laplace: {
      const GaussRule& gl = laguerre_rule(cfg.gh_nodes);
      for (int i = 0; i < n; ++i) {
        double inner = 0.0;
        for (int j = 0; j < n; ++j) {
          double z = noise.param * gl.nodes[j];
          inner += 0.5 * gl.weights[j] *
                   (checked(gh.nodes[i], z) + checked(gh.nodes[i], -z));
        }
        total += gh.weights[i] * inner;
      }
      break;
    }
  }
  return total;
}

// Monte Carlo estimate together with its standard error.
template <class F>
std::pair<double, double> monte_carlo_expectation(F&& integrand,
                                                  const NoiseModel& noise,
                                                  std::int64_t samples,
                                                  std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  double mean = 0.0, m2 = 0.0;
  for (std::int64_t i = 0; i < samples; ++i) {
    double g = nd(rng);
    double z = draw(noise, rng);
    double v = integrand(g, z);
    double dlt = v - mean;
    mean += dlt / double(i + 1);
    m2 += dlt * (v - mean);
  }
  double var = samples > 1 ? m2 / double(samples - 1) : 0.0;
  return {mean, std::sqrt(var / double(samples))};
}

// ---------------------------------------------------------------------------
// Closed-form Gaussian smoothing of HuberShape.

inline double normal_pdf(double x) {
  return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

// P(U > x)
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// E h(m + s U), U ~ N(0,1).
inline double gaussian_expectation(const HuberShape& h, double m, double s) {
  s = std::abs(s);
  if (s == 0.0) return h(m);
  if (std::isinf(h.slope)) return (m * m + s * s) / (2.0 * h.gamma);
  const double a = h.slope;
  if (h.gamma == 0.0) {
    // a * E|m + sU|
    double t = m / s;
    return a * (m * (1.0 - 2.0 * normal_sf(t)) + 2.0 * s * normal_pdf(t));
  }
  const double k = a * h.gamma;
  const double al = (-k - m) / s;
  const double be = (k - m) / s;
  const double pa = normal_pdf(al), pb = normal_pdf(be);
  const double ql = normal_sf(-al);  // P(U < al)
  const double qr = normal_sf(be);   // P(U > be)
  const double p = 1.0 - ql - qr;
  const double eu = pa - pb;
  const double eu2 = p + al * pa - be * pb;
  const double ex2 = m * m * p + 2.0 * m * s * eu + s * s * eu2;
  const double eabs_out = m * qr + s * pb - m * ql + s * pa;
  return ex2 / (2.0 * h.gamma) + a * eabs_out - 0.5 * a * a * h.gamma * (ql + qr);
}

// E h(b X), X ~ Exp(1); equals E h(Z) for Z ~ Laplace(b) since h is even.
inline double laplace_expectation(const HuberShape& h, double b) {
  if (std::isinf(h.slope)) return b * b / h.gamma;
  const double a = h.slope;
  if (h.gamma == 0.0) return a * b;
  const double t = a * h.gamma / b;
  const double et = std::exp(-t);
  return b * b / (2.0 * h.gamma) * (2.0 - et * (t * t + 2.0 * t + 2.0)) +
         a * b * et * (t + 1.0) - 0.5 * a * a * h.gamma * et;
}

namespace detail {

// int_u^v z^j e^{-z/b}/b dz for j = 0, 1, 2; v may be +inf.
inline double exp_moment(int j, double u, double v, double b) {
  auto anti = [&](double z) {
    if (std::isinf(z)) return 0.0;
    const double e = -std::exp(-z / b);
    switch (j) {
      case 0: return e;
      case 1: return e * (z + b);
      default: return e * (z * z + 2.0 * b * z + 2.0 * b * b);
    }
  };
  return anti(v) - anti(u);
}

// E h(c G + Z) for Z ~ Laplace(b), c > 0, finite slope. With k = slope*gamma,
// the Gaussian-smoothed shape H(z) = E h(z + cG) is quadratic up to
// exponentially small terms on [0, k - 12c] and linear beyond k + 12c; both
// pieces are integrated exactly against the exponential weight. The band
// around the kink is covered by Gauss-Legendre panels no wider than 1.5c
// near the kink and 2b overall.
inline double laplace_smoothed(const HuberShape& h, double c, double b) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double a = h.slope;
  const double k = a * h.gamma;
  const double lo = std::max(0.0, k - 12.0 * c);
  const double hi = k + 12.0 * c;
  double total = 0.0;
  if (lo > 0.0)
    total += (exp_moment(2, 0.0, lo, b) + c * c * exp_moment(0, 0.0, lo, b)) /
             (2.0 * h.gamma);
  total += a * exp_moment(1, hi, kInf, b) -
           0.5 * a * a * h.gamma * exp_moment(0, hi, kInf, b);

  // Past lo + 60b the weight is below e^-60 of its value at lo.
  const double top = std::min(hi, lo + 60.0 * b);
  std::vector<double> cuts{lo, top};
  for (double t : {-6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0}) {
    double z = k + t * c;
    if (z > lo && z < top) cuts.push_back(z);
  }
  std::sort(cuts.begin(), cuts.end());
  const GaussRule& gl = legendre_rule(20);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double w = cuts[i + 1] - cuts[i];
    if (!(w > 0)) continue;
    const int pieces = std::max(1, static_cast<int>(std::ceil(w / (2.0 * b))));
    const double step = w / pieces;
    for (int p = 0; p < pieces; ++p) {
      const double z0 = cuts[i] + p * step;
      const double mid = z0 + 0.5 * step;
      double acc = 0.0;
      for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
        double z = mid + 0.5 * step * gl.nodes[q];
        acc += gl.weights[q] * std::exp(-z / b) * gaussian_expectation(h, z, c);
      }
      total += 0.5 * step * acc / b;
    }
  }
  return total;
}

}  // namespace detail

// E h(c G + Z). Gaussian and point-mass noise reduce to a single Gaussian and
// are exact; Laplace is exact off the smoothed kink and uses panel
// Gauss-Legendre across it.
inline double shape_expectation(const HuberShape& h, double c,
                                const NoiseModel& noise,
                                const QuadratureConfig& cfg) {
  if (cfg.mode == QuadratureMode::MonteCarlo)
    return product_expectation([&](double g, double z) { return h(c * g + z); },
                               noise, cfg);
  switch (noise.kind) {
    case NoiseKind::PointMass: return gaussian_expectation(h, 0.0, c);
    case NoiseKind::Gaussian:
      return gaussian_expectation(h, 0.0, std::hypot(c, noise.param));
    case NoiseKind::Laplace: {
      c = std::abs(c);
      const double b = noise.param;
      if (c == 0.0) return laplace_expectation(h, b);
      if (std::isinf(h.slope)) return (c * c + 2.0 * b * b) / (2.0 * h.gamma);
      return detail::laplace_smoothed(h, c, b);
    }
  }
  return 0.0;
}

}  // namespace wdro
