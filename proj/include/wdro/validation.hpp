#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wdro/loss_models.hpp"
#include "wdro/noise_models.hpp"
#include "wdro/scalarization.hpp"

namespace wdro {

// Oracle suite behind `validate-envelopes`: closed-form envelopes against a
// brute-force prox search, the Huber recovery identity, branch continuity of
// G and E, and the PointMass zero check on F.

struct EnvelopeSuiteOptions {
  int c_points = 81;
  double c_max = 10.0;
  std::vector<double> taus{0.1, 0.5, 1.0, 5.0, 20.0};
  double huber_delta = 1.0;
  double tol = 1e-8;
  int branch_triples = 1000;
  double branch_tol = 1e-12;
  std::uint64_t seed = 7;
  // negative control: multiplies the closed-form Huber envelope's quadratic
  // width by (1 + huber_perturbation)
  double huber_perturbation = 0.0;
};

struct SuiteCheck {
  std::string name;
  double max_dev = 0.0;
  double tol = 0.0;
  bool pass() const { return max_dev <= tol; }
};

struct SuiteReport {
  std::vector<SuiteCheck> checks;
  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const SuiteCheck& c) { return c.pass(); });
  }
};

inline double brute_envelope_of(const LossModel& m, double c, double tau) {
  auto fn = [&](double v) { return eval_loss(m, v); };
  return brute_force_envelope(fn, c, tau, 2.0 * std::abs(c) + 5.0, 1e-13);
}

inline SuiteCheck check_envelope(const LossModel& m, const EnvelopeSuiteOptions& o) {
  SuiteCheck out{"envelope_" + to_string(m.kind), 0.0, o.tol};
  for (int i = 0; i < o.c_points; ++i) {
    const double c = -o.c_max + 2.0 * o.c_max * i / (o.c_points - 1);
    for (double tau : o.taus) {
      HuberShape h = envelope_shape(m, tau);
      if (m.kind == LossKind::Huber) h.gamma *= 1.0 + o.huber_perturbation;
      const double dev = std::abs(h(c) - brute_envelope_of(m, c, tau));
      out.max_dev = std::max(out.max_dev, dev);
    }
  }
  return out;
}

// e_f(., 1/M) = L, both through the closed form and through a brute-force
// envelope of f.
inline SuiteCheck check_huber_recovery(const EnvelopeSuiteOptions& o) {
  const LossModel m = LossModel::huber(o.huber_delta);
  SuiteCheck out{"huber_recovery", 0.0, o.tol};
  const double inv_m = 1.0 / *constants(m).smoothness_m;
  auto f = [&](double u) { return f_component(m, u).value; };
  for (int i = 0; i < o.c_points; ++i) {
    const double c = -o.c_max + 2.0 * o.c_max * i / (o.c_points - 1);
    HuberShape h = f_envelope_shape(m, inv_m);
    h.gamma *= 1.0 + o.huber_perturbation;
    const double l = eval_loss(m, c);
    const double brute = brute_force_envelope(f, c, inv_m, 2.0 * std::abs(c) + 5.0, 1e-13);
    out.max_dev = std::max({out.max_dev, std::abs(h(c) - l), std::abs(brute - l)});
  }
  return out;
}

// Left and right limits at the boundary, one ulp apart.
inline SuiteCheck check_branch_continuity(const EnvelopeSuiteOptions& o) {
  SuiteCheck out{"branch_continuity_G_E", 0.0, o.branch_tol};
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> uc(-5.0, 5.0), ur(0.05, 5.0), us(0.0, 3.0);
  for (int k = 0; k < o.branch_triples; ++k) {
    const double c = uc(rng), rho = ur(rng), sigma = us(rng);
    const double s = std::sqrt(c * c + sigma * sigma);
    const double tg = std::sqrt(rho) * s;
    if (tg > 0) {
      const double left = g_function(c, std::nextafter(tg, 0.0), rho, sigma);
      out.max_dev = std::max(out.max_dev, std::abs(left - g_function(c, tg, rho, sigma)));
    }
    if (s > 0) {
      const double left = e_function(c, std::nextafter(s, 0.0), rho, sigma);
      out.max_dev = std::max(out.max_dev, std::abs(left - e_function(c, s, rho, sigma)));
    }
  }
  return out;
}

inline SuiteCheck check_pointmass_f_zero(const EnvelopeSuiteOptions& o) {
  SuiteCheck out{"pointmass_F_zero", 0.0, o.tol};
  const LossModel m = LossModel::huber(o.huber_delta);
  QuadratureConfig cfg;
  for (double tau : o.taus)
    out.max_dev = std::max(out.max_dev,
                           std::abs(expected_envelope_F(0.0, tau, m, NoiseModel::point_mass(), cfg)));
  return out;
}

inline SuiteReport run_envelope_suite(const EnvelopeSuiteOptions& o = {}) {
  SuiteReport r;
  r.checks.push_back(check_envelope(LossModel::absolute(), o));
  r.checks.push_back(check_envelope(LossModel::squared(), o));
  r.checks.push_back(check_envelope(LossModel::huber(o.huber_delta), o));
  r.checks.push_back(check_huber_recovery(o));
  r.checks.push_back(check_branch_continuity(o));
  r.checks.push_back(check_pointmass_f_zero(o));
  return r;
}

}  // namespace wdro
