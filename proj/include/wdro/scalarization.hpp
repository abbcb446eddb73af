#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>

#include "wdro/errors.hpp"
#include "wdro/loss_models.hpp"
#include "wdro/noise_models.hpp"
#include "wdro/search.hpp"

namespace wdro {

enum class Mode { W1, W2_DRO, W2_DRO_Squared, DRE, DRE_Squared };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::W1: return "w1";
    case Mode::W2_DRO: return "w2_dro";
    case Mode::W2_DRO_Squared: return "w2_dro_squared";
    case Mode::DRE: return "dre";
    case Mode::DRE_Squared: return "dre_squared";
  }
  return "?";
}

struct ProblemSpec {
  Mode mode = Mode::W1;
  LossModel loss = LossModel::huber();
  NoiseModel noise = NoiseModel::gaussian(1.0);
  double rho = 0.5;
  double epsilon0 = 0.0;
  double lambda0 = 0.0;
  double sigma_theta0 = 1.0;
  std::optional<double> r_theta;  // defaults to 4 sigma_theta0
  std::optional<double> l_lower;
  bool shift = false;

  double radius() const { return r_theta ? *r_theta : 4.0 * sigma_theta0; }

  // M; squared-loss modes use M = 2 regardless of how the loss is stored.
  double smoothness() const {
    auto m = constants(loss).smoothness_m;
    if (!m) throw NotSmooth("loss has no smoothness constant");
    return *m;
  }
};

inline bool is_squared_mode(Mode m) {
  return m == Mode::W2_DRO_Squared || m == Mode::DRE_Squared;
}

inline void validate(const ProblemSpec& s) {
  auto bad = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(s.rho > 0) || !std::isfinite(s.rho)) bad("rho must be positive");
  if (!(s.sigma_theta0 > 0) || !std::isfinite(s.sigma_theta0))
    bad("sigma_theta0 must be positive");
  if (!(s.radius() > 0) || !std::isfinite(s.radius()))
    bad("r_theta must be positive");
  if (s.l_lower && !(*s.l_lower > 0)) bad("l_lower must be positive");
  if (is_squared_mode(s.mode) && s.loss.kind != LossKind::Squared)
    bad("mode " + to_string(s.mode) + " requires the squared loss");
  switch (s.mode) {
    case Mode::W1:
      if (!(s.epsilon0 >= 0)) bad("epsilon0 must be >= 0");
      if (s.epsilon0 > 0 && !constants(s.loss).lipschitz)
        bad("w1 with epsilon0 > 0 requires a loss with a finite Lipschitz constant");
      break;
    case Mode::W2_DRO:
      if (!(s.epsilon0 >= 0)) bad("epsilon0 must be >= 0");
      if (s.loss.kind == LossKind::Absolute)
        bad("w2_dro requires a smooth loss");
      if (s.loss.kind == LossKind::Squared)
        bad("w2_dro with the squared loss: use mode w2_dro_squared");
      if (s.radius() < 2.0 * s.sigma_theta0)
        bad("w2_dro requires r_theta >= 2 sigma_theta0");
      break;
    case Mode::W2_DRO_Squared:
      if (!(s.epsilon0 >= 0)) bad("epsilon0 must be >= 0");
      break;
    case Mode::DRE: {
      if (s.loss.kind == LossKind::Absolute) bad("dre requires a smooth loss");
      if (s.loss.kind == LossKind::Squared)
        bad("dre with the squared loss: use mode dre_squared");
      if (s.radius() < s.sigma_theta0)
        bad("dre requires r_theta >= sigma_theta0");
      const double M = s.smoothness(), R = s.radius();
      if (!(s.lambda0 > M * R * R / 2.0))
        bad("dre requires lambda0 > M r_theta^2 / 2");
      break;
    }
    case Mode::DRE_Squared: {
      const double R = s.radius();
      if (s.radius() < s.sigma_theta0)
        bad("dre_squared requires r_theta >= sigma_theta0");
      if (!(s.lambda0 > R * R)) bad("dre_squared requires lambda0 > r_theta^2");
      break;
    }
  }
}

struct DerivedConstants {
  double B = 0.0;
  double p_const = 0.0;
  double q_const = 0.0;
  std::optional<double> epsilon0_max;
};

inline DerivedConstants derived_constants(const ProblemSpec& s) {
  DerivedConstants d;
  auto m = constants(s.loss).smoothness_m;
  const double M = m ? *m : 0.0;
  const double R = s.radius();
  d.B = std::sqrt(s.epsilon0 * s.rho) * M * R;
  d.p_const = s.epsilon0 * std::sqrt(s.rho) * M * R / 2.0;
  d.q_const = 2.0 * std::sqrt(s.rho) * M * R;
  if (s.l_lower && M > 0) d.epsilon0_max = *s.l_lower / (s.rho * M * M * R * R);
  return d;
}

// ---------------------------------------------------------------------------

// tau = 0 is accepted as the limit of the first branch.
inline double g_function(double c, double tau, double rho, double sigma) {
  const double s2 = c * c + sigma * sigma;
  const double sr = std::sqrt(rho);
  if (sr * std::sqrt(s2) > tau) return std::sqrt(s2 / rho) - tau / (2.0 * rho) - sigma / sr;
  return s2 / (2.0 * tau) - sigma / sr;
}

// Same constant -sigma_z/sqrt(rho) in both branches.
inline double e_function(double c, double tau, double rho, double sigma_z) {
  const double n = std::sqrt(c * c + sigma_z * sigma_z);
  const double k = sigma_z / std::sqrt(rho);
  if (std::isinf(tau)) return -k;
  if (n > tau) return n - tau / 2.0 - k;
  return n * n / (2.0 * tau) - k;
}

inline double expected_shifted_envelope_L(double c, double tau,
                                          const LossModel& loss,
                                          const NoiseModel& noise,
                                          const QuadratureConfig& cfg,
                                          bool shift) {
  if (!(tau > 0)) throw DomainError("envelope requires tau > 0");
  double v = std::isinf(tau) ? 0.0 : shape_expectation(envelope_shape(loss, tau), c, noise, cfg);
  if (shift) v -= shape_expectation(loss_shape(loss), 0.0, noise, cfg);
  return v;
}

inline double expected_envelope_F(double c, double tau, const LossModel& loss,
                                  const NoiseModel& noise,
                                  const QuadratureConfig& cfg) {
  if (!(tau > 0)) throw DomainError("envelope requires tau > 0");
  HuberShape h = f_envelope_shape(loss, tau);
  if (std::isinf(tau)) return 0.0;
  return shape_expectation(h, c, noise, cfg);
}

// Evaluates the objectives for one spec. Holds a private memo of envelope
// values keyed on (c, tau) rounded to 1e-12; not shareable across threads.
class Scalarizer {
 public:
  Scalarizer(const ProblemSpec& spec, const QuadratureConfig& cfg)
      : spec_(spec), cfg_(cfg), dc_(derived_constants(spec)) {
    if (auto m = constants(spec.loss).smoothness_m) M_ = *m;
    if (auto l = constants(spec.loss).lipschitz) lip_ = *l;
    if (spec.shift)
      shift_value_ = shape_expectation(loss_shape(spec.loss), 0.0, spec.noise, cfg);
  }

  const ProblemSpec& spec() const { return spec_; }
  const QuadratureConfig& quadrature() const { return cfg_; }
  const DerivedConstants& derived() const { return dc_; }
  double M() const { return M_; }

  // expected (shifted) envelope of L; tau = inf gives the limit
  double L(double c, double tau) {
    if (std::isinf(tau)) return -shift_value_;
    return memo(cache_L_, c, tau, [&] {
      return shape_expectation(envelope_shape(spec_.loss, tau), c, spec_.noise, cfg_);
    }) - shift_value_;
  }

  // expected envelope of f; for the squared loss f is the indicator of {0}
  // and the envelope is x^2/(2 tau)
  double F(double c, double tau) {
    if (std::isinf(tau)) return 0.0;
    if (spec_.loss.kind == LossKind::Squared)
      return (c * c + spec_.noise.second_moment()) / (2.0 * tau);
    return memo(cache_F_, c, tau, [&] {
      return shape_expectation(f_envelope_shape(spec_.loss, tau), c, spec_.noise, cfg_);
    });
  }

  double w1(double a, double t1, double t2, double b) {
    const double rho = spec_.rho;
    const double k = spec_.epsilon0 * lip_;
    return b * t1 / 2.0 + L(a, ratio(t1, b)) / rho + tau2_block(a, b, t2, k);
  }

  // -a t2/2 - a b^2/(2 t2) + k G(a b/t2, a k/t2), rearranged so that the
  // O(1/t2) terms cancel analytically. The coefficient of 1/t2 is
  // -a (b - k/sqrt(rho))^2 / 2, which vanishes on the line b = k/sqrt(rho);
  // there the sup over t2 sits at t2 -> 0 and the direct formula loses all
  // digits.
  double tau2_block(double a, double b, double t2, double k) const {
    const double rho = spec_.rho, s = spec_.sigma_theta0, sr = std::sqrt(rho);
    const double ab = a * b, st = s * t2;
    const double root = std::hypot(ab, st);
    if (sr * root > a * k) {
      const double d = b - k / sr;
      const double den = root + ab;
      const double tail = den > 0 ? k * s * st / (sr * den) : 0.0;
      return -a * t2 / 2.0 - a * d * d / (2.0 * t2) + tail - k * s / sr;
    }
    return -a * t2 / 2.0 + (a > 0 ? s * st / (2.0 * a) : 0.0) - k * s / sr;
  }

  double o1(double a, double t1, double t2, double b) {
    const double rho = spec_.rho, s = spec_.sigma_theta0;
    const double se = std::sqrt(spec_.epsilon0);
    return b * t1 / 2.0 + se * b * t2 / 2.0 - b * b / (2.0 * M_) + F(a, ratio(t1, b)) -
           a * b * std::sqrt(rho) * std::sqrt(rho * spec_.epsilon0 * s * s / (t2 * t2) + 1.0) +
           se * b * rho * (s * s + a * a) / (2.0 * t2);
  }

  // The bracket in O2 as a function of tau2.
  double o2_tau2_part(double a, double b, double t2) const {
    const double rho = spec_.rho, s = spec_.sigma_theta0;
    const double P = dc_.p_const + b * b / dc_.q_const;
    return P * t2 / 2.0 -
           a * std::sqrt(rho) * std::sqrt(P * P * rho * s * s / (t2 * t2) + b * b) +
           rho * P * (s * s + a * a) / (2.0 * t2);
  }

  Opt1D o2_tau2_min(double a, double b) const {
    const double P = dc_.p_const + b * b / dc_.q_const;
    if (P == 0.0) return {1.0, 0.0};
    const double rho = spec_.rho, s = spec_.sigma_theta0;
    return minimize_halfline([&](double t2) { return o2_tau2_part(a, b, t2); },
                             std::sqrt(rho * (s * s + a * a)));
  }

  double o2(double a, double t1, double b, double* tau2_out = nullptr) {
    Opt1D in = o2_tau2_min(a, b);
    if (tau2_out) *tau2_out = in.x;
    return b * t1 / 2.0 - b * b / (2.0 * M_) + F(a, ratio(t1, b)) + in.f;
  }

  double dre(double a, double t1, double b) {
    const double rho = spec_.rho, s = spec_.sigma_theta0, l0 = spec_.lambda0;
    return b * t1 / 2.0 - b * b / (2.0 * M_) + F(a, ratio(t1, b)) +
           b * b * (s * s + a * a) / (4.0 * l0) -
           a * b * std::sqrt(rho + b * b * s * s / (4.0 * l0 * l0));
  }

  double sq_dro(double a, double t1, double t2, double b) {
    const double rho = spec_.rho;
    const double se = std::sqrt(spec_.epsilon0);
    return b * t1 / 2.0 + e_function(a, ratio(t1, b), rho, spec_.noise.std_dev()) / rho +
           tau2_block(a, b, t2, se);
  }

  double sq_dre(double a, double b) const {
    const double rho = spec_.rho, s = spec_.sigma_theta0, l0 = spec_.lambda0;
    const double sz2 = spec_.noise.second_moment();
    return b * std::sqrt(a * a + sz2) - b * b / 4.0 + b * b * (s * s + a * a) / (4.0 * l0) -
           a * b * std::sqrt(rho + b * b * s * s / (4.0 * l0 * l0));
  }

 private:
  static double ratio(double t1, double b) {
    return b == 0.0 ? std::numeric_limits<double>::infinity() : t1 / b;
  }

  struct KeyHash {
    std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& k) const {
      std::uint64_t h = static_cast<std::uint64_t>(k.first) * 0x9E3779B97F4A7C15ull;
      h ^= static_cast<std::uint64_t>(k.second) + 0x7F4A7C159E3779B9ull + (h << 6) + (h >> 2);
      return static_cast<std::size_t>(h);
    }
  };
  using Cache = std::unordered_map<std::pair<std::int64_t, std::int64_t>, double, KeyHash>;

  template <class Eval>
  double memo(Cache& cache, double c, double tau, Eval&& eval) {
    constexpr double q = 1e12;
    if (std::abs(c) > 9e6 || tau > 9e6 || cache.size() > 4000000) return eval();
    std::pair<std::int64_t, std::int64_t> key{std::llround(c * q), std::llround(tau * q)};
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    double v = eval();
    cache.emplace(key, v);
    return v;
  }

  ProblemSpec spec_;
  QuadratureConfig cfg_;
  DerivedConstants dc_;
  double M_ = 0.0;
  double lip_ = 0.0;
  double shift_value_ = 0.0;
  Cache cache_L_;
  Cache cache_F_;
};

// Free-function forms of the objectives.

inline double objective_w1(double a, double t1, double t2, double b,
                           const ProblemSpec& spec, const QuadratureConfig& cfg) {
  return Scalarizer(spec, cfg).w1(a, t1, t2, b);
}

inline double objective_o1(double a, double t1, double t2, double b,
                           const ProblemSpec& spec, const QuadratureConfig& cfg) {
  return Scalarizer(spec, cfg).o1(a, t1, t2, b);
}

inline double objective_o2(double a, double t1, double b, const ProblemSpec& spec,
                           const QuadratureConfig& cfg) {
  return Scalarizer(spec, cfg).o2(a, t1, b);
}

inline double objective_dre(double a, double t1, double b, const ProblemSpec& spec,
                            const QuadratureConfig& cfg) {
  return Scalarizer(spec, cfg).dre(a, t1, b);
}

inline double objective_sq_dro(double a, double t1, double t2, double b,
                               const ProblemSpec& spec, const QuadratureConfig& cfg) {
  return Scalarizer(spec, cfg).sq_dro(a, t1, t2, b);
}

inline double objective_sq_dre(double a, double b, const ProblemSpec& spec) {
  return Scalarizer(spec, QuadratureConfig{}).sq_dre(a, b);
}

}  // namespace wdro
