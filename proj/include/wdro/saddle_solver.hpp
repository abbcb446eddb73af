#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wdro/errors.hpp"
#include "wdro/scalarization.hpp"
#include "wdro/search.hpp"

namespace wdro {

enum class Branch { V1, V2, Tie, Single };

inline std::string to_string(Branch b) {
  switch (b) {
    case Branch::V1: return "V1";
    case Branch::V2: return "V2";
    case Branch::Tie: return "Tie";
    case Branch::Single: return "Single";
  }
  return "?";
}

enum Flag : unsigned {
  kAlphaAtUpperBound = 1u << 0,
  kEpsilonBoundUnverified = 1u << 1,
  kEpsilonBoundViolated = 1u << 2,
  kDreUpperBoundOnly = 1u << 3,
  kNonUniqueWarning = 1u << 4,
};

inline std::vector<std::string> flag_names(unsigned flags) {
  std::vector<std::string> out;
  if (flags & kAlphaAtUpperBound) out.push_back("AlphaAtUpperBound");
  if (flags & kEpsilonBoundUnverified) out.push_back("EpsilonBoundUnverified");
  if (flags & kEpsilonBoundViolated) out.push_back("EpsilonBoundViolated");
  if (flags & kDreUpperBoundOnly) out.push_back("DreUpperBoundOnly");
  if (flags & kNonUniqueWarning) out.push_back("NonUniqueWarning");
  return out;
}

struct Witness {
  double tau1 = 0.0;
  double tau2 = 0.0;
  double beta = 0.0;
};

struct Prediction {
  Mode mode = Mode::W1;
  double alpha_star = 0.0;
  double alpha_star_sq = 0.0;
  double value = 0.0;
  std::optional<double> value_v1;
  std::optional<double> value_v2;
  std::optional<double> alpha_v1;
  std::optional<double> alpha_v2;
  Witness witness;
  Branch branch = Branch::Single;
  unsigned flags = 0;

  bool has(Flag f) const { return (flags & f) != 0; }
};

struct SolverOptions {
  double tol = 1e-7;
  double tie_tol = 1e-8;
  // Flatness probe for the squared-loss DRO: the alpha-marginal is called
  // flat when it stays within flat_tol of the optimum at alpha* +- flat_width.
  double flat_width = 1e-3;
  double flat_tol = 1e-9;
  SearchOptions search;
};

struct Marginal {
  double value = 0.0;
  Witness w;
};

// The alpha-marginal value function of one scalar problem, together with the
// alpha bracket and the reversed-order value used as a certificate.
class ScalarProblem {
 public:
  enum class Kind { W1, W2V1, W2V2, DRE, SqDRO, SqDRE };

  ScalarProblem(Kind kind, const ProblemSpec& spec, const QuadratureConfig& cfg,
                const SolverOptions& opt)
      : kind_(kind), s_(spec, cfg), opt_(opt) {
    const double sig = spec.sigma_theta0;
    cap_ = 10.0 * (sig + spec.noise.std_dev() + 1.0);
    B_ = s_.derived().B;
    switch (kind) {
      case Kind::W1:
      case Kind::SqDRO: alpha_ = {0.0, cap_, false, true}; break;
      case Kind::W2V1:
      case Kind::W2V2: alpha_ = {0.0, sig, false, false}; break;
      case Kind::DRE:
      case Kind::SqDRE: alpha_ = {0.0, spec.radius() + sig, false, false}; break;
    }
    switch (kind) {
      case Kind::W2V1:
        beta_ = {B_ > 0 ? B_ * (1.0 + 1e-9) : 0.0, std::max(cap_, 4.0 * B_), false, true};
        break;
      case Kind::W2V2: beta_ = {0.0, B_, false, false}; break;
      default: beta_ = {0.0, cap_, false, true}; break;
    }
  }

  const Bracket& alpha_bracket() const { return alpha_; }
  const Bracket& beta_bracket() const { return beta_; }
  Scalarizer& scalarizer() { return s_; }

  // Inner value at fixed (alpha, beta): minimize over tau1, optimize tau2.
  // The tau1/beta searches start at 1/beta, the small-beta scale of the
  // minimizer.
  Marginal at(double a, double b) {
    const double rho = s_.spec().rho, sig = s_.spec().sigma_theta0;
    switch (kind_) {
      case Kind::W1:
      case Kind::SqDRO: {
        auto f = [&](double t1, double t2, double bb) {
          return kind_ == Kind::W1 ? s_.w1(a, t1, t2, bb) : s_.sq_dro(a, t1, t2, bb);
        };
        double t1 = 0.0;
        if (b > 0) t1 = b * minimize_halfline([&](double mu) { return f(b * mu, 1.0, b); },
                                             1.0 / b, opt_.search).x;
        Opt1D t2 = maximize_halfline([&](double x) { return f(t1, x, b); },
                                     b > 0 ? b : 1.0, opt_.search);
        return {t2.f, {t1, t2.x, b}};
      }
      case Kind::W2V1: {
        double t1 = 0.0;
        if (b > 0) t1 = b * minimize_halfline([&](double mu) { return s_.o1(a, b * mu, 1.0, b); },
                                             1.0 / b, opt_.search).x;
        Opt1D t2 = minimize_halfline([&](double x) { return s_.o1(a, t1, x, b); },
                                     std::sqrt(rho) * sig + 1e-3, opt_.search);
        return {t2.f, {t1, t2.x, b}};
      }
      case Kind::W2V2: {
        double t1 = 0.0;
        if (b > 0)
          t1 = b * minimize_halfline(
                       [&](double mu) { return b * b * mu / 2.0 + s_.F(a, mu); }, 1.0 / b,
                       opt_.search).x;
        double t2 = 0.0;
        double v = s_.o2(a, t1, b, &t2);
        return {v, {t1, t2, b}};
      }
      case Kind::DRE: {
        if (b == 0) return {s_.dre(a, 1.0, 0.0), {0.0, 0.0, 0.0}};
        Opt1D m = minimize_halfline([&](double mu) { return s_.dre(a, b * mu, b); }, 1.0 / b,
                                    opt_.search);
        return {m.f, {b * m.x, 0.0, b}};
      }
      case Kind::SqDRE: return {s_.sq_dre(a, b), {0.0, 0.0, b}};
    }
    return {};
  }

  Marginal value(double a) {
    Opt1D r = maximize_concave_1d([&](double b) { return at(a, b).value; }, beta_, opt_.tol,
                                  opt_.search);
    Marginal m = at(a, r.x);
    return m;
  }

  double value_only(double a) {
    return maximize_concave_1d([&](double b) { return at(a, b).value; }, beta_, opt_.tol,
                               opt_.search).f;
  }

  struct Solution {
    double alpha = 0.0;
    Marginal m;
  };

  Solution solve() {
    Opt1D r = minimize_convex_1d([&](double a) { return value_only(a); }, alpha_, opt_.tol,
                                 opt_.search);
    return {r.x, value(r.x)};
  }

  // Reversed outer order: max over beta of min over alpha, with the tau
  // variables still optimized innermost. In this order the alpha-section may
  // be unbounded below for some beta; such beta cannot be the maximizer.
  double max_min() {
    auto outer = [&](double b) -> double {
      try {
        return minimize_convex_1d([&](double a) { return at(a, b).value; }, alpha_, opt_.tol,
                                  opt_.search).f;
      } catch (const BracketError&) {
        return -std::numeric_limits<double>::infinity();
      }
    };
    return maximize_concave_1d(outer, beta_, opt_.tol, opt_.search).f;
  }

 private:
  Kind kind_;
  Scalarizer s_;
  SolverOptions opt_;
  Bracket alpha_;
  Bracket beta_;
  double cap_ = 1.0;
  double B_ = 0.0;
};

namespace detail {

inline void require_mode(const ProblemSpec& spec, Mode m) {
  if (spec.mode != m)
    throw ConfigError("solver called with mode " + to_string(spec.mode) + ", expected " +
                      to_string(m));
  validate(spec);
}

inline Prediction make_prediction(const ProblemSpec& spec, double alpha,
                                  const Marginal& m) {
  Prediction p;
  p.mode = spec.mode;
  p.alpha_star = alpha;
  p.alpha_star_sq = alpha * alpha;
  p.value = m.value;
  p.witness = m.w;
  p.branch = Branch::Single;
  return p;
}

inline void check_unbounded(const ScalarProblem::Solution& s, const Bracket& b) {
  if (b.open_hi && !std::isfinite(s.alpha))
    throw UnboundedMinimizer("alpha-marginal minimizer is unbounded");
}

}  // namespace detail

inline Prediction solve_w1(const ProblemSpec& spec, const QuadratureConfig& cfg,
                           const SolverOptions& opt = {}) {
  detail::require_mode(spec, Mode::W1);
  ScalarProblem p(ScalarProblem::Kind::W1, spec, cfg, opt);
  ScalarProblem::Solution s;
  try {
    s = p.solve();
  } catch (const BracketError& e) {
    throw UnboundedMinimizer(std::string("w1: ") + e.what());
  }
  return detail::make_prediction(spec, s.alpha, s.m);
}

inline Prediction solve_w2(const ProblemSpec& spec, const QuadratureConfig& cfg,
                           const SolverOptions& opt = {}) {
  detail::require_mode(spec, Mode::W2_DRO);
  ScalarProblem p1(ScalarProblem::Kind::W2V1, spec, cfg, opt);
  ScalarProblem p2(ScalarProblem::Kind::W2V2, spec, cfg, opt);
  ScalarProblem::Solution s1 = p1.solve();
  ScalarProblem::Solution s2 = p2.solve();
  Prediction out;
  if (std::abs(s1.m.value - s2.m.value) <= opt.tie_tol) {
    const auto& s = s1.alpha >= s2.alpha ? s1 : s2;
    out = detail::make_prediction(spec, s.alpha, s.m);
    out.value = std::max(s1.m.value, s2.m.value);
    out.branch = Branch::Tie;
  } else if (s1.m.value > s2.m.value) {
    out = detail::make_prediction(spec, s1.alpha, s1.m);
    out.branch = Branch::V1;
  } else {
    out = detail::make_prediction(spec, s2.alpha, s2.m);
    out.branch = Branch::V2;
  }
  out.value_v1 = s1.m.value;
  out.value_v2 = s2.m.value;
  out.alpha_v1 = s1.alpha;
  out.alpha_v2 = s2.alpha;
  if (out.alpha_star >= spec.sigma_theta0 - opt.tol) out.flags |= kAlphaAtUpperBound;
  DerivedConstants dc = derived_constants(spec);
  if (!dc.epsilon0_max)
    out.flags |= kEpsilonBoundUnverified;
  else if (spec.epsilon0 > *dc.epsilon0_max)
    out.flags |= kEpsilonBoundViolated;
  return out;
}

inline Prediction solve_dre(const ProblemSpec& spec, const QuadratureConfig& cfg,
                            const SolverOptions& opt = {}) {
  detail::require_mode(spec, Mode::DRE);
  ScalarProblem p(ScalarProblem::Kind::DRE, spec, cfg, opt);
  ScalarProblem::Solution s = p.solve();
  Prediction out = detail::make_prediction(spec, s.alpha, s.m);
  if (s.alpha > spec.radius() - spec.sigma_theta0) out.flags |= kDreUpperBoundOnly;
  return out;
}

inline Prediction solve_squared_dro(const ProblemSpec& spec, const QuadratureConfig& cfg,
                                    const SolverOptions& opt = {}) {
  detail::require_mode(spec, Mode::W2_DRO_Squared);
  ScalarProblem p(ScalarProblem::Kind::SqDRO, spec, cfg, opt);
  ScalarProblem::Solution s;
  try {
    s = p.solve();
  } catch (const BracketError& e) {
    throw UnboundedMinimizer(std::string("w2_dro_squared: ") + e.what());
  }
  Prediction out = detail::make_prediction(spec, s.alpha, s.m);
  const double w = opt.flat_width;
  bool flat = true;
  if (s.alpha - w >= 0) flat = flat && p.value_only(s.alpha - w) - s.m.value <= opt.flat_tol;
  flat = flat && p.value_only(s.alpha + w) - s.m.value <= opt.flat_tol;
  if (flat) out.flags |= kNonUniqueWarning;
  return out;
}

inline Prediction solve_squared_dre(const ProblemSpec& spec, const SolverOptions& opt = {}) {
  detail::require_mode(spec, Mode::DRE_Squared);
  ScalarProblem p(ScalarProblem::Kind::SqDRE, spec, QuadratureConfig{}, opt);
  ScalarProblem::Solution s = p.solve();
  Prediction out = detail::make_prediction(spec, s.alpha, s.m);
  if (s.alpha > spec.radius() - spec.sigma_theta0) out.flags |= kDreUpperBoundOnly;
  return out;
}

inline Prediction predict(const ProblemSpec& spec, const QuadratureConfig& cfg,
                          const SolverOptions& opt = {}) {
  switch (spec.mode) {
    case Mode::W1: return solve_w1(spec, cfg, opt);
    case Mode::W2_DRO: return solve_w2(spec, cfg, opt);
    case Mode::W2_DRO_Squared: return solve_squared_dro(spec, cfg, opt);
    case Mode::DRE: return solve_dre(spec, cfg, opt);
    case Mode::DRE_Squared: return solve_squared_dre(spec, opt);
  }
  throw ConfigError("unknown mode");
}

// ---------------------------------------------------------------------------
// Certificates.

struct Certificate {
  std::optional<double> slope_minus;
  std::optional<double> slope_plus;
  double min_max = 0.0;
  double max_min = 0.0;

  bool stationary(double tol) const {
    return (!slope_minus || *slope_minus <= tol) && (!slope_plus || *slope_plus >= -tol);
  }
  bool exchange_ok(double tol) const { return std::abs(min_max - max_min) <= tol; }
};

inline ScalarProblem::Kind active_kind(const ProblemSpec& spec, const Prediction& p) {
  switch (spec.mode) {
    case Mode::W1: return ScalarProblem::Kind::W1;
    case Mode::W2_DRO:
      if (p.branch == Branch::V2) return ScalarProblem::Kind::W2V2;
      if (p.branch == Branch::Tie && p.alpha_v2 && p.alpha_v1 && *p.alpha_v2 > *p.alpha_v1)
        return ScalarProblem::Kind::W2V2;
      return ScalarProblem::Kind::W2V1;
    case Mode::W2_DRO_Squared: return ScalarProblem::Kind::SqDRO;
    case Mode::DRE: return ScalarProblem::Kind::DRE;
    case Mode::DRE_Squared: return ScalarProblem::Kind::SqDRE;
  }
  return ScalarProblem::Kind::W1;
}

inline Certificate certify(const ProblemSpec& spec, const QuadratureConfig& cfg,
                           const Prediction& pred, double h = 1e-4,
                           const SolverOptions& opt = {}) {
  ScalarProblem p(active_kind(spec, pred), spec, cfg, opt);
  Certificate c;
  const double a = pred.alpha_star;
  const Bracket& ab = p.alpha_bracket();
  const double v0 = p.value_only(a);
  if (a - h >= ab.lo) c.slope_minus = (v0 - p.value_only(a - h)) / h;
  if (ab.open_hi || a + h <= ab.hi) c.slope_plus = (p.value_only(a + h) - v0) / h;
  c.min_max = v0;
  c.max_min = p.max_min();
  return c;
}

}  // namespace wdro
