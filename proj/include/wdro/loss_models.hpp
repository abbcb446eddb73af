#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "wdro/errors.hpp"
#include "wdro/search.hpp"

namespace wdro {

enum class LossKind { Squared, Absolute, Huber };

struct LossModel {
  LossKind kind = LossKind::Huber;
  double delta = 1.345;  // Huber threshold; ignored otherwise

  static LossModel squared() { return {LossKind::Squared, 1.345}; }
  static LossModel absolute() { return {LossKind::Absolute, 1.345}; }
  static LossModel huber(double d = 1.345) {
    if (!(d > 0) || !std::isfinite(d))
      throw ConfigError("huber delta must be a positive finite number");
    return {LossKind::Huber, d};
  }
};

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::Squared: return "squared";
    case LossKind::Absolute: return "absolute";
    case LossKind::Huber: return "huber";
  }
  return "?";
}

// Value or +infinity. The flag is authoritative; `value` is meaningless when
// infinite is set.
struct ExtendedReal {
  double value = 0.0;
  bool infinite = false;

  static ExtendedReal finite(double v) { return {v, false}; }
  static ExtendedReal pos_inf() { return {0.0, true}; }
  bool is_finite() const { return !infinite; }
};

struct LossConstants {
  std::optional<double> lipschitz;
  std::optional<double> smoothness_m;
};

inline LossConstants constants(const LossModel& m) {
  switch (m.kind) {
    case LossKind::Squared: return {std::nullopt, 2.0};
    case LossKind::Absolute: return {1.0, std::nullopt};
    case LossKind::Huber: return {m.delta, 1.0};
  }
  return {};
}

// h(x) = x^2/(2 gamma) for |x| <= slope*gamma, slope*|x| - slope^2 gamma/2
// beyond. Every envelope in this library has this form; slope may be +inf
// (pure quadratic) and gamma may be 0 (pure slope*|x|).
struct HuberShape {
  double slope = 1.0;
  double gamma = 1.0;

  double operator()(double x) const {
    const double ax = std::abs(x);
    if (gamma == 0.0) return slope * ax;
    if (std::isinf(slope) || ax <= slope * gamma) return x * x / (2.0 * gamma);
    return slope * ax - 0.5 * slope * slope * gamma;
  }

  double derivative(double x) const {
    if (gamma == 0.0) return x > 0 ? slope : (x < 0 ? -slope : 0.0);
    const double u = x / gamma;
    if (std::isinf(slope)) return u;
    return std::clamp(u, -slope, slope);
  }
};

inline HuberShape loss_shape(const LossModel& m) {
  switch (m.kind) {
    case LossKind::Squared:
      return {std::numeric_limits<double>::infinity(), 0.5};
    case LossKind::Absolute: return {1.0, 0.0};
    case LossKind::Huber: return {m.delta, 1.0};
  }
  return {};
}

inline double eval_loss(const LossModel& m, double r) {
  return loss_shape(m)(r);
}

inline double loss_derivative(const LossModel& m, double r) {
  return loss_shape(m).derivative(r);
}

inline ExtendedReal conjugate(const LossModel& m, double u) {
  switch (m.kind) {
    case LossKind::Squared: return ExtendedReal::finite(0.25 * u * u);
    case LossKind::Absolute:
      return std::abs(u) <= 1.0 ? ExtendedReal::finite(0.0)
                                : ExtendedReal::pos_inf();
    case LossKind::Huber:
      return std::abs(u) <= m.delta ? ExtendedReal::finite(0.5 * u * u)
                                    : ExtendedReal::pos_inf();
  }
  return ExtendedReal::pos_inf();
}

// Shape of e_L(., tau).
inline HuberShape envelope_shape(const LossModel& m, double tau) {
  switch (m.kind) {
    case LossKind::Squared:
      return {std::numeric_limits<double>::infinity(), tau + 0.5};
    case LossKind::Absolute: return {1.0, tau};
    case LossKind::Huber: return {m.delta, tau + 1.0};
  }
  return {};
}

inline double moreau_envelope(const LossModel& m, double c, double tau) {
  if (!(tau > 0)) throw DomainError("moreau_envelope requires tau > 0");
  return envelope_shape(m, tau)(c);
}

// f with L* = u^2/(2M) + f*, so that L = e_f(., 1/M).
inline ExtendedReal f_component(const LossModel& m, double u) {
  switch (m.kind) {
    case LossKind::Absolute:
      throw NotSmooth("absolute loss is not smooth; no f-component");
    case LossKind::Squared:
      throw Degenerate("squared loss has f = indicator of {0}");
    case LossKind::Huber: return ExtendedReal::finite(m.delta * std::abs(u));
  }
  return ExtendedReal::pos_inf();
}

// Shape of e_f(., tau).
inline HuberShape f_envelope_shape(const LossModel& m, double tau) {
  switch (m.kind) {
    case LossKind::Absolute:
      throw NotSmooth("absolute loss is not smooth; no f-component");
    case LossKind::Squared:
      throw UseSquaredSpecialization("squared loss: use the squared path");
    case LossKind::Huber: return {m.delta, tau};
  }
  return {};
}

// Grid scan followed by golden-section refinement of
// v -> (c - v)^2/(2 tau) + fn(v) on [c - halfwidth, c + halfwidth].
inline double brute_force_envelope(const std::function<double(double)>& fn,
                                   double c, double tau, double halfwidth,
                                   double tol, int grid = 2001) {
  if (!(tau > 0)) throw DomainError("brute_force_envelope requires tau > 0");
  auto obj = [&](double v) { return (c - v) * (c - v) / (2.0 * tau) + fn(v); };
  const double lo = c - halfwidth;
  const double h = 2.0 * halfwidth / (grid - 1);
  int best = 0;
  double fbest = obj(lo);
  for (int i = 1; i < grid; ++i) {
    double fv = obj(lo + h * i);
    if (fv < fbest) {
      fbest = fv;
      best = i;
    }
  }
  if (best == 0 || best == grid - 1)
    throw BracketTooSmall("envelope minimizer on the grid boundary");
  Opt1D r = detail::golden(obj, lo + h * (best - 1), lo + h * (best + 1), tol);
  return std::min(r.f, fbest);
}

}  // namespace wdro
