#pragma once

// Bracketed 1-D searches for unimodal functions. Golden-section only
// evaluates interior points, so an excluded endpoint is never touched.

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "wdro/errors.hpp"

namespace wdro {

struct Bracket {
  double lo = 0.0;
  double hi = 1.0;
  bool open_lo = false;
  bool open_hi = false;
};

struct Opt1D {
  double x = 0.0;
  double f = 0.0;
};

struct SearchOptions {
  double tol = 1e-7;            // absolute tolerance on x
  double log_tol = 1e-9;        // tolerance on log(x) for half-line searches
  double expand_factor = 4.0;
  double max_expansion = 1e3;   // relative to the initial width
};

namespace detail {

inline constexpr double kInvPhi = 0.6180339887498948482;

template <class F>
Opt1D golden(F&& f, double a, double b, double tol) {
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 400 && (b - a) > tol; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? Opt1D{c, fc} : Opt1D{d, fd};
}

// Expansion only continues on a decrease beyond rounding noise, so a
// function that is flat towards infinity does not run away.
inline bool strictly_below(double a, double b) {
  return a < b - 1e-13 * (1.0 + std::abs(b));
}

inline std::string bracket_message(const char* what, double lo, double hi) {
  std::ostringstream os;
  os.precision(17);
  os << what << " [" << lo << ", " << hi << "]";
  return os.str();
}

}  // namespace detail

// Minimizes a convex f over b. An open upper end is treated as +inf: the
// bracket is grown geometrically until f turns upward.
template <class F>
Opt1D minimize_convex_1d(F&& f, Bracket b, double tol = 1e-7,
                         const SearchOptions& opt = {}) {
  if (!(b.lo < b.hi)) {
    if (b.lo == b.hi && !b.open_lo && !b.open_hi) return {b.lo, f(b.lo)};
    throw BracketError(detail::bracket_message("empty bracket", b.lo, b.hi));
  }
  double lo = b.lo;
  double hi = b.hi;
  if (b.open_hi) {
    const double w0 = hi - lo;
    double xm = lo + 0.5 * (hi - lo);
    double fm = f(xm);
    double fh = f(hi);
    while (detail::strictly_below(fh, fm)) {
      lo = xm;
      xm = hi;
      fm = fh;
      hi = b.lo + opt.expand_factor * (hi - b.lo);
      if (hi - b.lo > opt.max_expansion * w0 * (1 + 1e-12))
        throw BracketError(detail::bracket_message(
            "minimizer escapes expanded bracket", b.lo, hi));
      fh = f(hi);
    }
  }
  Opt1D r = detail::golden(f, lo, hi, tol);
  // Closed endpoints may hold the minimizer exactly.
  if (!b.open_lo && lo == b.lo) {
    double fl = f(lo);
    if (fl <= r.f) r = {lo, fl};
  }
  if (!b.open_hi) {
    double fh = f(hi);
    if (fh < r.f) r = {hi, fh};
  }
  return r;
}

template <class F>
Opt1D maximize_concave_1d(F&& f, Bracket b, double tol = 1e-7,
                          const SearchOptions& opt = {}) {
  Opt1D r = minimize_convex_1d([&](double x) { return -f(x); }, b, tol, opt);
  return {r.x, -r.f};
}

// Minimizes a unimodal f over (0, inf), searching in log coordinates so the
// answer carries relative rather than absolute precision. `scale` is a
// typical magnitude of the minimizer. If f keeps decreasing towards 0 the
// smallest probed point is returned (the infimum is a limit).
template <class F>
Opt1D minimize_halfline(F&& f, double scale, const SearchOptions& opt = {}) {
  if (!(scale > 0) || !std::isfinite(scale)) scale = 1.0;
  const double t0 = std::log(scale);
  double tlo = t0 - 36.0;
  double thi = t0 + 3.0;
  auto g = [&](double t) { return f(std::exp(t)); };
  double tm = t0;
  double fm = g(tm);
  double fh = g(thi);
  const double tmax = t0 + 3.0 + std::log(opt.max_expansion) * 2.0;
  while (detail::strictly_below(fh, fm)) {
    tlo = tm;
    tm = thi;
    double prev = fm;
    fm = fh;
    thi += std::log(opt.expand_factor) * 2.0;
    fh = g(thi);
    if (thi > tmax && detail::strictly_below(fh, fm)) {
      // Asymptotically flat: accept the far point if the gain has stalled.
      if (std::abs(prev - fh) <= 1e-12 * (1.0 + std::abs(fh)))
        return {std::exp(thi), fh};
      throw BracketError(detail::bracket_message(
          "half-line minimizer escapes", std::exp(tlo), std::exp(thi)));
    }
  }
  Opt1D r = detail::golden(g, tlo, thi, opt.log_tol);
  return {std::exp(r.x), r.f};
}

template <class F>
Opt1D maximize_halfline(F&& f, double scale, const SearchOptions& opt = {}) {
  Opt1D r = minimize_halfline([&](double x) { return -f(x); }, scale, opt);
  return {r.x, -r.f};
}

}  // namespace wdro
