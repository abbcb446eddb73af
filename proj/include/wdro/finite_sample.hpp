#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "wdro/errors.hpp"
#include "wdro/loss_models.hpp"
#include "wdro/search.hpp"

namespace wdro {

struct Dataset {
  Eigen::MatrixXd A;  // n x d, rows x_i
  Eigen::VectorXd y;
  Eigen::VectorXd z;
  Eigen::VectorXd theta0;
  int d = 0;
  int n = 0;
};

struct FitOptions {
  int max_iter = 20000;
  double tol = 1e-10;        // ADMM residual tolerance
  double stall_tol = 1e-10;  // ADMM: relative objective gain that resets the stall window
  int stall_window = 400;
  double pg_tol = 1e-9;      // projected-gradient tolerance, relative to the initial gradient
  double armijo = 1e-4;
  double shrink = 0.5;
  bool keep_history = false;
};

struct FitResult {
  Eigen::VectorXd theta_hat;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double normalized_error = 0.0;
  std::vector<double> history;  // best objective so far, per iteration
};

inline double normalized_error(const Eigen::VectorXd& theta_hat,
                               const Eigen::VectorXd& theta0, int d) {
  if (theta_hat.size() != theta0.size() || theta_hat.size() != d)
    throw DomainError("normalized_error: dimension mismatch");
  return (theta_hat - theta0).squaredNorm() / double(d);
}

namespace detail {

inline void finish(FitResult& r, const Dataset& data) {
  if (!std::isfinite(r.objective) || !r.theta_hat.allFinite())
    throw DivergedError("fit produced a non-finite objective");
  r.normalized_error = normalized_error(r.theta_hat, data.theta0, data.d);
}

// prox of t*L at v
inline double prox_loss(const LossModel& m, double v, double t) {
  switch (m.kind) {
    case LossKind::Absolute: {
      double a = std::abs(v) - t;
      return a > 0 ? std::copysign(a, v) : 0.0;
    }
    case LossKind::Huber: {
      const double d = m.delta;
      if (std::abs(v) <= d * (1.0 + t)) return v / (1.0 + t);
      return v - std::copysign(t * d, v);
    }
    case LossKind::Squared: return v / (1.0 + 2.0 * t);
  }
  return v;
}

}  // namespace detail

// (1/n) sum L(y - A theta) + eps * Lip(L) * ||theta||.
inline double w1_objective(const Dataset& data, const LossModel& loss, double eps,
                           const Eigen::VectorXd& theta) {
  Eigen::VectorXd r = data.y - data.A * theta;
  const HuberShape h = loss_shape(loss);
  double s = 0.0;
  for (int i = 0; i < r.size(); ++i) s += h(r(i));
  double lip = constants(loss).lipschitz.value_or(0.0);
  return s / double(data.n) + eps * lip * theta.norm();
}

// W1 DRO as norm-regularized M-estimation, solved by ADMM on
//   min sum L(r_i) + n eps Lip ||phi||  s.t.  A theta + r = y,  theta = phi.
// The theta-update matrix A^T A + I does not depend on the penalty, so the
// penalty is rebalanced freely.
inline FitResult fit_w1(const Dataset& data, const LossModel& loss, double eps,
                        const FitOptions& opt = {}) {
  if (!(eps >= 0)) throw DomainError("fit_w1 requires eps >= 0");
  auto lip = constants(loss).lipschitz;
  if (!lip && eps > 0) throw NotSmooth("fit_w1 requires a Lipschitz loss");
  const int n = data.n, d = data.d;
  const double w = double(n) * eps * lip.value_or(0.0);

  Eigen::MatrixXd G = Eigen::MatrixXd::Identity(d, d);
  G.selfadjointView<Eigen::Lower>().rankUpdate(data.A.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(G.selfadjointView<Eigen::Lower>());
  if (llt.info() != Eigen::Success) throw SolverError("fit_w1: factorization failed");

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d), phi = theta, v = theta;
  Eigen::VectorXd r = data.y, u = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd At(n), r_old(n), phi_old(d);
  double pen = 1.0;

  FitResult res;
  res.theta_hat = theta;
  res.objective = w1_objective(data, loss, eps, theta);
  const HuberShape h = loss_shape(loss);
  const double ynorm = data.y.norm();

  int it = 0, last_gain = 0;
  for (; it < opt.max_iter; ++it) {
    theta = llt.solve(data.A.transpose() * (data.y - r - u) + (phi - v));
    At.noalias() = data.A * theta;
    r_old = r;
    phi_old = phi;
    for (int i = 0; i < n; ++i) r(i) = detail::prox_loss(loss, data.y(i) - At(i) - u(i), 1.0 / pen);
    Eigen::VectorXd q = theta + v;
    const double qn = q.norm();
    const double shrink = qn > 0 ? std::max(0.0, 1.0 - (w / pen) / qn) : 0.0;
    phi = shrink * q;
    Eigen::VectorXd p1 = At + r - data.y;
    Eigen::VectorXd p2 = theta - phi;
    u += p1;
    v += p2;

    // objective at theta (feasible for the unconstrained problem)
    double f = 0.0;
    for (int i = 0; i < n; ++i) f += h(data.y(i) - At(i));
    f = f / double(n) + eps * lip.value_or(0.0) * theta.norm();
    if (f < res.objective) {
      if (f < res.objective - opt.stall_tol * (1.0 + std::abs(f))) last_gain = it;
      res.objective = f;
      res.theta_hat = theta;
    }
    if (opt.keep_history) res.history.push_back(res.objective);

    const double prim = std::sqrt(p1.squaredNorm() + p2.squaredNorm());
    const double dual =
        pen * (data.A.transpose() * (r - r_old) - (phi - phi_old)).norm();
    const double scale_p = std::max({At.norm(), r.norm(), ynorm, theta.norm(), phi.norm()});
    const double scale_d = pen * (data.A.transpose() * u + v).norm();
    if (prim <= opt.tol * (1.0 + scale_p) && dual <= opt.tol * (1.0 + scale_d)) {
      res.converged = true;
      ++it;
      break;
    }
    // LP-like problems (eps = 0, absolute loss) crawl at the end: stop once
    // the best objective has been flat for a full window
    if (it - last_gain >= opt.stall_window) {
      res.converged = prim <= 1e3 * opt.tol * (1.0 + scale_p);
      ++it;
      break;
    }
    if (prim > 10.0 * dual) {
      pen *= 2.0;
      u /= 2.0;
      v /= 2.0;
    } else if (dual > 10.0 * prim) {
      pen /= 2.0;
      u *= 2.0;
      v *= 2.0;
    }
  }
  res.iterations = it;
  detail::finish(res, data);
  return res;
}

// Square-root form of the squared-loss W2 DRO:
//   min sqrt(mean r^2) + sqrt(eps) ||theta||,  objective reported squared.
// The minimizer lies on the ridge path theta(k) = (A^T A + k I)^{-1} A^T y;
// the path is searched in log k on an eigendecomposition of A^T A.
inline FitResult fit_w2_squared(const Dataset& data, double eps, const FitOptions& opt = {}) {
  (void)opt;
  if (!(eps >= 0)) throw DomainError("fit_w2_squared requires eps >= 0");
  const int n = data.n, d = data.d;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d, d);
  G.selfadjointView<Eigen::Lower>().rankUpdate(data.A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G.selfadjointView<Eigen::Lower>());
  if (es.info() != Eigen::Success) throw SolverError("fit_w2_squared: eigensolver failed");
  const Eigen::VectorXd& sv = es.eigenvalues();
  const Eigen::VectorXd c = es.eigenvectors().transpose() * (data.A.transpose() * data.y);
  const double yy = data.y.squaredNorm();
  const double smax = std::max(sv.maxCoeff(), 1e-300);
  const double zero_tol = 1e-12 * smax;

  auto theta_of = [&](double k) {
    Eigen::VectorXd coef(d);
    for (int i = 0; i < d; ++i) {
      double den = sv(i) + k;
      coef(i) = (den > zero_tol) ? c(i) / den : 0.0;
    }
    return Eigen::VectorXd(es.eigenvectors() * coef);
  };
  auto J = [&](double k) {
    double tt = 0.0, yAt = 0.0, AtAt = 0.0;
    for (int i = 0; i < d; ++i) {
      double den = sv(i) + k;
      if (den <= zero_tol) continue;
      double ci = c(i) * c(i);
      tt += ci / (den * den);
      yAt += ci / den;
      AtAt += sv(i) * ci / (den * den);
    }
    double rr = std::max(0.0, yy - 2.0 * yAt + AtAt);
    return std::sqrt(rr / double(n)) + std::sqrt(eps) * std::sqrt(tt);
  };
  auto exact = [&](const Eigen::VectorXd& th) {
    return std::sqrt((data.y - data.A * th).squaredNorm() / double(n)) +
           std::sqrt(eps) * th.norm();
  };

  FitResult res;
  if (eps == 0.0) {
    res.theta_hat = theta_of(0.0);
  } else {
    // coarse log grid, then golden refinement around the best node
    const double t_lo = std::log(smax) - 40.0, t_hi = std::log(smax) + 40.0;
    const int grid = 321;
    const double dt = (t_hi - t_lo) / (grid - 1);
    int best = 0;
    double fbest = J(std::exp(t_lo));
    for (int i = 1; i < grid; ++i) {
      double f = J(std::exp(t_lo + dt * i));
      if (f < fbest) {
        fbest = f;
        best = i;
      }
    }
    double a = t_lo + dt * std::max(0, best - 1), b = t_lo + dt * std::min(grid - 1, best + 1);
    Opt1D r = detail::golden([&](double t) { return J(std::exp(t)); }, a, b, 1e-13);
    Eigen::VectorXd th = theta_of(std::exp(r.x));
    res.theta_hat = th;
    // the path endpoints: least squares and the origin
    Eigen::VectorXd th0 = theta_of(0.0);
    if (exact(th0) < exact(res.theta_hat)) res.theta_hat = th0;
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
    if (exact(zero) < exact(res.theta_hat)) res.theta_hat = zero;
  }
  const double root = exact(res.theta_hat);
  res.objective = root * root;
  res.iterations = 1;
  res.converged = true;
  detail::finish(res, data);
  return res;
}

// sup_u u r + u^2 s - L*(u), s < 1/(2M). Equals e_f(r, 1/M - 2s).
struct InnerSup {
  double value = 0.0;
  double u_star = 0.0;
};

inline InnerSup inner_sup(double r, double s, const LossModel& loss) {
  auto m = constants(loss).smoothness_m;
  if (!m) throw NotSmooth("inner_sup requires a smooth loss");
  const double gamma = 1.0 / *m - 2.0 * s;
  if (!(gamma > 0)) throw ConcavityViolation("inner_sup requires s < 1/(2M)");
  HuberShape h{loss.kind == LossKind::Squared ? std::numeric_limits<double>::infinity()
                                              : loss.delta,
               gamma};
  return {h(r), h.derivative(r)};
}

namespace detail {

struct SmoothState {
  Eigen::VectorXd theta;
  Eigen::VectorXd r;
  double lambda = 0.0;  // +inf when the transport budget is zero
  double value = 0.0;
  bool at_floor = false;
};

}  // namespace detail

// Shared projected-gradient driver for the smooth W2 DRO (lambda optimized)
// and the DRE (lambda fixed).
class SmoothDroSolver {
 public:
  SmoothDroSolver(const Dataset& data, const LossModel& loss, double eps,
                  std::optional<double> fixed_lambda, double r_theta,
                  const FitOptions& opt)
      : data_(data), loss_(loss), eps_(eps), fixed_(fixed_lambda), opt_(opt) {
    auto m = constants(loss).smoothness_m;
    if (!m) throw NotSmooth("smooth DRO requires a smooth loss");
    M_ = *m;
    slope_ = loss.kind == LossKind::Squared ? std::numeric_limits<double>::infinity()
                                            : loss.delta;
    radius_ = r_theta * std::sqrt(double(data.d));
    cfloor_ = M_ * r_theta * std::sqrt(double(data.d)) / 2.0;
    if (fixed_ && !(*fixed_ * 2.0 / M_ > radius_ * radius_ * (1.0 - 1e-15)))
      throw ConcavityViolation("lambda too small for the concavity of the inner problem");
  }

  // objective G(theta) = min over admissible lambda of g(theta, lambda)
  detail::SmoothState evaluate(const Eigen::VectorXd& theta) const {
    detail::SmoothState st;
    st.theta = theta;
    st.r = data_.y - data_.A * theta;
    const double t = theta.squaredNorm();
    auto mean_env = [&](double gamma) {
      HuberShape h{slope_, gamma};
      double s = 0.0;
      for (int i = 0; i < st.r.size(); ++i) s += h(st.r(i));
      return s / double(st.r.size());
    };
    if (fixed_) {
      st.lambda = *fixed_;
      st.value = mean_env(1.0 / M_ - t / (2.0 * st.lambda));
      return st;
    }
    if (eps_ == 0.0 || t == 0.0) {
      st.lambda = std::numeric_limits<double>::infinity();
      st.value = mean_env(1.0 / M_);
      return st;
    }
    const double nt = std::sqrt(t);
    const double lo = cfloor_ * nt;
    auto g = [&](double lam) {
      double gamma = 1.0 / M_ - t / (2.0 * lam);
      if (gamma <= 0) return std::numeric_limits<double>::infinity();
      return lam * eps_ + mean_env(gamma);
    };
    // stationary point of the s ~ 0 approximation as the starting cap
    double du2 = 0.0;
    {
      HuberShape h{slope_, 1.0 / M_};
      for (int i = 0; i < st.r.size(); ++i) {
        double u = h.derivative(st.r(i));
        du2 += u * u;
      }
      du2 /= double(st.r.size());
    }
    double hi = std::max(2.0 * lo, 4.0 * nt * std::sqrt(du2) / (2.0 * std::sqrt(eps_)));
    SearchOptions so;
    so.max_expansion = 1e6;
    Opt1D r = minimize_convex_1d(g, Bracket{lo, hi, false, true}, 1e-12 * hi, so);
    st.lambda = r.x;
    st.value = r.f;
    st.at_floor = (r.x - lo) <= 1e-9 * lo;
    return st;
  }

  Eigen::VectorXd gradient(const detail::SmoothState& st) const {
    const double t = st.theta.squaredNorm();
    const int n = data_.n;
    double gamma = std::isinf(st.lambda) ? 1.0 / M_ : 1.0 / M_ - t / (2.0 * st.lambda);
    HuberShape h{slope_, gamma};
    Eigen::VectorXd u(n);
    for (int i = 0; i < n; ++i) u(i) = h.derivative(st.r(i));
    const double mu2 = u.squaredNorm() / double(n);
    Eigen::VectorXd grad = -(data_.A.transpose() * u) / double(n);
    if (!std::isinf(st.lambda)) {
      grad += (mu2 / (2.0 * st.lambda)) * st.theta;
      if (!fixed_ && st.at_floor && t > 0) {
        double dl = eps_ - t / (4.0 * st.lambda * st.lambda) * mu2;
        if (dl > 0) grad += dl * cfloor_ * st.theta / std::sqrt(t);
      }
    }
    return grad;
  }

  Eigen::VectorXd project(Eigen::VectorXd th) const {
    const double nt = th.norm();
    if (nt > radius_) th *= radius_ / nt;
    return th;
  }

  FitResult run() const {
    const int d = data_.d;
    detail::SmoothState cur = evaluate(Eigen::VectorXd::Zero(d));
    Eigen::VectorXd g = gradient(cur);
    const double gscale = 1.0 + g.norm();
    double step = double(data_.n) / std::max(1e-12, spectral_norm_sq()) / M_;
    Eigen::VectorXd prev_theta, prev_grad;
    FitResult res;
    res.theta_hat = cur.theta;
    res.objective = cur.value;
    auto proj_grad = [&] { return (project(cur.theta - g) - cur.theta).norm(); };
    int it = 0, stall = 0;
    for (; it < opt_.max_iter; ++it) {
      if (prev_theta.size()) {
        Eigen::VectorXd s = cur.theta - prev_theta, yv = g - prev_grad;
        double sy = s.dot(yv);
        if (sy > 0) step = s.squaredNorm() / sy;
      }
      detail::SmoothState next;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        Eigen::VectorXd trial = project(cur.theta - step * g);
        next = evaluate(trial);
        if (next.value <= cur.value + opt_.armijo * g.dot(trial - cur.theta)) {
          accepted = true;
          break;
        }
        step *= opt_.shrink;
      }
      if (!accepted) {
        // no decrease left at working precision
        res.converged = proj_grad() <= 1e-6 * gscale || origin_optimal(cur.theta);
        break;
      }
      if (next.value > cur.value + 1e-12 * (1.0 + std::abs(cur.value)))
        throw SolverError("objective increased");
      const double prev_value = cur.value;
      prev_theta = cur.theta;
      prev_grad = g;
      cur = std::move(next);
      g = gradient(cur);
      res.theta_hat = cur.theta;
      res.objective = cur.value;
      if (opt_.keep_history) res.history.push_back(res.objective);
      const double pg = proj_grad();
      if (pg <= opt_.pg_tol * gscale) {
        res.converged = true;
        ++it;
        break;
      }
      stall = (prev_value - cur.value <= 1e-15 * std::abs(cur.value)) ? stall + 1 : 0;
      if (stall >= 10) {
        res.converged = pg <= 1e-6 * gscale || origin_optimal(cur.theta);
        ++it;
        break;
      }
    }
    res.iterations = it;
    detail::finish(res, data_);
    return res;
  }

 private:
  // With lambda optimized, lambda eps >= eps cfloor ||theta|| puts a norm kink
  // at the origin, where the projected gradient cannot certify optimality.
  // The origin is optimal iff the smooth part's gradient there is inside the
  // ball of radius eps * cfloor.
  bool origin_optimal(const Eigen::VectorXd& theta) const {
    if (fixed_ || eps_ == 0.0 || theta.norm() > 1e-12 * radius_) return false;
    HuberShape h{slope_, 1.0 / M_};
    Eigen::VectorXd u(data_.n);
    for (int i = 0; i < data_.n; ++i) u(i) = h.derivative(data_.y(i));
    const double g0 = (data_.A.transpose() * u).norm() / double(data_.n);
    return g0 <= eps_ * cfloor_ * (1.0 + 1e-9);
  }

  double spectral_norm_sq() const {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(data_.d) / std::sqrt(double(data_.d));
    double lam = 0.0;
    for (int k = 0; k < 20; ++k) {
      Eigen::VectorXd w = data_.A.transpose() * (data_.A * v);
      lam = w.norm();
      if (lam == 0) break;
      v = w / lam;
    }
    return lam;
  }

  const Dataset& data_;
  LossModel loss_;
  double eps_;
  std::optional<double> fixed_;
  FitOptions opt_;
  double M_ = 1.0;
  double slope_ = 1.0;
  double radius_ = 1.0;
  double cfloor_ = 0.0;
};

inline FitResult fit_w2_smooth(const Dataset& data, const LossModel& loss, double eps,
                               double r_theta, const FitOptions& opt = {}) {
  if (!(eps >= 0)) throw DomainError("fit_w2_smooth requires eps >= 0");
  return SmoothDroSolver(data, loss, eps, std::nullopt, r_theta, opt).run();
}

inline FitResult fit_dre(const Dataset& data, const LossModel& loss, double lambda,
                         double r_theta, const FitOptions& opt = {}) {
  if (!(lambda > 0)) throw DomainError("fit_dre requires lambda > 0");
  return SmoothDroSolver(data, loss, 0.0, lambda, r_theta, opt).run();
}

}  // namespace wdro
