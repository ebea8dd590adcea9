#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "slopelab/error.hpp"
#include "slopelab/numerics/linalg.hpp"
#include "slopelab/rng.hpp"

namespace slopelab::numerics {

using Objective = std::function<double(const Vector&)>;
/// Optional exact gradient; finite differences are used when empty.
using Gradient = std::function<Vector(const Vector&)>;

struct OptResult {
  Vector theta_hat;
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  int n_iter = 0;
  int n_evals = 0;
  bool converged = false;
  int restarts_used = 0;
  /// Objective at each accepted iterate (only when OptOptions::record_trace).
  std::vector<double> trace;
};

/// Raised when no start reaches a stationary point; carries the best point.
class NoConvergenceError : public Error {
 public:
  NoConvergenceError(const std::string& what, OptResult best)
      : Error(ErrorCode::NoConvergence, what), best_(std::move(best)) {}
  const OptResult& best() const { return best_; }

 private:
  OptResult best_;
};

struct OptOptions {
  double rel_f_tol = 1e-10;
  double x_tol = 1e-8;
  double grad_tol = 1e-6;
  /// A reported optimum must have max |gradient| below this.
  double stationarity_tol = 1e-3;
  int max_iter = 500;
  int max_restarts = 3;
  double restart_sd = 0.2;
  double max_step = 3.0;
  std::uint64_t restart_seed = 0x5eed;
  bool record_trace = false;
};

inline double fd_step(double x) { return 1e-6 * (1.0 + std::abs(x)); }

/// Central-difference gradient with step 1e-6 * (1 + |theta_i|).
inline Vector fd_gradient(const Objective& f, const Vector& theta) {
  Vector g(theta.size());
  Vector x = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double h = fd_step(theta[i]);
    x[i] = theta[i] + h;
    const double fp = f(x);
    x[i] = theta[i] - h;
    const double fm = f(x);
    x[i] = theta[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

namespace detail {

/// Wraps an objective so that thrown errors and non-finite values become +inf
/// and evaluations are counted.
struct SafeObjective {
  const Objective& f;
  int evals = 0;

  double operator()(const Vector& x) {
    ++evals;
    try {
      double v = f(x);
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  }
};

inline double max_abs(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace detail

/// Derivative-free Nelder-Mead simplex minimization from x0.
inline OptResult nelder_mead(const Objective& f, const Vector& x0, int max_evals, double step = 0.5,
                             double f_tol = 1e-12) {
  detail::SafeObjective obj{f};
  const auto n = x0.size();
  std::vector<Vector> pts(n + 1, x0);
  std::vector<double> vals(n + 1);
  for (Eigen::Index i = 0; i < n; ++i) pts[i + 1][i] += step;
  for (Eigen::Index i = 0; i <= n; ++i) vals[i] = obj(pts[i]);

  std::vector<Eigen::Index> order(n + 1);
  int iter = 0;
  while (obj.evals < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const auto best = order.front();
    const auto worst = order.back();
    const auto second = order[n - 1];
    if (std::isfinite(vals[worst]) &&
        std::abs(vals[worst] - vals[best]) <= f_tol * (1.0 + std::abs(vals[best])))
      break;
    ++iter;

    Vector centroid = Vector::Zero(n);
    for (Eigen::Index i = 0; i <= n; ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(n);

    Vector xr = centroid + (centroid - pts[worst]);
    double fr = obj(xr);
    if (fr < vals[best]) {
      Vector xe = centroid + 2.0 * (centroid - pts[worst]);
      double fe = obj(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
    } else if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
    } else {
      Vector xc = fr < vals[worst] ? Vector(centroid + 0.5 * (xr - centroid))
                                   : Vector(centroid + 0.5 * (pts[worst] - centroid));
      double fc = obj(xc);
      if (fc < std::min(fr, vals[worst])) {
        pts[worst] = xc;
        vals[worst] = fc;
      } else {
        for (Eigen::Index i = 0; i <= n; ++i) {
          if (i == best) continue;
          pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
          vals[i] = obj(pts[i]);
        }
      }
    }
  }
  auto best = std::min_element(vals.begin(), vals.end()) - vals.begin();
  OptResult r;
  r.theta_hat = pts[best];
  r.objective_value = vals[best];
  r.n_iter = iter;
  r.n_evals = obj.evals;
  return r;
}

namespace detail {

/// One BFGS run with Armijo backtracking, using the supplied gradient or
/// central differences.
/// Falls back to a Nelder-Mead sweep when the line search cannot progress.
inline OptResult bfgs_run(const Objective& f, const Gradient& gradient, const Vector& x0, const OptOptions& opt) {
  SafeObjective obj{f};
  const auto n = x0.size();
  auto grad = [&](const Vector& x) -> Vector {
    if (gradient) {
      ++obj.evals;
      try {
        return gradient(x);
      } catch (const Error&) {
        return Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
      }
    }
    Objective wrapped = [&](const Vector& z) { return obj(z); };
    return fd_gradient(wrapped, x);
  };

  OptResult r;
  Vector x = x0;
  double fx = obj(x);
  r.theta_hat = x;
  r.objective_value = fx;
  if (!std::isfinite(fx)) {
    r.n_evals = obj.evals;
    return r;
  }
  if (opt.record_trace) r.trace.push_back(fx);

  Vector g = grad(x);
  // Diagonal second differences give the initial inverse-Hessian scaling;
  // log-Cholesky coordinates differ in curvature by orders of magnitude.
  Vector h0 = Vector::Ones(n);
  {
    Vector xs = x;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double step = 1e-3 * (1.0 + std::abs(x[i]));
      xs[i] = x[i] + step;
      const double fp = obj(xs);
      xs[i] = x[i] - step;
      const double fm = obj(xs);
      xs[i] = x[i];
      const double curv = (fp - 2.0 * fx + fm) / (step * step);
      if (std::isfinite(curv) && curv > 1e-8) h0[i] = 1.0 / curv;
    }
  }
  const Matrix h_init = h0.asDiagonal();
  Matrix h = h_init;
  bool fresh_h = true;
  bool tried_simplex = false;

  for (r.n_iter = 0; r.n_iter < opt.max_iter; ++r.n_iter) {
    if (!g.allFinite()) break;
    if (max_abs(g) < opt.grad_tol) {
      r.converged = true;
      break;
    }
    Vector d = -h * g;
    if (!(g.dot(d) < 0.0)) {
      h = h_init;
      fresh_h = true;
      d = -h * g;
    }
    const double dmax = max_abs(d);
    if (dmax > opt.max_step) d *= opt.max_step / dmax;

    const double slope = g.dot(d);
    double alpha = 1.0;
    Vector xn;
    double fn = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int k = 0; k < 40; ++k) {
      xn = x + alpha * d;
      fn = obj(xn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }

    if (!accepted) {
      if (max_abs(g) < opt.stationarity_tol) {
        r.converged = true;  // no further decrease resolvable at working precision
        break;
      }
      if (!fresh_h) {
        h = h_init;
        fresh_h = true;
        continue;
      }
      if (tried_simplex) break;
      tried_simplex = true;
      OptResult nm = nelder_mead(f, x, 200 * static_cast<int>(n + 1));
      obj.evals += nm.n_evals;
      if (!(nm.objective_value < fx)) break;
      x = nm.theta_hat;
      fx = nm.objective_value;
      if (opt.record_trace) r.trace.push_back(fx);
      g = grad(x);
      h = h_init;
      fresh_h = true;
      continue;
    }

    Vector gn = grad(xn);
    Vector s = xn - x;
    Vector yv = gn - g;
    const double df = std::abs(fx - fn);
    const double step = max_abs(s);
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const double rho = 1.0 / sy;
      Matrix i_n = Matrix::Identity(n, n);
      Matrix left = i_n - rho * s * yv.transpose();
      h = left * h * left.transpose() + rho * s * s.transpose();
      fresh_h = false;
    }
    x = xn;
    fx = fn;
    g = gn;
    if (opt.record_trace) r.trace.push_back(fx);

    if (df <= opt.rel_f_tol * std::max(1.0, std::abs(fx)) && step <= opt.x_tol * (1.0 + max_abs(x)) &&
        max_abs(g) < opt.stationarity_tol) {
      r.converged = true;
      ++r.n_iter;
      break;
    }
  }

  // Near the optimum the deviance cannot resolve further decrease, but an
  // exact gradient still can: take quasi-Newton steps while |g| shrinks.
  if (gradient && r.converged && max_abs(g) >= opt.grad_tol) {
    for (int k = 0; k < 20 && max_abs(g) >= opt.grad_tol; ++k) {
      const Vector xn = x - h * g;
      const Vector gn = grad(xn);
      if (!gn.allFinite() || !(max_abs(gn) < max_abs(g))) break;
      const double fn = obj(xn);
      if (!(fn <= fx + 1e-10 * (1.0 + std::abs(fx)))) break;
      const Vector s = xn - x;
      const Vector yv = gn - g;
      const double sy = s.dot(yv);
      if (sy > 1e-12 * s.norm() * yv.norm()) {
        const double rho = 1.0 / sy;
        Matrix left = Matrix::Identity(n, n) - rho * s * yv.transpose();
        h = left * h * left.transpose() + rho * s * s.transpose();
      }
      x = xn;
      g = gn;
      fx = fn;
    }
  }

  r.theta_hat = x;
  r.objective_value = fx;
  if (r.converged) {
    // Stationarity is always confirmed by central differences.
    Objective wrapped = [&](const Vector& z) { return obj(z); };
    if (!(max_abs(fd_gradient(wrapped, x)) < opt.stationarity_tol)) r.converged = false;
  }
  r.n_evals = obj.evals;
  return r;
}

}  // namespace detail

/// Minimizes a REML deviance (i.e. maximizes the restricted likelihood) by
/// BFGS quasi-Newton. Search directions use `gradient` when supplied and
/// central differences otherwise; a reported optimum always passes the
/// finite-difference stationarity check. Up to `max_restarts` additional
/// runs start from the best point perturbed by N(0, restart_sd^2).
inline OptResult maximize_reml(const Objective& deviance, const Vector& theta0, const OptOptions& opt = {},
                               const Gradient& gradient = {}) {
  OptResult best = detail::bfgs_run(deviance, gradient, theta0, opt);
  if (!std::isfinite(best.objective_value))
    throw NoConvergenceError("objective is not finite at the starting point", best);
  int total_evals = best.n_evals;
  int total_iter = best.n_iter;

  auto eng = rng::make_engine(rng::derive_seed(opt.restart_seed, {rng::kRestartStream}));
  std::normal_distribution<double> z(0.0, opt.restart_sd);
  int restarts = 0;
  while (!best.converged && restarts < opt.max_restarts) {
    ++restarts;
    Vector start = best.theta_hat;
    for (Eigen::Index i = 0; i < start.size(); ++i) start[i] += z(eng);
    OptResult trial = detail::bfgs_run(deviance, gradient, start, opt);
    total_evals += trial.n_evals;
    total_iter += trial.n_iter;
    if (trial.converged || trial.objective_value < best.objective_value) best = std::move(trial);
  }
  best.restarts_used = restarts;
  best.n_evals = total_evals;
  best.n_iter = total_iter;
  if (!best.converged) throw NoConvergenceError("optimizer did not reach a stationary point", best);
  return best;
}

}  // namespace slopelab::numerics
