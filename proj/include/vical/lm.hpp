#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace vical {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Nonlinear least-squares problem: minimize 0.5 * |residual(x)|^2.
/// `jacobian` is optional; when empty a forward-difference Jacobian is used.
struct NllsProblem {
  std::function<VecX(const VecX &)> residual;
  int num_params = 0;
  int num_residuals = 0;
  std::function<MatX(const VecX &, const VecX &)> jacobian;
};

struct LmOptions {
  int max_iterations = 200;
  double step_tol = 1e-10;
  double grad_tol = 1e-10;
  double cost_tol = 1e-12; // relative cost decrease of an accepted step
  double initial_lambda = 1e-3;
  double fd_step = 1e-6; // relative
};

struct LmResult {
  VecX x;
  bool converged = false;
  int iterations = 0;
  double initial_cost = 0.0;
  double cost = 0.0;
};

/// Forward-difference step for parameter value v.
inline double fd_step_for(double v, double rel) { return rel * std::max(std::abs(v), 1.0); }

/// Forward-difference Jacobian of f at x, given r = f(x).
inline MatX numeric_jacobian(const std::function<VecX(const VecX &)> &f, const VecX &x,
                             const VecX &r, double rel = 1e-6) {
  MatX J(r.size(), x.size());
  VecX xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = fd_step_for(x[j], rel);
    xp[j] = x[j] + h;
    J.col(j) = (f(xp) - r) / h;
    xp[j] = x[j];
  }
  return J;
}

/// Levenberg-Marquardt with diagonal (Marquardt) damping. Every trial step
/// counts as one iteration; lambda is divided by 10 on accept and multiplied
/// by 10 on reject. Returns the best iterate; `converged` is false when the
/// iteration budget ran out first.
inline LmResult lm_solve(const NllsProblem &problem, const VecX &x0, const LmOptions &opt = {}) {
  LmResult res;
  res.x = x0;
  VecX r = problem.residual(res.x);
  res.cost = res.initial_cost = 0.5 * r.squaredNorm();
  double lambda = opt.initial_lambda;

  auto jac = [&](const VecX &x, const VecX &rx) {
    return problem.jacobian ? problem.jacobian(x, rx)
                            : numeric_jacobian(problem.residual, x, rx, opt.fd_step);
  };

  MatX J = jac(res.x, r);
  MatX H = J.transpose() * J;
  VecX g = J.transpose() * r;

  while (res.iterations < opt.max_iterations) {
    if (res.cost == 0.0 || g.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
      res.converged = true;
      return res;
    }
    MatX A = H;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      A(i, i) += lambda * std::max(H(i, i), 1e-12);
    }
    const VecX dx = A.ldlt().solve(-g);
    ++res.iterations;
    if (!dx.allFinite()) {
      lambda *= 10.0;
      continue;
    }
    const VecX x_new = res.x + dx;
    const VecX r_new = problem.residual(x_new);
    const double cost_new = 0.5 * r_new.squaredNorm();
    if (std::isfinite(cost_new) && cost_new < res.cost) {
      const bool flat = res.cost - cost_new <= opt.cost_tol * res.cost;
      res.x = x_new;
      r = r_new;
      res.cost = cost_new;
      lambda = std::max(lambda / 10.0, 1e-15);
      if (flat || dx.norm() < opt.step_tol) {
        res.converged = true;
        return res;
      }
      J = jac(res.x, r);
      H = J.transpose() * J;
      g = J.transpose() * r;
    } else {
      lambda *= 10.0;
      if (dx.norm() < opt.step_tol) {
        res.converged = true;
        return res;
      }
    }
  }
  if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol) res.converged = true;
  return res;
}

} // namespace vical
