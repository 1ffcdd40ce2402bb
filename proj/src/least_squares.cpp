#include "wgm/least_squares.hpp"

#include <cmath>
#include <limits>

namespace wgm {

LeastSquaresResult levenberg_marquardt(const LeastSquaresProblem& problem,
                                       Eigen::VectorXd x,
                                       const LevenbergMarquardtOptions& options) {
  if (problem.project) problem.project(x);
  Eigen::VectorXd r = problem.residuals(x);
  double cost = 0.5 * r.squaredNorm();
  double damping = options.initial_damping;

  LeastSquaresResult out;
  out.log.push_back({0, cost, damping, 0.0, true});

  if (cost == 0.0) {
    out.parameters = x;
    out.cost = 0.0;
    out.converged = true;
    return out;
  }

  int iteration = 0;
  while (iteration < options.max_iterations) {
    ++iteration;
    const Eigen::MatrixXd J = problem.jacobian(x);
    const Eigen::VectorXd g = J.transpose() * r;
    const Eigen::MatrixXd A = J.transpose() * J;
    Eigen::VectorXd scale = A.diagonal();
    const double floor = std::max(scale.maxCoeff() * 1e-12,
                                  std::numeric_limits<double>::min());
    for (Eigen::Index i = 0; i < scale.size(); ++i) scale[i] = std::max(scale[i], floor);

    bool accepted = false;
    bool done = false;
    while (damping <= options.max_damping) {
      Eigen::MatrixXd M = A;
      M.diagonal() += damping * scale;
      const Eigen::VectorXd delta = M.ldlt().solve(-g);
      Eigen::VectorXd trial = x + delta;
      if (problem.project) problem.project(trial);
      const double step_norm = (trial - x).norm();
      const Eigen::VectorXd r_trial = problem.residuals(trial);
      const double trial_cost = 0.5 * r_trial.squaredNorm();

      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        const double rel_change = (cost - trial_cost) / std::max(cost, 1e-300);
        out.log.push_back({iteration, trial_cost, damping, step_norm, true});
        out.final_step_norm = step_norm;
        x = std::move(trial);
        r = r_trial;
        cost = trial_cost;
        damping = std::max(damping / 3.0, 1e-15);
        accepted = true;
        if (rel_change < options.cost_tolerance ||
            step_norm < options.step_tolerance * (x.norm() + options.step_tolerance) ||
            cost == 0.0)
          done = true;
        break;
      }
      out.log.push_back({iteration, cost, damping, step_norm, false});
      damping *= 4.0;
    }
    if (done) {
      out.converged = true;
      break;
    }
    if (!accepted) {
      // No reduction possible at any damping: numerically stationary.
      out.converged = true;
      break;
    }
  }

  out.parameters = x;
  out.cost = cost;
  out.iterations = iteration;
  return out;
}

} // namespace wgm
