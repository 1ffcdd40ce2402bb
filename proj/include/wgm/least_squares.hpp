#pragma once

// Small dense Levenberg-Marquardt driver shared by the per-dip Lorentzian fit
// and the global profile fit.

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace wgm {

struct LeastSquaresProblem {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residuals;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  // Optional: map a trial point back into the feasible set (bounds).
  std::function<void(Eigen::VectorXd&)> project;
};

struct LevenbergMarquardtOptions {
  int max_iterations = 200;
  double cost_tolerance = 1e-10; // relative cost change
  double step_tolerance = 1e-10; // step norm relative to parameter norm
  double initial_damping = 1e-3;
  double max_damping = 1e16;
};

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0; // 0.5 * |r|^2 at the current accepted point
  double damping = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
};

struct LeastSquaresResult {
  Eigen::VectorXd parameters;
  double cost = 0.0;
  int iterations = 0;
  double final_step_norm = 0.0;
  bool converged = false;
  std::vector<IterationRecord> log;
};

LeastSquaresResult levenberg_marquardt(const LeastSquaresProblem& problem,
                                       Eigen::VectorXd initial,
                                       const LevenbergMarquardtOptions& options = {});

} // namespace wgm
