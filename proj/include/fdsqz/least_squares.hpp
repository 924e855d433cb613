#pragma once

// Box-constrained Levenberg-Marquardt with a forward-difference Jacobian.

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace fdsqz {

struct LeastSquaresOptions {
  int max_iterations = 200;
  double relative_step = 1e-4;   // finite-difference step, relative to |x|
  double cost_tolerance = 1e-10; // relative decrease of the cost
  double step_tolerance = 1e-10; // relative to the bound width
  double gradient_tolerance = 1e-10;
  double initial_damping = 1e-3;
  unsigned threads = 1;          // Jacobian columns evaluated concurrently
};

enum class Termination {
  cost_converged,
  step_converged,
  gradient_converged,
  max_iterations,
  damping_overflow,
};

std::string to_string(Termination t);

inline bool converged(Termination t) {
  return t == Termination::cost_converged || t == Termination::step_converged ||
         t == Termination::gradient_converged;
}

struct LeastSquaresResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;  // at x
  double cost = 0.0;         // sum of squared residuals
  int iterations = 0;
  int evaluations = 0;
  Termination termination = Termination::max_iterations;
};

using ResidualFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Minimizes |f(x)|^2 subject to lower <= x <= upper. The start point is
/// clipped into the box. Variables pinned at a bound by the gradient are
/// held fixed for that iteration; all other steps are projected.
LeastSquaresResult bounded_levenberg_marquardt(const ResidualFunction& f, Eigen::VectorXd x0,
                                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                               const LeastSquaresOptions& options = {});

/// Forward differences, falling back to backward ones at the upper bound.
Eigen::MatrixXd finite_difference_jacobian(const ResidualFunction& f, const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& fx, const Eigen::VectorXd& lower,
                                           const Eigen::VectorXd& upper, double relative_step,
                                           unsigned threads = 1);

/// Parameter covariance s^2 (J^T J)^+ with s^2 = cost / (m - n), the
/// reduced chi-square. Singular values of the column-scaled Jacobian below
/// `rank_tolerance` times the largest are treated as zero; a forward-difference
/// Jacobian is only accurate to about its relative step, so pass that. Parameters
/// with a visible component along such a null direction get +inf variance.
Eigen::MatrixXd parameter_covariance(const Eigen::MatrixXd& jacobian, double cost, double rank_tolerance = 1e-12);

}  // namespace fdsqz
