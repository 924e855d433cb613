#include "fdsqz/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fdsqz/parallel.hpp"

namespace fdsqz {
namespace {

Eigen::VectorXd clip(const Eigen::VectorXd& x, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

double width(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, Eigen::Index i) {
  const double w = upper(i) - lower(i);
  return std::isfinite(w) && w > 0.0 ? w : 1.0;
}

}  // namespace

std::string to_string(Termination t) {
  switch (t) {
    case Termination::cost_converged: return "cost_converged";
    case Termination::step_converged: return "step_converged";
    case Termination::gradient_converged: return "gradient_converged";
    case Termination::max_iterations: return "max_iterations";
    case Termination::damping_overflow: return "damping_overflow";
  }
  return "unknown";
}

Eigen::MatrixXd finite_difference_jacobian(const ResidualFunction& f, const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& fx, const Eigen::VectorXd& lower,
                                           const Eigen::VectorXd& upper, double relative_step, unsigned threads) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd jac(fx.size(), n);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t col) {
    const auto i = static_cast<Eigen::Index>(col);
    const double floor = 1e-3 * width(lower, upper, i);
    double h = relative_step * std::max(std::abs(x(i)), floor);
    if (x(i) + h > upper(i)) h = -h;
    Eigen::VectorXd xh = x;
    xh(i) += h;
    jac.col(i) = (f(xh) - fx) / h;
  });
  return jac;
}

Eigen::MatrixXd parameter_covariance(const Eigen::MatrixXd& jacobian, double cost, double rank_tolerance) {
  const Eigen::Index m = jacobian.rows();
  const Eigen::Index n = jacobian.cols();
  const double s2 = m > n ? cost / static_cast<double>(m - n) : std::numeric_limits<double>::infinity();

  Eigen::VectorXd scale(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = jacobian.col(i).norm();
    scale(i) = norm > 0.0 ? 1.0 / norm : 0.0;
  }
  const Eigen::MatrixXd scaled = jacobian * scale.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const Eigen::MatrixXd& v = svd.matrixV();
  const double floor = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(m, n));
  const double cutoff = sv.size() > 0 ? sv(0) * std::max(rank_tolerance, floor) : 0.0;

  Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(n, n);
  std::vector<bool> unconstrained(static_cast<std::size_t>(n), false);
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (sv(k) > cutoff) {
      inv += v.col(k) * v.col(k).transpose() / (sv(k) * sv(k));
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(v(i, k)) > 1e-3) unconstrained[static_cast<std::size_t>(i)] = true;
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (scale(i) == 0.0) unconstrained[static_cast<std::size_t>(i)] = true;
  }
  Eigen::MatrixXd cov = s2 * scale.asDiagonal() * inv * scale.asDiagonal();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (unconstrained[static_cast<std::size_t>(i)]) cov(i, i) = std::numeric_limits<double>::infinity();
  }
  return cov;
}

LeastSquaresResult bounded_levenberg_marquardt(const ResidualFunction& f, Eigen::VectorXd x0,
                                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                               const LeastSquaresOptions& options) {
  const Eigen::Index n = x0.size();
  if (lower.size() != n || upper.size() != n) throw std::invalid_argument("bound sizes do not match x0");
  if ((lower.array() > upper.array()).any()) throw std::invalid_argument("lower bound exceeds upper bound");

  LeastSquaresResult res;
  res.x = clip(x0, lower, upper);
  res.residuals = f(res.x);
  res.cost = res.residuals.squaredNorm();
  res.evaluations = 1;

  double damping = options.initial_damping;
  bool need_jacobian = true;
  Eigen::VectorXd gradient;

  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    if (need_jacobian) {
      res.jacobian = finite_difference_jacobian(f, res.x, res.residuals, lower, upper, options.relative_step,
                                                options.threads);
      res.evaluations += static_cast<int>(n);
      gradient = res.jacobian.transpose() * res.residuals;
      need_jacobian = false;
    }

    // Variables held at a bound by the gradient stay fixed this iteration.
    std::vector<Eigen::Index> free;
    double projected_gradient = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool pinned = (res.x(i) <= lower(i) && gradient(i) > 0.0) || (res.x(i) >= upper(i) && gradient(i) < 0.0);
      if (!pinned) {
        free.push_back(i);
        projected_gradient = std::max(projected_gradient, std::abs(gradient(i)) * width(lower, upper, i));
      }
    }
    if (free.empty() || projected_gradient <= options.gradient_tolerance * std::max(res.cost, 1e-300)) {
      res.termination = Termination::gradient_converged;
      return res;
    }

    const auto k = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd jf(res.jacobian.rows(), k);
    Eigen::VectorXd scale(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      const double norm = res.jacobian.col(free[static_cast<std::size_t>(j)]).norm();
      scale(j) = norm > 0.0 ? 1.0 / norm : 1.0;
      jf.col(j) = res.jacobian.col(free[static_cast<std::size_t>(j)]) * scale(j);
    }
    const Eigen::MatrixXd normal = jf.transpose() * jf;
    const Eigen::VectorXd rhs = -jf.transpose() * res.residuals;

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd a = normal;
      a.diagonal().array() += damping;
      const Eigen::VectorXd step_scaled = a.ldlt().solve(rhs);
      Eigen::VectorXd candidate = res.x;
      for (Eigen::Index j = 0; j < k; ++j) {
        candidate(free[static_cast<std::size_t>(j)]) += step_scaled(j) * scale(j);
      }
      candidate = clip(candidate, lower, upper);

      double step_norm = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        step_norm = std::max(step_norm, std::abs(candidate(i) - res.x(i)) / width(lower, upper, i));
      }
      if (step_norm <= options.step_tolerance) {
        res.termination = Termination::step_converged;
        return res;
      }

      const Eigen::VectorXd r = f(candidate);
      ++res.evaluations;
      const double cost = r.allFinite() ? r.squaredNorm() : std::numeric_limits<double>::infinity();
      if (cost < res.cost) {
        const double decrease = (res.cost - cost) / std::max(res.cost, 1e-300);
        res.x = candidate;
        res.residuals = r;
        res.cost = cost;
        damping = std::max(damping / 3.0, 1e-12);
        need_jacobian = true;
        accepted = true;
        if (decrease <= options.cost_tolerance) {
          res.jacobian = finite_difference_jacobian(f, res.x, res.residuals, lower, upper, options.relative_step,
                                                    options.threads);
          res.evaluations += static_cast<int>(n);
          res.termination = Termination::cost_converged;
          ++res.iterations;
          return res;
        }
      } else {
        damping *= 4.0;
        if (damping > 1e16) {
          res.termination = Termination::damping_overflow;
          return res;
        }
      }
    }
  }
  res.jacobian = finite_difference_jacobian(f, res.x, res.residuals, lower, upper, options.relative_step,
                                            options.threads);
  res.termination = Termination::max_iterations;
  return res;
}

}  // namespace fdsqz
