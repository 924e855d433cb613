#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace fdsqz {

/// Quadrature rule for expectations over a standard normal variable:
/// E[f(X)] ~= sum_i weights[i] f(nodes[i]), exact for polynomials of degree
/// up to 2n - 1. Weights sum to one.
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return nodes.size(); }
};

/// Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix of the
/// probabilists' Hermite polynomials, weights the squared first components
/// of the normalized eigenvectors.
inline GaussHermiteRule gauss_hermite_rule(int n) {
  if (n < 1) throw std::invalid_argument("Gauss-Hermite rule needs at least one node");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  GaussHermiteRule rule;
  rule.nodes = es.eigenvalues();
  rule.weights = es.eigenvectors().row(0).array().square().transpose();
  rule.weights /= rule.weights.sum();
  // Symmetrize to remove eigen-solver round-off.
  for (int i = 0; i < n / 2; ++i) {
    const int j = n - 1 - i;
    const double x = 0.5 * (rule.nodes(j) - rule.nodes(i));
    const double w = 0.5 * (rule.weights(i) + rule.weights(j));
    rule.nodes(i) = -x;
    rule.nodes(j) = x;
    rule.weights(i) = rule.weights(j) = w;
  }
  if (n % 2 == 1) rule.nodes(n / 2) = 0.0;
  return rule;
}

}  // namespace fdsqz
