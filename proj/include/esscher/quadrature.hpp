#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Eigenvalues>

#include "esscher/error.hpp"

namespace esscher::quadrature {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1
};

namespace detail {

// Golub-Welsch: nodes are the eigenvalues of the symmetric Jacobi matrix,
// weights the squared first components of the normalized eigenvectors
// (the reference measure has unit mass).
inline Rule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, offdiag, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw Error("quadrature: eigensolver failed");
  const auto n = static_cast<std::size_t>(diag.size());
  Rule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    rule.nodes[k] = solver.eigenvalues()(kk);
    const double v = solver.eigenvectors()(0, kk);
    rule.weights[k] = v * v;
    total += rule.weights[k];
  }
  for (auto& w : rule.weights) w /= total;
  return rule;
}

}  // namespace detail

/// Gauss-Hermite rule for the standard normal law N(0, 1).
inline Rule gauss_hermite_normal(std::size_t n) {
  if (n < 1) throw ValidationError("gauss_hermite_normal: need at least one node");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd off(static_cast<Eigen::Index>(n > 1 ? n - 1 : 0));
  for (std::size_t k = 1; k < n; ++k) off(static_cast<Eigen::Index>(k - 1)) = std::sqrt(static_cast<double>(k));
  return detail::golub_welsch(diag, off);
}

/// Gauss-Legendre rule for the uniform law on [-1, 1].
inline Rule gauss_legendre_uniform(std::size_t n) {
  if (n < 1) throw ValidationError("gauss_legendre_uniform: need at least one node");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd off(static_cast<Eigen::Index>(n > 1 ? n - 1 : 0));
  for (std::size_t k = 1; k < n; ++k) {
    const double kd = static_cast<double>(k);
    off(static_cast<Eigen::Index>(k - 1)) = kd / std::sqrt(4.0 * kd * kd - 1.0);
  }
  return detail::golub_welsch(diag, off);
}

}  // namespace esscher::quadrature
