#include "fdpu/problem.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fdpu/numerics.hpp"

namespace fdpu {

Threshold Threshold::make(double t, int n) {
  if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("Threshold: t must be in (0, 1)");
  if (n < 2) throw std::invalid_argument("Threshold: n must be >= 2");
  return Threshold{t, n, numerics::t_quantile(t / 2.0, n - 1)};
}

std::vector<int> TestingProblem::null_indices() const {
  std::vector<int> idx;
  for (int j = 0; j < p(); ++j) {
    if (mu[j] == 0.0) idx.push_back(j);
  }
  return idx;
}

std::vector<int> TestingProblem::alt_indices() const {
  std::vector<int> idx;
  for (int j = 0; j < p(); ++j) {
    if (mu[j] != 0.0) idx.push_back(j);
  }
  return idx;
}

void TestingProblem::validate(bool check_psd) const {
  if (n < 2) throw std::invalid_argument("TestingProblem: n must be >= 2");
  if (mu.size() < 1) throw std::invalid_argument("TestingProblem: p must be >= 1");
  if (sigma.rows() != mu.size() || sigma.cols() != mu.size()) {
    throw std::invalid_argument("TestingProblem: sigma must be p x p");
  }
  for (int j = 0; j < p(); ++j) {
    if (std::abs(sigma(j, j) - 1.0) > 1e-12) {
      throw std::invalid_argument("TestingProblem: sigma diagonal must be 1 (row " + std::to_string(j) + ")");
    }
    for (int k = j + 1; k < p(); ++k) {
      if (std::abs(sigma(j, k) - sigma(k, j)) > 1e-12) {
        throw std::invalid_argument("TestingProblem: sigma must be symmetric");
      }
      if (std::abs(sigma(j, k)) > 1.0 + 1e-12) {
        throw std::invalid_argument("TestingProblem: |sigma_jk| must be <= 1");
      }
    }
  }
  if (check_psd && p() > 1) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-8) {
      throw std::invalid_argument("TestingProblem: sigma is not PSD within tolerance");
    }
  }
}

}  // namespace fdpu
