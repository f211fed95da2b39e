#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fdpu {

// Rejection threshold t together with the t/2 quantile of t_{n-1}.
struct Threshold {
  double t;   // two-sided level in (0, 1)
  int n;      // sample size; degrees of freedom are n - 1
  double q;   // t_quantile(t/2, n - 1), negative

  static Threshold make(double t, int n);
  int df() const { return n - 1; }
};

// One testing instance: noncentrality vector mu (mu_j = 0 on the null set),
// unit-diagonal correlation matrix sigma, and the sample size behind the
// sigma-hat law.
struct TestingProblem {
  int n = 0;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;

  int p() const { return static_cast<int>(mu.size()); }
  std::vector<int> null_indices() const;
  std::vector<int> alt_indices() const;
  long p0() const { return static_cast<long>(null_indices().size()); }
  long p1() const { return static_cast<long>(alt_indices().size()); }

  // Checks symmetry, unit diagonal, |sigma_jk| <= 1, PSD within 1e-8,
  // and dimension agreement. Throws std::invalid_argument.
  void validate(bool check_psd = true) const;
};

}  // namespace fdpu
