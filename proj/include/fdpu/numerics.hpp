#pragma once

#include <functional>
#include <vector>

namespace fdpu::numerics {

// Node count and coverage for the Gaussian-change-of-variable quadratures.
// nodes_1d is the per-axis count; domain_halfwidth is the number of standard
// deviations covered where a finite window is used.
struct QuadSpec {
  int nodes_1d = 24;
  double domain_halfwidth = 8.0;
  void validate() const;
};

// Arguments of the bivariate normal CDF. h and k may be +-infinity.
struct BvnArgs {
  double h;
  double k;
  double rho;
  void validate() const;
};

double std_normal_cdf(double x);
double std_normal_pdf(double x);

// P(Z1 <= h, Z2 <= k) for standard bivariate normal with correlation rho.
// Genz-class accuracy (absolute error well below 1e-7).
double bvn_cdf(const BvnArgs& args);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// Student-t CDF and quantile, df >= 1.
double t_cdf(double x, int df);
double t_quantile(double prob, int df);

struct QuadNode {
  double x;
  double w;
};

// Gauss-Hermite nodes/weights in probabilists' normalization: integrates
// g against the standard normal density, sum of weights = 1.
std::vector<QuadNode> gauss_nodes(const QuadSpec& spec);

// Gauss-Legendre nodes/weights on [-1, 1].
std::vector<QuadNode> legendre_nodes(int n);

// The law of sigma-hat = sqrt(chi2_df / df): analytic mean/sd and log-density.
struct SigmaHatLaw {
  int df;
  double mean;
  double sd;
  explicit SigmaHatLaw(int df_);
  double log_pdf(double s) const;
};

// Precomputed Gauss-Legendre rule against the sigma-hat density on
// [max(eps, m - hw*s), m + hw*s]. integrate(g) approximates E[g(sigma_hat)].
class SigmaHatQuad {
 public:
  SigmaHatQuad(int n, const QuadSpec& spec = QuadSpec{64, 8.0});
  template <class Fn>
  double integrate(Fn&& g) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < s_.size(); ++i) acc += wf_[i] * g(s_[i]);
    return acc;
  }
  const std::vector<double>& nodes() const { return s_; }

 private:
  std::vector<double> s_;   // sigma-hat nodes
  std::vector<double> wf_;  // weight * density
};

// E[g(sigma_hat)] with (n-1) sigma_hat^2 ~ chi2_{n-1}.
double expect_over_sigma_hat(const std::function<double(double)>& g, int n,
                             const QuadSpec& spec = QuadSpec{64, 8.0});

}  // namespace fdpu::numerics
