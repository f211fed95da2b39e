#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fdpu/fdp_moments.hpp"
#include "fdpu/numerics.hpp"
#include "fdpu/pairwise_cov.hpp"
#include "fdpu/problem.hpp"

namespace fdpu::estimate {

struct Pi0Estimate {
  double value;
  std::string method = "storey";
  double tuning = 0.5;  // Storey's lambda
};

// Storey's estimator: min(1, #{p_j > lambda} / (p (1 - lambda))).
Pi0Estimate storey_pi0(const std::vector<double>& pvalues, double lambda = 0.5);

struct MuEstimate {
  Eigen::VectorXd values;
  std::vector<int> support;  // ascending indices of the nonzeros
  long p1_hat = 0;
};

// Two-step plug-in: the p1_hat = round(p (1 - pi0)) largest |T| keep their
// observed values (ties broken by ascending index), the rest are set to 0.
MuEstimate estimate_mu(const Eigen::VectorXd& tstats, const Pi0Estimate& pi0);

// Unbiased sample covariance normalized to unit diagonal. Zero-variance
// columns are reported by index.
Eigen::MatrixXd sample_correlation(const Eigen::MatrixXd& X);

struct RidgeConfig {
  std::optional<double> lambda;  // fixed value; nullopt selects by CV
  std::vector<double> cv_grid;   // default: 25 log-spaced in [1e-4, 1e2]
  int cv_folds = 5;
  std::uint64_t seed = 0;

  RidgeConfig();
  void validate() const;
};

// Alternative Type-I ridge precision estimator with scaled-identity target
// T = alpha I, alpha = mean(diag(S)):
//   Omega(lambda) = { [lambda I + (S - lambda T)^2 / 4]^{1/2} + (S - lambda T)/2 }^{-1}
// The returned matrix is inverse(Omega) normalized to unit diagonal (SPD).
Eigen::MatrixXd ridge_correlation(const Eigen::MatrixXd& X, const RidgeConfig& cfg);

// Ridge shrinkage applied directly to a covariance matrix (fixed lambda).
Eigen::MatrixXd ridge_covariance_from(const Eigen::MatrixXd& S, double lambda);

enum class CorrelationMethod { sample, ridge };

struct TwoSampleOptions {
  double t = 0.05;
  int k_deflate = 2;
  CorrelationMethod corr_method = CorrelationMethod::ridge;
  RidgeConfig ridge;
  double pi0_lambda = 0.5;
  pairwise::CovMethod engine = pairwise::CovMethod::quadrature;
  numerics::QuadSpec quad;
  long mc_reps = 10000;
  double sparsity_cutoff = 0.0;
  std::uint64_t seed = 0;
  int workers = 0;
};

struct TwoSampleResult {
  moments::FdpMoments moments;
  moments::DiagnosticsReport diagnostics;
  MuEstimate mu;
  Pi0Estimate pi0;
  Threshold threshold;
  int k_deflate = 0;
  std::optional<double> ridge_lambda;  // chosen lambda when ridge was used
  double weak_dep_before = 0.0;        // before deflation
  // Factors are removed from the covariance only; the test statistics are
  // not adjusted.
  bool covariance_deflation_only = true;
};

// The pooled two-sample pipeline: pooled covariance (divisor n + m - 2),
// standardized statistics sqrt(nm/(n+m)) (Xbar - Ybar) / sd_pooled, p-values
// from t_{n+m-2}, pi0 -> mu -> correlation estimate -> deflation -> moments.
TwoSampleResult two_sample_pipeline(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                    const TwoSampleOptions& opts);

}  // namespace fdpu::estimate
