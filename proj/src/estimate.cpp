#include "fdpu/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fdpu/errors.hpp"
#include "fdpu/rng.hpp"
#include "fdpu/sim.hpp"

namespace fdpu::estimate {

Pi0Estimate storey_pi0(const std::vector<double>& pvalues, double lambda) {
  if (pvalues.empty()) throw std::invalid_argument("storey_pi0: need at least one p-value");
  if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("storey_pi0: lambda in (0,1)");
  long above = 0;
  for (std::size_t i = 0; i < pvalues.size(); ++i) {
    const double pv = pvalues[i];
    if (!(pv >= 0.0 && pv <= 1.0)) {
      throw std::invalid_argument("storey_pi0: p-value out of [0,1] at index " +
                                  std::to_string(i));
    }
    if (pv > lambda) ++above;
  }
  const double est = above / (pvalues.size() * (1.0 - lambda));
  return Pi0Estimate{std::min(1.0, est), "storey", lambda};
}

MuEstimate estimate_mu(const Eigen::VectorXd& tstats, const Pi0Estimate& pi0) {
  const long p = tstats.size();
  if (p < 1) throw std::invalid_argument("estimate_mu: empty statistics");
  const long p1_hat =
      std::clamp<long>(std::lround(p * (1.0 - pi0.value)), 0, p);
  std::vector<int> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double va = std::abs(tstats[a]);
    const double vb = std::abs(tstats[b]);
    if (va != vb) return va > vb;
    return a < b;
  });
  MuEstimate out;
  out.values = Eigen::VectorXd::Zero(p);
  out.p1_hat = p1_hat;
  out.support.assign(order.begin(), order.begin() + p1_hat);
  std::sort(out.support.begin(), out.support.end());
  for (int j : out.support) out.values[j] = tstats[j];
  return out;
}

namespace {

Eigen::MatrixXd center_columns(const Eigen::MatrixXd& X) {
  return X.rowwise() - X.colwise().mean();
}

void check_columns(const Eigen::MatrixXd& X, const char* who) {
  const Eigen::MatrixXd c = center_columns(X);
  std::string bad;
  for (int j = 0; j < X.cols(); ++j) {
    if (c.col(j).squaredNorm() == 0.0) {
      if (!bad.empty()) bad += ", ";
      bad += std::to_string(j);
    }
  }
  if (!bad.empty()) {
    throw numeric_error(std::string(who) + ": zero-variance column(s): " + bad);
  }
}

Eigen::MatrixXd cov2cor(const Eigen::MatrixXd& S) {
  const int p = static_cast<int>(S.rows());
  Eigen::VectorXd inv_sd(p);
  for (int j = 0; j < p; ++j) {
    if (!(S(j, j) > 0.0)) throw numeric_error("cov2cor: nonpositive diagonal");
    inv_sd[j] = 1.0 / std::sqrt(S(j, j));
  }
  Eigen::MatrixXd corr = inv_sd.asDiagonal() * S * inv_sd.asDiagonal();
  corr = ((corr + corr.transpose()) / 2.0).eval();
  for (int j = 0; j < p; ++j) {
    corr(j, j) = 1.0;
    for (int k = 0; k < p; ++k) corr(j, k) = std::clamp(corr(j, k), -1.0, 1.0);
  }
  return corr;
}

}  // namespace

Eigen::MatrixXd sample_correlation(const Eigen::MatrixXd& X) {
  if (X.rows() < 2) throw std::invalid_argument("sample_correlation: need n >= 2 rows");
  check_columns(X, "sample_correlation");
  const Eigen::MatrixXd c = center_columns(X);
  const Eigen::MatrixXd S = c.transpose() * c / (X.rows() - 1.0);
  return cov2cor(S);
}

RidgeConfig::RidgeConfig() {
  cv_grid.resize(25);
  const double lo = std::log(1e-4);
  const double hi = std::log(1e2);
  for (int i = 0; i < 25; ++i) cv_grid[i] = std::exp(lo + (hi - lo) * i / 24.0);
}

void RidgeConfig::validate() const {
  if (lambda && !(*lambda > 0.0)) throw std::invalid_argument("RidgeConfig: lambda must be > 0");
  if (!lambda) {
    if (cv_grid.empty()) throw std::invalid_argument("RidgeConfig: cv_grid must be nonempty");
    if (!std::is_sorted(cv_grid.begin(), cv_grid.end())) {
      throw std::invalid_argument("RidgeConfig: cv_grid must be ascending");
    }
    for (double l : cv_grid) {
      if (!(l > 0.0)) throw std::invalid_argument("RidgeConfig: cv_grid values must be > 0");
    }
    if (cv_folds < 2) throw std::invalid_argument("RidgeConfig: cv_folds must be >= 2");
  }
}

namespace {

// Omega(lambda)^{-1} via the shared eigenbasis of S (target is alpha I).
Eigen::MatrixXd ridge_sigma_from_eigen(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es,
                                       double lambda, double alpha) {
  Eigen::VectorXd f(es.eigenvalues().size());
  for (int i = 0; i < f.size(); ++i) {
    const double e = es.eigenvalues()[i] - lambda * alpha;
    f[i] = std::sqrt(lambda + e * e / 4.0) + e / 2.0;
  }
  return es.eigenvectors() * f.asDiagonal() * es.eigenvectors().transpose();
}

double cv_lambda(const Eigen::MatrixXd& X, const RidgeConfig& cfg) {
  const long n = X.rows();
  const int folds = std::min<long>(cfg.cv_folds, n / 2);
  if (folds < 2) throw std::invalid_argument("ridge_correlation: too few rows for CV");
  // seeded shuffle, folds assigned round-robin
  std::vector<long> order(n);
  std::iota(order.begin(), order.end(), 0);
  PhiloxStream rng = make_stream(cfg.seed, RngPurpose::cv_folds, 0);
  for (long i = n - 1; i > 0; --i) {
    const long j = std::min<long>(static_cast<long>(rng.uniform() * (i + 1)), i);
    std::swap(order[i], order[j]);
  }
  std::vector<double> score(cfg.cv_grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<long> test_rows, train_rows;
    for (long i = 0; i < n; ++i) {
      (static_cast<int>(i % folds) == f ? test_rows : train_rows).push_back(order[i]);
    }
    if (test_rows.size() < 2 || train_rows.size() < 2) continue;
    Eigen::MatrixXd Xtr(train_rows.size(), X.cols());
    Eigen::MatrixXd Xte(test_rows.size(), X.cols());
    for (std::size_t i = 0; i < train_rows.size(); ++i) Xtr.row(i) = X.row(train_rows[i]);
    for (std::size_t i = 0; i < test_rows.size(); ++i) Xte.row(i) = X.row(test_rows[i]);
    const Eigen::MatrixXd ctr = center_columns(Xtr);
    const Eigen::MatrixXd cte = center_columns(Xte);
    const Eigen::MatrixXd Str = ctr.transpose() * ctr / (Xtr.rows() - 1.0);
    const Eigen::MatrixXd Ste = cte.transpose() * cte / (Xte.rows() - 1.0);
    const double alpha = Str.diagonal().mean();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Str);
    if (es.info() != Eigen::Success) throw numeric_error("ridge cv: eigen solve failed");
    const Eigen::MatrixXd B = es.eigenvectors().transpose() * Ste * es.eigenvectors();
    for (std::size_t g = 0; g < cfg.cv_grid.size(); ++g) {
      const double lambda = cfg.cv_grid[g];
      double log_det = 0.0;
      double trace = 0.0;
      for (int i = 0; i < es.eigenvalues().size(); ++i) {
        const double e = es.eigenvalues()[i] - lambda * alpha;
        const double fi = std::sqrt(lambda + e * e / 4.0) + e / 2.0;
        log_det += std::log(fi);
        trace += B(i, i) / fi;
      }
      score[g] += -0.5 * (log_det + trace);
    }
  }
  // ties toward larger lambda: scan ascending, accept >=
  std::size_t best = 0;
  for (std::size_t g = 1; g < score.size(); ++g) {
    if (score[g] >= score[best]) best = g;
  }
  return cfg.cv_grid[best];
}

}  // namespace

Eigen::MatrixXd ridge_covariance_from(const Eigen::MatrixXd& S, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("ridge_covariance_from: lambda must be > 0");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success) throw numeric_error("ridge: eigen solve failed");
  const double alpha = S.diagonal().mean();
  return ridge_sigma_from_eigen(es, lambda, alpha);
}

Eigen::MatrixXd ridge_correlation(const Eigen::MatrixXd& X, const RidgeConfig& cfg) {
  if (X.rows() < 2) throw std::invalid_argument("ridge_correlation: need n >= 2 rows");
  cfg.validate();
  if (!X.allFinite()) throw numeric_error("ridge_correlation: non-finite input");
  const double lambda = cfg.lambda ? *cfg.lambda : cv_lambda(X, cfg);
  const Eigen::MatrixXd c = center_columns(X);
  const Eigen::MatrixXd S = c.transpose() * c / (X.rows() - 1.0);
  return cov2cor(ridge_covariance_from(S, lambda));
}

TwoSampleResult two_sample_pipeline(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                    const TwoSampleOptions& opts) {
  const long n = X.rows();
  const long m = Y.rows();
  const long p = X.cols();
  if (p != Y.cols()) {
    throw config_error("two_sample_pipeline: column counts differ (" + std::to_string(p) +
                       " vs " + std::to_string(Y.cols()) + ")");
  }
  if (n < 2 || m < 2) throw std::invalid_argument("two_sample_pipeline: need n, m >= 2");
  if (!X.allFinite() || !Y.allFinite()) {
    throw numeric_error("two_sample_pipeline: non-finite input");
  }
  if (opts.k_deflate < 0 || opts.k_deflate >= p) {
    throw std::invalid_argument("two_sample_pipeline: need 0 <= k_deflate < p");
  }

  // pooled covariance, divisor n + m - 2
  const Eigen::MatrixXd Xc = center_columns(X);
  const Eigen::MatrixXd Yc = center_columns(Y);
  {
    std::string bad;
    for (long j = 0; j < p; ++j) {
      if (Xc.col(j).squaredNorm() + Yc.col(j).squaredNorm() == 0.0) {
        if (!bad.empty()) bad += ", ";
        bad += std::to_string(j);
      }
    }
    if (!bad.empty()) throw numeric_error("two_sample_pipeline: zero-variance column(s): " + bad);
  }
  const Eigen::MatrixXd S =
      (Xc.transpose() * Xc + Yc.transpose() * Yc) / static_cast<double>(n + m - 2);

  // standardized two-sample statistics
  const double scale = std::sqrt(static_cast<double>(n) * m / static_cast<double>(n + m));
  Eigen::VectorXd tstats(p);
  for (long j = 0; j < p; ++j) {
    tstats[j] = scale * (X.col(j).mean() - Y.col(j).mean()) / std::sqrt(S(j, j));
  }

  const int df = static_cast<int>(n + m - 2);
  std::vector<double> pvals(p);
  for (long j = 0; j < p; ++j) {
    pvals[j] = 2.0 * numerics::t_cdf(-std::abs(tstats[j]), df);
  }

  TwoSampleResult out;
  out.pi0 = storey_pi0(pvals, opts.pi0_lambda);
  out.mu = estimate_mu(tstats, out.pi0);
  out.k_deflate = opts.k_deflate;
  out.threshold = Threshold::make(opts.t, df + 1);

  Eigen::MatrixXd corr;
  if (opts.corr_method == CorrelationMethod::ridge) {
    RidgeConfig rc = opts.ridge;
    rc.seed = opts.seed;
    rc.validate();
    double lambda;
    if (rc.lambda) {
      lambda = *rc.lambda;
    } else {
      Eigen::MatrixXd stacked(n + m, p);
      stacked.topRows(n) = Xc;
      stacked.bottomRows(m) = Yc;
      lambda = cv_lambda(stacked, rc);
    }
    out.ridge_lambda = lambda;
    corr = cov2cor(ridge_covariance_from(S, lambda));
  } else {
    corr = cov2cor(S);
  }
  out.weak_dep_before = corr.array().abs().sum() / (static_cast<double>(p) * p);

  Eigen::MatrixXd deflated = sim::pfa_deflate(corr, opts.k_deflate);
  corr = cov2cor(deflated);

  TestingProblem problem;
  problem.n = df + 1;
  problem.mu = out.mu.values;
  problem.sigma = corr;
  problem.validate(false);

  pairwise::CovProvider prov(problem, out.threshold, opts.engine, opts.sparsity_cutoff, opts.quad,
                             opts.mc_reps, opts.seed);
  out.moments = moments::fdp_moments(problem, out.threshold, std::ref(prov), opts.workers);
  out.diagnostics = moments::diagnostics(problem, out.threshold);
  return out;
}

}  // namespace fdpu::estimate
