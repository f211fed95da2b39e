#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fdpu/numerics.hpp"
#include "fdpu/problem.hpp"

namespace fdpu::pairwise {

// Inputs for one pair of dependent t-tests. mu_j/mu_k are noncentralities of
// the test statistics; rho is the data correlation sigma_jk.
struct PairSpec {
  double mu_j;
  double mu_k;
  double rho;
  int n;
  void validate() const;  // |rho| <= 1, n >= 3
};

enum class CovMethod { monte_carlo, quadrature };

struct CovEstimate {
  double value;
  std::optional<double> std_error;  // present iff method == monte_carlo
  CovMethod method;
  long reps_or_nodes;
};

// Cov of the two rejection indicators given realized sigma-hats: events on
// standard bivariate normal (Z_j, Z_k) with correlation rho, rejection when
// Z falls outside [-sh|q| - mu, sh|q| - mu].
double conditional_cov(const PairSpec& pair, double sh_j, double sh_k, const Threshold& thr);

// Exact-law Monte Carlo: each replicate draws n i.i.d. bivariate normal
// observations with means mu/sqrt(n) and forms the two one-sample t
// statistics. Deterministic for a fixed seed at any worker count.
CovEstimate mc_cov(const PairSpec& pair, const Threshold& thr, long reps, std::uint64_t seed,
                   int workers = 1);

// Variance of a single indicator (the j == k path of the sampler).
CovEstimate mc_var(double mu, const Threshold& thr, long reps, std::uint64_t seed);

// Tensor-quadrature evaluation of the double integral over the CLT law of
// the sample variances: (shj^2, shk^2) ~ N((1,1), 2/(n-1) [[1, r],[r, 1]])
// with r = rho^2. Nodes with variance <= 1e-6 are dropped and the remaining
// weights renormalized.
CovEstimate approx_cov(const PairSpec& pair, const Threshold& thr,
                       const numerics::QuadSpec& spec = numerics::QuadSpec{});

namespace detail {

// Shared variance-axis grid: probabilists' Gauss-Hermite nodes mapped to
// v = 1 + s*x, after the drop rule. Identical in approx_cov and CovProvider
// so the two paths agree bit-exactly.
struct VarianceGrid {
  std::vector<double> x, w, sig;
  VarianceGrid(int n, const numerics::QuadSpec& spec);
};

// Per-variable, per-node rejection geometry under a threshold.
struct Marginal {
  std::vector<double> lo, hi, p_reject;
  Marginal() = default;
  Marginal(double mu, const Threshold& thr, const VarianceGrid& grid);
};

double pair_value(const VarianceGrid& grid, const Marginal& mj, const Marginal& mk, double rho,
                  double abs_q);

}  // namespace detail

// Pair-indexed provider over a whole problem. Quadrature marginals are
// precomputed once per (variable, node) and shared across that variable's
// pairs; pairs with |sigma_jk| <= sparsity_cutoff return 0 without work.
class CovProvider {
 public:
  CovProvider(const TestingProblem& problem, const Threshold& thr, CovMethod method,
              double sparsity_cutoff = 0.0,
              const numerics::QuadSpec& spec = numerics::QuadSpec{},
              long mc_reps = 10000, std::uint64_t seed = 0);

  // Cov(t_j, t_k) for j != k.
  double operator()(int j, int k) const;

 private:
  const TestingProblem& problem_;
  Threshold thr_;
  CovMethod method_;
  double cutoff_;
  long mc_reps_;
  std::uint64_t seed_;
  std::optional<detail::VarianceGrid> grid_;
  std::vector<detail::Marginal> marginals_;
};

}  // namespace fdpu::pairwise
