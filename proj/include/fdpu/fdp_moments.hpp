#pragma once

#include <functional>
#include <optional>

#include "fdpu/numerics.hpp"
#include "fdpu/problem.hpp"

namespace fdpu::moments {

// Marginal rejection probability of one t-test with noncentrality mu_j:
// E over sigma-hat of Phi(q*sh + mu_j) + Phi(q*sh - mu_j).
double xi(double mu_j, const Threshold& thr);

struct MeanResult {
  double mean;
  std::optional<double> xi_bar;  // absent when p1 = 0
};

// Asymptotic FDP limit p0*t / (p0*t + sum over H1 of xi).
MeanResult asymptotic_mean(const TestingProblem& problem, const Threshold& thr);

// Independence component of the asymptotic variance. xi_bar is ignored when
// p1 = 0 (the p1*xi_bar products are 0).
double v1(long p0, long p1, double t, double xi_bar);

using CovFn = std::function<double(int, int)>;

// Dependence component: the three pair sums weighted per the variance
// decomposition. Pairs are accumulated in ascending (j, k) lexicographic
// order over fixed blocks, so results are reproducible at any worker count.
double v2(const TestingProblem& problem, const Threshold& thr, const CovFn& cov, int workers = 1);

struct FdpMoments {
  double mean;
  std::optional<double> xi_bar;
  double v1;
  double v2;
  double variance;  // v1 + v2, clamped at 0
  double sd;
  bool clamped;     // set when v1 + v2 < -1e-12 before clamping
};

FdpMoments fdp_moments(const TestingProblem& problem, const Threshold& thr, const CovFn& cov,
                       int workers = 1);

// Theorem-2 boundary function H(mu), evaluated over the sigma-hat law.
double h_function(double mu, const Threshold& thr,
                  const numerics::QuadSpec& spec = numerics::QuadSpec{64, 8.0});

// Unique positive root of H: bisection on (1e-6, M), M grown geometrically
// until a sign change is bracketed. Throws numeric_error if none by M = 1e3.
double mu_t_root(const Threshold& thr,
                 const numerics::QuadSpec& spec = numerics::QuadSpec{64, 8.0});

struct ConditionCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  std::optional<bool> ok;
};

struct DiagnosticsReport {
  double weak_dep_measure = 0.0;      // p^-2 sum |sigma_jk| over all (j, k)
  std::optional<double> mu_t;
  std::optional<double> c_t_max;      // sup of H over a 1000-point grid on (-mu_t, mu_t)
  ConditionCheck cond5, cond6, cond7;
};

DiagnosticsReport diagnostics(const TestingProblem& problem, const Threshold& thr);

}  // namespace fdpu::moments
