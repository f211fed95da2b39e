#include "fdpu/pairwise_cov.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fdpu/errors.hpp"
#include "fdpu/parallel.hpp"
#include "fdpu/rng.hpp"

namespace fdpu::pairwise {

using numerics::bvn_cdf;
using numerics::BvnArgs;
using numerics::std_normal_cdf;

void PairSpec::validate() const {
  if (!(std::abs(rho) <= 1.0)) throw std::invalid_argument("PairSpec: |rho| must be <= 1");
  if (n < 3) throw std::invalid_argument("PairSpec: n must be >= 3");
  if (!std::isfinite(mu_j) || !std::isfinite(mu_k)) {
    throw std::invalid_argument("PairSpec: noncentralities must be finite");
  }
}

double conditional_cov(const PairSpec& pair, double sh_j, double sh_k, const Threshold& thr) {
  pair.validate();
  if (!(sh_j > 0.0) || !(sh_k > 0.0)) {
    throw std::invalid_argument("conditional_cov: sigma-hat values must be positive");
  }
  if (pair.rho == 0.0) return 0.0;
  const double aq = std::abs(thr.q);
  const double uj = sh_j * aq - pair.mu_j;
  const double lj = -sh_j * aq - pair.mu_j;
  const double uk = sh_k * aq - pair.mu_k;
  const double lk = -sh_k * aq - pair.mu_k;
  const double in_j = std_normal_cdf(uj) - std_normal_cdf(lj);
  const double in_k = std_normal_cdf(uk) - std_normal_cdf(lk);
  // Rectangle probability grouped so that swapping the pair is bit-exact.
  const double rect = (bvn_cdf({uj, uk, pair.rho}) + bvn_cdf({lj, lk, pair.rho})) -
                      (bvn_cdf({lj, uk, pair.rho}) + bvn_cdf({uj, lk, pair.rho}));
  const double p_joint = (1.0 - (in_j + in_k)) + rect;
  return p_joint - (1.0 - in_j) * (1.0 - in_k);
}

namespace {

struct PairCounts {
  long n11 = 0, nj = 0, nk = 0;
};

// One replicate of the exact sampler: n i.i.d. bivariate normal draws with
// means mu/sqrt(n), then the two one-sample t statistics.
inline void mc_replicate(const PairSpec& pair, double abs_q, double mean_j, double mean_k,
                         double rho_c, PhiloxStream& rng, bool& rej_j, bool& rej_k) {
  const int n = pair.n;
  double sx = 0.0, sxx = 0.0, sy = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g1 = rng.normal();
    const double g2 = rng.normal();
    const double x = mean_j + g1;
    const double y = mean_k + pair.rho * g1 + rho_c * g2;
    sx += x;
    sxx += x * x;
    sy += y;
    syy += y * y;
  }
  const double xbar = sx / n;
  const double ybar = sy / n;
  const double vx = (sxx - n * xbar * xbar) / (n - 1);
  const double vy = (syy - n * ybar * ybar) / (n - 1);
  const double tj = std::sqrt(static_cast<double>(n)) * xbar / std::sqrt(vx);
  const double tk = std::sqrt(static_cast<double>(n)) * ybar / std::sqrt(vy);
  rej_j = std::abs(tj) > abs_q;
  rej_k = std::abs(tk) > abs_q;
}

CovEstimate cov_from_counts(const PairCounts& c, long reps) {
  const double R = static_cast<double>(reps);
  const double pj = c.nj / R;
  const double pk = c.nk / R;
  const double value = (c.n11 - c.nj * (static_cast<double>(c.nk) / R)) / (R - 1.0);
  // SE from the influence values d = (a - pj)(b - pk), which take only four
  // values; moments follow from the joint counts.
  const long n10 = c.nj - c.n11;
  const long n01 = c.nk - c.n11;
  const long n00 = reps - c.nj - c.nk + c.n11;
  const double d11 = (1.0 - pj) * (1.0 - pk);
  const double d10 = (1.0 - pj) * (0.0 - pk);
  const double d01 = (0.0 - pj) * (1.0 - pk);
  const double d00 = (0.0 - pj) * (0.0 - pk);
  const double m1 = (c.n11 * d11 + n10 * d10 + n01 * d01 + n00 * d00) / R;
  const double m2 = (c.n11 * d11 * d11 + n10 * d10 * d10 + n01 * d01 * d01 + n00 * d00 * d00) / R;
  const double var_d = std::max(m2 - m1 * m1, 0.0);
  const double se = std::sqrt(var_d / R);
  return CovEstimate{value, se, CovMethod::monte_carlo, reps};
}

}  // namespace

CovEstimate mc_cov(const PairSpec& pair, const Threshold& thr, long reps, std::uint64_t seed,
                   int workers) {
  pair.validate();
  if (reps < 100) throw std::invalid_argument("mc_cov: reps must be >= 100");
  const double abs_q = std::abs(thr.q);
  const double sqn = std::sqrt(static_cast<double>(pair.n));
  const double mean_j = pair.mu_j / sqn;
  const double mean_k = pair.mu_k / sqn;
  const double rho_c = std::sqrt(std::max(0.0, 1.0 - pair.rho * pair.rho));

  const long block = 4096;
  const long n_blocks = (reps + block - 1) / block;
  std::vector<PairCounts> partial(n_blocks);
  parallel_blocks(reps, block, workers, [&](long b, long begin, long end) {
    PairCounts& c = partial[b];
    for (long r = begin; r < end; ++r) {
      PhiloxStream rng = make_stream(seed, RngPurpose::pair_mc, 0, static_cast<std::uint32_t>(r));
      bool rj = false, rk = false;
      mc_replicate(pair, abs_q, mean_j, mean_k, rho_c, rng, rj, rk);
      c.nj += rj;
      c.nk += rk;
      c.n11 += rj && rk;
    }
  });
  PairCounts total;
  for (const auto& c : partial) {
    total.nj += c.nj;
    total.nk += c.nk;
    total.n11 += c.n11;
  }
  return cov_from_counts(total, reps);
}

CovEstimate mc_var(double mu, const Threshold& thr, long reps, std::uint64_t seed) {
  if (reps < 100) throw std::invalid_argument("mc_var: reps must be >= 100");
  if (thr.n < 3) throw std::invalid_argument("mc_var: n must be >= 3");
  const double abs_q = std::abs(thr.q);
  const int n = thr.n;
  const double mean = mu / std::sqrt(static_cast<double>(n));
  long hits = 0;
  for (long r = 0; r < reps; ++r) {
    PhiloxStream rng = make_stream(seed, RngPurpose::pair_mc, 1, static_cast<std::uint32_t>(r));
    double sx = 0.0, sxx = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = mean + rng.normal();
      sx += x;
      sxx += x * x;
    }
    const double xbar = sx / n;
    const double v = (sxx - n * xbar * xbar) / (n - 1);
    const double t = std::sqrt(static_cast<double>(n)) * xbar / std::sqrt(v);
    hits += std::abs(t) > abs_q;
  }
  const double phat = static_cast<double>(hits) / reps;
  const double value = phat * (1.0 - phat) * reps / (reps - 1.0);
  // delta method on p(1-p), floored away from zero
  const double se = std::max(std::sqrt(phat * (1.0 - phat) / reps) * std::abs(1.0 - 2.0 * phat),
                             1.0 / static_cast<double>(reps));
  return CovEstimate{value, se, CovMethod::monte_carlo, reps};
}

namespace detail {

VarianceGrid::VarianceGrid(int n, const numerics::QuadSpec& spec) {
  spec.validate();
  if (n < 3) throw std::invalid_argument("VarianceGrid: n must be >= 3");
  const double s = std::sqrt(2.0 / (n - 1));
  const auto nodes = numerics::gauss_nodes(spec);
  double kept_mass = 0.0;
  for (const auto& nd : nodes) {
    const double v = 1.0 + s * nd.x;
    if (v > 1e-6) {
      x.push_back(nd.x);
      w.push_back(nd.w);
      sig.push_back(std::sqrt(v));
      kept_mass += nd.w;
    }
  }
  if (kept_mass < 0.5) {
    throw numeric_error("approx_cov: more than 50% of quadrature mass dropped (n too small)");
  }
  for (auto& wi : w) wi /= kept_mass;
}

Marginal::Marginal(double mu, const Threshold& thr, const VarianceGrid& grid) {
  const double aq = std::abs(thr.q);
  const std::size_t m = grid.sig.size();
  lo.resize(m);
  hi.resize(m);
  p_reject.resize(m);
  for (std::size_t a = 0; a < m; ++a) {
    hi[a] = grid.sig[a] * aq - mu;
    lo[a] = -grid.sig[a] * aq - mu;
    p_reject[a] = 1.0 - (std_normal_cdf(hi[a]) - std_normal_cdf(lo[a]));
  }
}

namespace {

// Conditional covariance at one grid cell from precomputed marginals;
// grouped so that swapping (j, k) roles is bit-exact.
inline double cell_cov(const Marginal& mj, std::size_t a, const Marginal& mk, std::size_t b,
                       double rho) {
  const double rect = (bvn_cdf({mj.hi[a], mk.hi[b], rho}) + bvn_cdf({mj.lo[a], mk.lo[b], rho})) -
                      (bvn_cdf({mj.lo[a], mk.hi[b], rho}) + bvn_cdf({mj.hi[a], mk.lo[b], rho}));
  const double in_j = 1.0 - mj.p_reject[a];
  const double in_k = 1.0 - mk.p_reject[b];
  const double p_joint = (1.0 - (in_j + in_k)) + rect;
  return p_joint - mj.p_reject[a] * mk.p_reject[b];
}

}  // namespace

double pair_value(const VarianceGrid& grid, const Marginal& mj, const Marginal& mk, double rho,
                  double /*abs_q*/) {
  if (rho == 0.0) return 0.0;
  const std::size_t m = grid.x.size();
  const double r = rho * rho;
  if (r > 1.0 - 1e-12) {
    // Perfectly correlated data: the two sample variances coincide.
    double acc = 0.0;
    for (std::size_t a = 0; a < m; ++a) acc += grid.w[a] * cell_cov(mj, a, mk, a, rho);
    return acc;
  }
  const double one_m_r2 = 1.0 - r * r;
  const double inv_norm = 1.0 / std::sqrt(one_m_r2);
  double total = 0.0;
  double mass = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    // diagonal cell
    {
      const double xa = grid.x[a];
      const double lr = -(r * r * (2.0 * xa * xa) - 2.0 * r * xa * xa) / (2.0 * one_m_r2);
      const double wab = grid.w[a] * grid.w[a] * inv_norm * std::exp(lr);
      total += wab * cell_cov(mj, a, mk, a, rho);
      mass += wab;
    }
    for (std::size_t b = a + 1; b < m; ++b) {
      const double xa = grid.x[a];
      const double xb = grid.x[b];
      const double lr = -(r * r * (xa * xa + xb * xb) - 2.0 * r * xa * xb) / (2.0 * one_m_r2);
      const double wab = grid.w[a] * grid.w[b] * inv_norm * std::exp(lr);
      // commutative sum of the two orientations keeps the j <-> k swap exact
      const double two_cells = cell_cov(mj, a, mk, b, rho) + cell_cov(mj, b, mk, a, rho);
      total += wab * two_cells;
      mass += 2.0 * wab;
    }
  }
  return total / mass;
}

}  // namespace detail

CovEstimate approx_cov(const PairSpec& pair, const Threshold& thr, const numerics::QuadSpec& spec) {
  pair.validate();
  const detail::VarianceGrid grid(pair.n, spec);
  const detail::Marginal mj(pair.mu_j, thr, grid);
  const detail::Marginal mk(pair.mu_k, thr, grid);
  const double value = detail::pair_value(grid, mj, mk, pair.rho, std::abs(thr.q));
  const long nodes = static_cast<long>(grid.x.size());
  return CovEstimate{value, std::nullopt, CovMethod::quadrature, nodes * nodes};
}

CovProvider::CovProvider(const TestingProblem& problem, const Threshold& thr, CovMethod method,
                         double sparsity_cutoff, const numerics::QuadSpec& spec, long mc_reps,
                         std::uint64_t seed)
    : problem_(problem),
      thr_(thr),
      method_(method),
      cutoff_(sparsity_cutoff),
      mc_reps_(mc_reps),
      seed_(seed) {
  if (cutoff_ < 0.0) throw std::invalid_argument("CovProvider: sparsity_cutoff must be >= 0");
  if (method_ == CovMethod::quadrature) {
    grid_.emplace(problem.n, spec);
    marginals_.reserve(problem.p());
    for (int j = 0; j < problem.p(); ++j) {
      marginals_.emplace_back(problem.mu[j], thr_, *grid_);
    }
  }
}

double CovProvider::operator()(int j, int k) const {
  if (j == k) throw std::invalid_argument("CovProvider: j and k must differ");
  const double rho = problem_.sigma(j, k);
  if (std::abs(rho) <= cutoff_) return 0.0;
  if (method_ == CovMethod::quadrature) {
    return detail::pair_value(*grid_, marginals_[j], marginals_[k], rho, std::abs(thr_.q));
  }
  try {
    // canonical orientation so (j, k) and (k, j) give the same estimate
    const int a = std::min(j, k);
    const int b = std::max(j, k);
    const std::uint64_t pair_id =
        static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(problem_.p()) + b;
    PairSpec pair{problem_.mu[a], problem_.mu[b], rho, problem_.n};
    // one stream family per pair so the sweep order never matters
    const double abs_q = std::abs(thr_.q);
    const double sqn = std::sqrt(static_cast<double>(pair.n));
    const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    PairCounts c;
    const double mean_j = pair.mu_j / sqn;
    const double mean_k = pair.mu_k / sqn;
    for (long r = 0; r < mc_reps_; ++r) {
      PhiloxStream rng =
          make_stream(seed_, RngPurpose::pair_mc, pair_id + 2, static_cast<std::uint32_t>(r));
      bool rj = false, rk = false;
      mc_replicate(pair, abs_q, mean_j, mean_k, rho_c, rng, rj, rk);
      c.nj += rj;
      c.nk += rk;
      c.n11 += rj && rk;
    }
    return cov_from_counts(c, mc_reps_).value;
  } catch (const std::exception& e) {
    throw numeric_error("cov_matrix: pair (" + std::to_string(j) + ", " + std::to_string(k) +
                        "): " + e.what());
  }
}

}  // namespace fdpu::pairwise
