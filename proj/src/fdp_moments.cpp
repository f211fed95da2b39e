#include "fdpu/fdp_moments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fdpu/errors.hpp"
#include "fdpu/parallel.hpp"

namespace fdpu::moments {

using numerics::SigmaHatQuad;
using numerics::std_normal_cdf;
using numerics::std_normal_pdf;

double xi(double mu_j, const Threshold& thr) {
  const SigmaHatQuad quad(thr.n);
  const double q = thr.q;
  return quad.integrate([&](double s) {
    return std_normal_cdf(q * s + mu_j) + std_normal_cdf(q * s - mu_j);
  });
}

MeanResult asymptotic_mean(const TestingProblem& problem, const Threshold& thr) {
  problem.validate(false);
  const SigmaHatQuad quad(thr.n);
  const double q = thr.q;
  double sum_alt = 0.0;
  long p1 = 0;
  for (int j = 0; j < problem.p(); ++j) {
    if (problem.mu[j] == 0.0) continue;
    ++p1;
    const double mu = problem.mu[j];
    sum_alt += quad.integrate(
        [&](double s) { return std_normal_cdf(q * s + mu) + std_normal_cdf(q * s - mu); });
  }
  const long p0 = problem.p() - p1;
  const double numer = static_cast<double>(p0) * thr.t;
  MeanResult out;
  out.xi_bar = p1 > 0 ? std::optional<double>(sum_alt / p1) : std::nullopt;
  out.mean = p1 > 0 ? numer / (numer + sum_alt) : 1.0;
  return out;
}

double v1(long p0, long p1, double t, double xi_bar) {
  if (p0 + p1 < 1) throw std::invalid_argument("v1: p0 + p1 must be >= 1");
  if (p1 > 0 && !(xi_bar >= 0.0 && xi_bar <= 1.0)) {
    throw std::invalid_argument("v1: xi_bar must be in [0, 1]");
  }
  const double p1xi = p1 > 0 ? p1 * xi_bar : 0.0;
  const double denom = p0 * t + p1xi;
  if (denom == 0.0) throw std::invalid_argument("v1: p0*t + p1*xi_bar must be > 0");
  const double d4 = denom * denom * denom * denom;
  const double term_null = p1xi * p1xi * p0 * t * (1.0 - t);
  const double term_alt = p1 > 0 ? p0 * t * (p0 * t) * p1 * xi_bar * (1.0 - xi_bar) : 0.0;
  return (term_null + term_alt) / d4;
}

namespace {

struct PairSums {
  double h0h0 = 0.0;
  double h0h1 = 0.0;
  double h1h1 = 0.0;
};

PairSums pair_sums(const TestingProblem& problem, const CovFn& cov, int workers) {
  const long p = problem.p();
  const long n_pairs = p * (p - 1) / 2;
  const long block = 2048;
  const long n_blocks = (n_pairs + block - 1) / block;
  std::vector<PairSums> partial(n_blocks);

  // linear index -> (j, k), j < k, ascending lexicographic;
  // row j starts at offset j*(2p - 1 - j)/2
  auto unrank = [p](long idx) {
    auto row_start = [p](long r) { return r * (2 * p - 1 - r) / 2; };
    const double b = 2.0 * p - 1.0;
    long j = static_cast<long>((b - std::sqrt(b * b - 8.0 * static_cast<double>(idx))) / 2.0);
    j = std::clamp(j, 0L, p - 2);
    while (j > 0 && row_start(j) > idx) --j;
    while (j < p - 2 && row_start(j + 1) <= idx) ++j;
    const long k = j + 1 + (idx - row_start(j));
    return std::pair<long, long>(j, k);
  };

  parallel_blocks(n_pairs, block, workers, [&](long b, long begin, long end) {
    auto [j, k] = unrank(begin);
    PairSums& s = partial[b];
    for (long idx = begin; idx < end; ++idx) {
      const double c = cov(static_cast<int>(j), static_cast<int>(k));
      const bool j_null = problem.mu[j] == 0.0;
      const bool k_null = problem.mu[k] == 0.0;
      if (j_null && k_null) {
        s.h0h0 += c;
      } else if (!j_null && !k_null) {
        s.h1h1 += c;
      } else {
        s.h0h1 += c;
      }
      if (++k == p) {
        ++j;
        k = j + 1;
      }
    }
  });

  PairSums total;
  for (const auto& s : partial) {
    total.h0h0 += s.h0h0;
    total.h0h1 += s.h0h1;
    total.h1h1 += s.h1h1;
  }
  return total;
}

}  // namespace

double v2(const TestingProblem& problem, const Threshold& thr, const CovFn& cov, int workers) {
  problem.validate(false);
  const long p0 = problem.p0();
  const long p1 = problem.p1();
  const double t = thr.t;
  const MeanResult mr = asymptotic_mean(problem, thr);
  const double p1xi = mr.xi_bar ? p1 * *mr.xi_bar : 0.0;
  const double denom = p0 * t + p1xi;
  if (denom == 0.0) throw std::invalid_argument("v2: p0*t + p1*xi_bar must be > 0");
  const double d4 = denom * denom * denom * denom;
  const PairSums sums = pair_sums(problem, cov, workers);
  const double term0 = 2.0 * p1xi * p1xi * sums.h0h0;
  const double term01 = -2.0 * p0 * t * p1xi * sums.h0h1;
  const double term1 = 2.0 * (p0 * t) * (p0 * t) * sums.h1h1;
  return (term0 + term01 + term1) / d4;
}

FdpMoments fdp_moments(const TestingProblem& problem, const Threshold& thr, const CovFn& cov,
                       int workers) {
  const MeanResult mr = asymptotic_mean(problem, thr);
  const long p0 = problem.p0();
  const long p1 = problem.p1();
  const double v1_val = v1(p0, p1, thr.t, mr.xi_bar.value_or(0.0));
  const double v2_val = v2(problem, thr, cov, workers);
  const double raw = v1_val + v2_val;
  FdpMoments out;
  out.mean = mr.mean;
  out.xi_bar = mr.xi_bar;
  out.v1 = v1_val;
  out.v2 = v2_val;
  out.clamped = raw < -1e-12;
  out.variance = std::max(raw, 0.0);
  out.sd = std::sqrt(out.variance);
  return out;
}

double h_function(double mu, const Threshold& thr, const numerics::QuadSpec& spec) {
  const SigmaHatQuad quad(thr.n, spec);
  const double q = thr.q;
  const double aq = std::abs(q);
  return quad.integrate([&](double s) {
    const double up = aq * s + mu;
    const double dn = aq * s - mu;
    return std_normal_pdf(q * s) * s *
           (std_normal_pdf(up) * up + std_normal_pdf(dn) * dn);
  });
}

double mu_t_root(const Threshold& thr, const numerics::QuadSpec& spec) {
  double lo = 1e-6;
  double h_lo = h_function(lo, thr, spec);
  double hi = 1.0;
  double h_hi = h_function(hi, thr, spec);
  while (h_lo * h_hi > 0.0) {
    lo = hi;
    h_lo = h_hi;
    hi *= 2.0;
    if (hi > 1e3) {
      throw numeric_error("mu_t_root: no sign change of H on (1e-6, 1e3)");
    }
    h_hi = h_function(hi, thr, spec);
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const double hm = h_function(mid, thr, spec);
    if (hm == 0.0) return mid;
    if ((hm > 0.0) == (h_lo > 0.0)) {
      lo = mid;
      h_lo = hm;
    } else {
      hi = mid;
      h_hi = hm;
    }
  }
  const double root = 0.5 * (lo + hi);
  if (std::abs(h_function(root, thr, spec)) > 1e-10) {
    throw numeric_error("mu_t_root: bisection did not reach |H| <= 1e-10");
  }
  return root;
}

DiagnosticsReport diagnostics(const TestingProblem& problem, const Threshold& thr) {
  problem.validate(false);
  DiagnosticsReport rep;
  const int p = problem.p();

  double abs_sum = 0.0;
  for (int j = 0; j < p; ++j) {
    for (int k = 0; k < p; ++k) abs_sum += std::abs(problem.sigma(j, k));
  }
  rep.weak_dep_measure = abs_sum / (static_cast<double>(p) * p);

  try {
    rep.mu_t = mu_t_root(thr);
    double sup = -std::numeric_limits<double>::infinity();
    const int grid_n = 1000;
    for (int i = 0; i < grid_n; ++i) {
      const double mu = -*rep.mu_t + (2.0 * *rep.mu_t) * (i + 0.5) / grid_n;
      sup = std::max(sup, h_function(mu, thr));
    }
    rep.c_t_max = sup;
  } catch (const numeric_error&) {
    rep.mu_t.reset();
    rep.c_t_max.reset();
  }

  // ordered-pair sums over index classes
  double s2_h0 = 0.0, s2_h1 = 0.0, s4_all = 0.0, s2_cross_window = 0.0;
  for (int j = 0; j < p; ++j) {
    const bool j_null = problem.mu[j] == 0.0;
    for (int k = 0; k < p; ++k) {
      if (j == k) continue;
      const double v = problem.sigma(j, k);
      const double v2_ = v * v;
      s4_all += v2_ * v2_;
      const bool k_null = problem.mu[k] == 0.0;
      if (j_null && k_null) s2_h0 += v2_;
      if (!j_null && !k_null) s2_h1 += v2_;
      if (!j_null && k_null && rep.mu_t && std::abs(problem.mu[j]) <= *rep.mu_t) {
        s2_cross_window += v2_;
      }
    }
  }

  // (5): sum_{H0 pairs} sigma^2 >= C_t_max / E^2(phi(sh q)|sh q|) * windowed cross sum
  rep.cond5.lhs = s2_h0;
  if (rep.c_t_max) {
    const SigmaHatQuad quad(thr.n);
    const double q = thr.q;
    const double e_phi = quad.integrate(
        [&](double s) { return std_normal_pdf(s * q) * std::abs(s * q); });
    rep.cond5.rhs = *rep.c_t_max / (e_phi * e_phi) * s2_cross_window;
    rep.cond5.ok = rep.cond5.lhs >= rep.cond5.rhs;
  } else {
    rep.cond5.rhs = std::numeric_limits<double>::quiet_NaN();
    rep.cond5.ok.reset();
  }

  // (6): sum_{H0 pairs} sigma^2 + p >= C * sum_{H1 pairs} sigma^2, C = 1
  rep.cond6.lhs = s2_h0 + p;
  rep.cond6.rhs = s2_h1;
  rep.cond6.ok = rep.cond6.lhs >= rep.cond6.rhs;

  // (7): sum sigma^4 = o(sum_{H0 pairs} sigma^2 + p0), proxied as lhs <= 0.01 rhs
  rep.cond7.lhs = s4_all;
  rep.cond7.rhs = s2_h0 + static_cast<double>(problem.p0());
  rep.cond7.ok = rep.cond7.lhs <= 0.01 * rep.cond7.rhs;

  return rep;
}

}  // namespace fdpu::moments
