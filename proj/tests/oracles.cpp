#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace oracles {

namespace {

double simpson(double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive(const std::function<double(double)>& f, double a, double fa, double b, double fb,
                double m, double fm, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(a, fa, m, fm, flm);
  const double right = simpson(m, fm, b, fb, frm);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) +
         adaptive(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(m);
  return adaptive(f, a, fa, b, fb, m, fm, simpson(a, fa, b, fb, fm), tol, 48);
}

double bvn_cdf_brute(double h, double k, double rho, double tol) {
  if (std::isinf(h) && h < 0) return 0.0;
  if (std::isinf(k) && k < 0) return 0.0;
  const double lo = -9.0;
  const double hi_x = std::isinf(h) ? 9.0 : std::min(h, 9.0);
  const double hi_y = std::isinf(k) ? 9.0 : std::min(k, 9.0);
  if (hi_x <= lo || hi_y <= lo) return 0.0;
  const double det = 1.0 - rho * rho;
  const double norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(det));
  auto inner = [&](double x) {
    auto fy = [&](double y) {
      const double q = (x * x - 2.0 * rho * x * y + y * y) / (2.0 * det);
      return std::exp(-q);
    };
    // split at the conditional center so high-|rho| ridges are not missed
    const double center = std::clamp(rho * x, lo + 1e-6, hi_y - 1e-6);
    return norm * (integrate(fy, lo, center, tol / 80.0) + integrate(fy, center, hi_y, tol / 80.0));
  };
  return integrate(inner, lo, hi_x, tol);
}

double t_cdf_brute(double x, int df) {
  const double d = static_cast<double>(df);
  const double log_norm =
      std::lgamma((d + 1.0) / 2.0) - std::lgamma(d / 2.0) - 0.5 * std::log(d * std::numbers::pi);
  auto pdf = [&](double u) {
    return std::exp(log_norm - (d + 1.0) / 2.0 * std::log1p(u * u / d));
  };
  const double ax = std::abs(x);
  const double cap = std::min(ax, 60.0 + 10.0 * std::sqrt(d));
  const double half = integrate(pdf, 0.0, cap, 1e-14);
  return x >= 0.0 ? 0.5 + half : 0.5 - half;
}

namespace {

long merge_count(std::vector<double>& v, std::vector<double>& tmp, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 1) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  long inv = merge_count(v, tmp, lo, mid) + merge_count(v, tmp, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += static_cast<long>(mid - i);
      tmp[k++] = v[j++];
    } else {
      tmp[k++] = v[i++];
    }
  }
  while (i < mid) tmp[k++] = v[i++];
  while (j < hi) tmp[k++] = v[j++];
  std::copy(tmp.begin() + lo, tmp.begin() + hi, v.begin() + lo);
  return inv;
}

}  // namespace

double kendall_tau(std::vector<double> x, std::vector<double> y) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });
  std::vector<double> ysorted(n);
  for (std::size_t i = 0; i < n; ++i) ysorted[i] = y[order[i]];
  std::vector<double> tmp(n);
  const long inv = merge_count(ysorted, tmp, 0, n);
  const double pairs = 0.5 * n * (n - 1.0);
  return (pairs - 2.0 * inv) / pairs;
}

McResult mc_over_sigma_hat(const std::function<double(double)>& g, int df, long draws,
                           unsigned long seed) {
  std::mt19937_64 rng(seed);
  std::chi_squared_distribution<double> chi2(df);
  double sum = 0.0, sum2 = 0.0;
  for (long i = 0; i < draws; ++i) {
    const double s = std::sqrt(chi2(rng) / df);
    const double v = g(s);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / draws;
  const double var = std::max(sum2 / draws - mean * mean, 0.0);
  return {mean, std::sqrt(var / draws)};
}

}  // namespace oracles
