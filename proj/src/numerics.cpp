#include "fdpu/numerics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "fdpu/errors.hpp"

namespace fdpu::numerics {

void QuadSpec::validate() const {
  if (nodes_1d < 2) throw std::invalid_argument("QuadSpec: nodes_1d must be >= 2");
  if (!(domain_halfwidth > 0.0)) throw std::invalid_argument("QuadSpec: domain_halfwidth must be > 0");
}

void BvnArgs::validate() const {
  if (std::isnan(h) || std::isnan(k)) throw std::invalid_argument("BvnArgs: h, k must not be NaN");
  if (!(std::abs(rho) <= 1.0)) throw std::invalid_argument("BvnArgs: |rho| must be <= 1");
}

double std_normal_cdf(double x) {
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double std_normal_pdf(double x) {
  if (std::isinf(x)) return 0.0;
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

namespace {

// Genz's BVND (hybrid Drezner-Wesolowsky): P(Z1 > h, Z2 > k), finite h, k.
double bvn_upper(double h, double k, double r) {
  static const double x6[3] = {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970};
  static const double w6[3] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
  static const double x12[6] = {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050,
                                -0.5873179542866171, -0.3678314989981802, -0.1252334085114692};
  static const double w12[6] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                0.2031674267230659, 0.2334925365383547, 0.2491470458134029};
  static const double x20[10] = {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
                                 -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
                                 -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
                                 -0.07652652113349733};
  static const double w20[10] = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                 0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                                 0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                                 0.1527533871307259};
  const double twopi = 2.0 * std::numbers::pi;
  const double* xg = x20;
  const double* wg = w20;
  int ng = 10;
  if (std::abs(r) < 0.3) {
    xg = x6; wg = w6; ng = 3;
  } else if (std::abs(r) < 0.75) {
    xg = x12; wg = w12; ng = 6;
  }

  double bvn = 0.0;
  double hk = h * k;
  if (std::abs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r);
    for (int i = 0; i < ng; ++i) {
      for (int is = -1; is <= 1; is += 2) {
        const double sn = std::sin(asr * (is * xg[i] + 1.0) / 2.0);
        bvn += wg[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return bvn * asr / (2.0 * twopi) + std_normal_cdf(-h) * std_normal_cdf(-k);
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    double asr = -(bs / as + hk) / 2.0;
    if (asr > -100.0) {
      bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    }
    if (-hk < 100.0) {
      const double b = std::sqrt(bs);
      const double sp = std::sqrt(twopi) * std_normal_cdf(-b / a);
      bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (int i = 0; i < 10; ++i) {
      for (int is = -1; is <= 1; is += 2) {
        const double ax = a * (is * x20[i] + 1.0);
        const double xs = ax * ax;
        const double rs = std::sqrt(1.0 - xs);
        asr = -(bs / xs + hk) / 2.0;
        if (asr > -100.0) {
          const double sp = 1.0 + c * xs * (1.0 + d * xs);
          const double ep = std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs;
          bvn += a * w20[i] * std::exp(asr) * (ep - sp);
        }
      }
    }
    bvn = -bvn / twopi;
  }
  if (r > 0.0) {
    bvn += std_normal_cdf(-std::max(h, k));
  } else {
    bvn = -bvn;
    if (k > h) bvn += std_normal_cdf(k) - std_normal_cdf(h);
  }
  return bvn;
}

}  // namespace

double bvn_cdf(const BvnArgs& args) {
  args.validate();
  double h = args.h;
  double k = args.k;
  const double rho = args.rho;
  if (h < k) std::swap(h, k);  // canonical order: swapping (h, k) is bit-exact
  if (std::isinf(k) && k < 0) return 0.0;
  if (std::isinf(h) && h > 0) return std_normal_cdf(k);
  if (rho >= 1.0) return std_normal_cdf(k);
  if (rho <= -1.0) return std::max(0.0, std_normal_cdf(h) + std_normal_cdf(k) - 1.0);
  if (rho == 0.0) return std_normal_cdf(h) * std_normal_cdf(k);
  return std::clamp(bvn_upper(-h, -k, rho), 0.0, 1.0);
}

namespace {

// Continued fraction for the incomplete beta (Lentz's method).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  constexpr double kFpMin = std::numeric_limits<double>::min() / kEps;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) <= kEps) return h;
  }
  throw numeric_error("incomplete_beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("incomplete_beta: a, b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_cf(a, b, x) / a;
  }
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double t_cdf(double x, int df) {
  if (df < 1) throw std::invalid_argument("t_cdf: df must be >= 1");
  if (std::isnan(x)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  if (x == 0.0) return 0.5;
  const double z = df / (df + x * x);
  const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, z);
  return x < 0 ? tail : 1.0 - tail;
}

double t_quantile(double prob, int df) {
  if (df < 1) throw std::invalid_argument("t_quantile: df must be >= 1");
  if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("t_quantile: prob must be in (0, 1)");
  if (prob == 0.5) return 0.0;
  if (prob > 0.5) return -t_quantile(1.0 - prob, df);
  // prob < 0.5: the root is negative. Bracket by doubling, then bisect.
  double lo = -1.0;
  double hi = 0.0;
  while (std::isfinite(lo) && t_cdf(lo, df) > prob) {
    hi = lo;
    lo *= 2.0;
  }
  if (!std::isfinite(lo)) throw numeric_error("t_quantile: failed to bracket root");
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (t_cdf(mid, df) < prob) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::vector<QuadNode> gauss_nodes(const QuadSpec& spec) {
  spec.validate();
  const int n = spec.nodes_1d;
  // Golub-Welsch on the probabilists' Hermite Jacobi matrix (a_k = 0,
  // b_k = sqrt(k)); weights are the squared first eigenvector components.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw numeric_error("gauss_nodes: eigen solve failed");
  std::vector<QuadNode> nodes(n);
  double wsum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    nodes[i] = {es.eigenvalues()[i], w};
    wsum += w;
  }
  for (auto& nd : nodes) nd.w /= wsum;
  return nodes;
}

namespace {

// P_n(x) and P_{n-1}(x) by the Bonnet recurrence.
std::pair<double, double> legendre_pair(int n, double x) {
  double p1 = 1.0;
  double p2 = 0.0;
  for (int j = 0; j < n; ++j) {
    const double p3 = p2;
    p2 = p1;
    p1 = ((2.0 * j + 1.0) * x * p2 - j * p3) / (j + 1.0);
  }
  return {p1, p2};
}

}  // namespace

std::vector<QuadNode> legendre_nodes(int n) {
  if (n < 1) throw std::invalid_argument("legendre_nodes: n must be >= 1");
  std::vector<QuadNode> nodes(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double p1 = 1.0, p2 = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      auto [q1, q2] = legendre_pair(n, x);
      p1 = q1;
      p2 = q2;
      const double dp = n * (x * p1 - p2) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) {
        std::tie(p1, p2) = legendre_pair(n, x);
        break;
      }
    }
    const double dp = n * (x * p1 - p2) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = {-x, w};
    nodes[n - 1 - i] = {x, w};
  }
  return nodes;
}

SigmaHatLaw::SigmaHatLaw(int df_) : df(df_) {
  if (df < 1) throw std::invalid_argument("SigmaHatLaw: df must be >= 1");
  const double d = static_cast<double>(df);
  mean = std::sqrt(2.0 / d) * std::exp(std::lgamma((d + 1.0) / 2.0) - std::lgamma(d / 2.0));
  sd = std::sqrt(std::max(1.0 - mean * mean, 0.0));
}

double SigmaHatLaw::log_pdf(double s) const {
  const double d = static_cast<double>(df);
  return std::log(2.0) + (d / 2.0) * std::log(d / 2.0) - std::lgamma(d / 2.0) +
         (d - 1.0) * std::log(s) - d * s * s / 2.0;
}

SigmaHatQuad::SigmaHatQuad(int n, const QuadSpec& spec) {
  spec.validate();
  if (n < 2) throw std::invalid_argument("SigmaHatQuad: sample size n must be >= 2");
  const SigmaHatLaw law(n - 1);
  const double lo = std::max(1e-12, law.mean - spec.domain_halfwidth * law.sd);
  const double hi = law.mean + spec.domain_halfwidth * law.sd;
  const auto gl = legendre_nodes(spec.nodes_1d);
  s_.resize(gl.size());
  wf_.resize(gl.size());
  for (std::size_t i = 0; i < gl.size(); ++i) {
    const double s = 0.5 * (hi - lo) * gl[i].x + 0.5 * (hi + lo);
    s_[i] = s;
    wf_[i] = 0.5 * (hi - lo) * gl[i].w * std::exp(law.log_pdf(s));
  }
}

double expect_over_sigma_hat(const std::function<double(double)>& g, int n, const QuadSpec& spec) {
  const SigmaHatQuad quad(n, spec);
  return quad.integrate(g);
}

}  // namespace fdpu::numerics
