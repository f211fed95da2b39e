#include "fdpu/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fdpu/errors.hpp"
#include "fdpu/fdp_moments.hpp"
#include "fdpu/io.hpp"
#include "fdpu/pairwise_cov.hpp"
#include "fdpu/parallel.hpp"

namespace fdpu::sim {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::equal_correlation: return "equal_correlation";
    case ModelKind::fan_song: return "fan_song";
    case ModelKind::independent_cauchy: return "independent_cauchy";
    case ModelKind::three_factor: return "three_factor";
    case ModelKind::two_factor: return "two_factor";
    case ModelKind::nonlinear_factor: return "nonlinear_factor";
  }
  throw std::invalid_argument("unknown ModelKind");
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "equal_correlation") return ModelKind::equal_correlation;
  if (name == "fan_song") return ModelKind::fan_song;
  if (name == "independent_cauchy") return ModelKind::independent_cauchy;
  if (name == "three_factor") return ModelKind::three_factor;
  if (name == "two_factor") return ModelKind::two_factor;
  if (name == "nonlinear_factor") return ModelKind::nonlinear_factor;
  throw config_error("unknown simulation model: " + name);
}

void SimulationModel::validate() const {
  if (kind == ModelKind::equal_correlation && !(equal_rho >= 0.0 && equal_rho < 1.0)) {
    throw std::invalid_argument("SimulationModel: equal_rho must be in [0, 1)");
  }
}

ModelInstance instantiate(const SimulationModel& model, int p, PhiloxStream& rng) {
  model.validate();
  if (p < 1) throw std::invalid_argument("instantiate: p must be >= 1");
  ModelInstance inst;
  inst.model = model;
  inst.p = p;
  int n_factors = 0;
  switch (model.kind) {
    case ModelKind::three_factor: n_factors = 3; break;
    case ModelKind::two_factor:
    case ModelKind::nonlinear_factor: n_factors = 2; break;
    default: break;
  }
  if (n_factors > 0) {
    inst.loadings.resize(p, n_factors);
    for (int j = 0; j < p; ++j) {
      for (int f = 0; f < n_factors; ++f) inst.loadings(j, f) = rng.uniform(-1.0, 1.0);
    }
  }
  return inst;
}

Eigen::VectorXd generate_model_z(const ModelInstance& inst, PhiloxStream& rng) {
  const int p = inst.p;
  Eigen::VectorXd z(p);
  switch (inst.model.kind) {
    case ModelKind::equal_correlation: {
      // Lambda = rho 11^T + (1 - rho) I realized through one shared factor.
      const double rho = inst.model.equal_rho;
      const double w = rng.normal();
      const double a = std::sqrt(rho);
      const double b = std::sqrt(1.0 - rho);
      for (int j = 0; j < p; ++j) z[j] = a * w + b * rng.normal();
      return z;
    }
    case ModelKind::fan_song: {
      // Head coordinates i.i.d. N(0,1); the last ceil(p/20) are built from
      // the first 10 as sum Z_l (-1)^{l+1} / 5 plus sqrt(1 - 10/25) noise.
      const int tail = std::min(static_cast<int>((p + 19) / 20), std::max(0, p - 10));
      const int head = p - tail;
      for (int j = 0; j < head; ++j) z[j] = rng.normal();
      double base = 0.0;
      if (tail > 0) {
        for (int l = 1; l <= 10; ++l) base += z[l - 1] * ((l % 2 == 1) ? 1.0 : -1.0) / 5.0;
      }
      const double noise_sd = std::sqrt(1.0 - 10.0 / 25.0);
      for (int j = head; j < p; ++j) z[j] = base + noise_sd * rng.normal();
      return z;
    }
    case ModelKind::independent_cauchy: {
      for (int j = 0; j < p; ++j) z[j] = rng.cauchy();
      return z;
    }
    case ModelKind::three_factor: {
      const double w1 = -2.0 + rng.normal();
      const double w2 = 1.0 + rng.normal();
      const double w3 = 4.0 + rng.normal();
      for (int j = 0; j < p; ++j) {
        z[j] = inst.loadings(j, 0) * w1 + inst.loadings(j, 1) * w2 + inst.loadings(j, 2) * w3 +
               rng.normal();
      }
      return z;
    }
    case ModelKind::two_factor: {
      const double w1 = rng.normal();
      const double w2 = rng.normal();
      for (int j = 0; j < p; ++j) {
        z[j] = inst.loadings(j, 0) * w1 + inst.loadings(j, 1) * w2 + rng.normal();
      }
      return z;
    }
    case ModelKind::nonlinear_factor: {
      const double w1 = rng.normal();
      const double w2 = rng.normal();
      for (int j = 0; j < p; ++j) {
        const double r1 = inst.loadings(j, 0);
        const double r2 = inst.loadings(j, 1);
        const double sgn = r2 > 0.0 ? 1.0 : (r2 < 0.0 ? -1.0 : 0.0);
        z[j] = std::sin(r1 * w1) + sgn * std::exp(std::abs(r2) * w2) + rng.normal();
      }
      return z;
    }
  }
  throw std::invalid_argument("generate_model_z: unknown model kind");
}

namespace {

double weak_dep(const Eigen::MatrixXd& corr) {
  return corr.array().abs().sum() / (static_cast<double>(corr.rows()) * corr.cols());
}

Eigen::MatrixXd to_correlation(const Eigen::MatrixXd& cov) {
  const int p = static_cast<int>(cov.rows());
  Eigen::VectorXd d = cov.diagonal();
  for (int j = 0; j < p; ++j) {
    if (!(d[j] > 0.0)) {
      throw numeric_error("build_sigma: degenerate covariance (nonpositive diagonal at " +
                          std::to_string(j) + ")");
    }
  }
  Eigen::VectorXd inv_sd = d.array().sqrt().inverse();
  Eigen::MatrixXd corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  for (int j = 0; j < p; ++j) {
    corr(j, j) = 1.0;
    for (int k = 0; k < p; ++k) {
      corr(j, k) = std::clamp(corr(j, k), -1.0, 1.0);
    }
  }
  corr = ((corr + corr.transpose()) / 2.0).eval();
  for (int j = 0; j < p; ++j) corr(j, j) = 1.0;
  return corr;
}

}  // namespace

Eigen::MatrixXd pfa_deflate(const Eigen::MatrixXd& sigma, int k) {
  const int p = static_cast<int>(sigma.rows());
  if (sigma.cols() != p) throw std::invalid_argument("pfa_deflate: sigma must be square");
  if (k < 0 || k >= p) throw std::invalid_argument("pfa_deflate: need 0 <= k < p");
  if (k == 0) return sigma;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  if (es.info() != Eigen::Success) throw numeric_error("pfa_deflate: eigen solve failed");
  Eigen::MatrixXd out = sigma;
  // eigenvalues ascending; remove the top k
  for (int i = 0; i < k; ++i) {
    const int idx = p - 1 - i;
    const double lambda = es.eigenvalues()[idx];
    Eigen::VectorXd v = es.eigenvectors().col(idx);
    // deterministic sign: first nonzero component positive
    for (int j = 0; j < p; ++j) {
      if (v[j] != 0.0) {
        if (v[j] < 0.0) v = -v;
        break;
      }
    }
    out.noalias() -= lambda * v * v.transpose();
  }
  out = ((out + out.transpose()) / 2.0).eval();
  return out;
}

std::pair<Eigen::MatrixXd, DeflationReport> build_sigma(const SimulationModel& model, int p,
                                                        int m, int k_deflate,
                                                        std::uint64_t seed) {
  if (m <= 1) throw std::invalid_argument("build_sigma: m must be > 1");
  PhiloxStream loading_rng = make_stream(seed, RngPurpose::model_loadings, 0);
  const ModelInstance inst = instantiate(model, p, loading_rng);
  Eigen::MatrixXd draws(m, p);
  for (int i = 0; i < m; ++i) {
    PhiloxStream rng = make_stream(seed, RngPurpose::sigma_draws, 0, static_cast<std::uint32_t>(i));
    draws.row(i) = generate_model_z(inst, rng).transpose();
  }
  const Eigen::RowVectorXd mean = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / (m - 1.0);

  const Eigen::MatrixXd corr_before = to_correlation(cov);
  DeflationReport rep;
  rep.weak_dep_before = weak_dep(corr_before);

  Eigen::MatrixXd deflated;
  Eigen::MatrixXd corr_after;
  int k = k_deflate;
  if (k >= 0) {
    deflated = pfa_deflate(cov, k);
    corr_after = to_correlation(deflated);
  } else {
    // smallest k <= 10 reaching weak dependence <= 0.05, else k = 10
    for (k = 0; k <= 10; ++k) {
      deflated = pfa_deflate(cov, k);
      corr_after = to_correlation(deflated);
      if (weak_dep(corr_after) <= 0.05) break;
    }
    if (k > 10) k = 10;
  }
  rep.k_removed = k;
  if (k > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    for (int i = 0; i < k; ++i) rep.removed_eigenvalues.push_back(es.eigenvalues()[p - 1 - i]);
  }
  rep.weak_dep_after = weak_dep(corr_after);
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr_after, Eigen::EigenvaluesOnly);
    rep.min_eigen_after = es.eigenvalues().minCoeff();
  }
  return {corr_after, rep};
}

namespace {

// Symmetric factor L with L L^T = sigma (eigen-based; tolerates PSD input).
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  if (es.info() != Eigen::Success) throw numeric_error("psd_factor: eigen solve failed");
  Eigen::VectorXd lam = es.eigenvalues();
  for (int i = 0; i < lam.size(); ++i) lam[i] = std::sqrt(std::max(lam[i], 0.0));
  return es.eigenvectors() * lam.asDiagonal();
}

}  // namespace

ReplicateSummary simulate_fdp(const TestingProblem& problem, const Threshold& thr, long reps,
                              std::uint64_t seed, int workers) {
  problem.validate();
  if (reps < 1) throw std::invalid_argument("simulate_fdp: reps must be >= 1");
  if (problem.n < 2) throw std::invalid_argument("simulate_fdp: n must be >= 2");
  const int p = problem.p();
  const int n = problem.n;
  const double abs_q = std::abs(thr.q);
  const Eigen::MatrixXd factor = psd_factor(problem.sigma);
  const Eigen::VectorXd mean_raw = problem.mu / std::sqrt(static_cast<double>(n));
  std::vector<char> is_null(p);
  for (int j = 0; j < p; ++j) is_null[j] = problem.mu[j] == 0.0;

  ReplicateSummary out;
  out.fdp_values.assign(reps, 0.0);
  out.reps = reps;
  out.seed = seed;

  parallel_blocks(reps, 16, workers, [&](long, long begin, long end) {
    Eigen::MatrixXd g(n, p);
    Eigen::MatrixXd x(n, p);
    for (long r = begin; r < end; ++r) {
      PhiloxStream rng = make_stream(seed, RngPurpose::replicate, 0, static_cast<std::uint32_t>(r));
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) g(i, j) = rng.normal();
      }
      x.noalias() = g * factor.transpose();
      x.rowwise() += mean_raw.transpose();
      long v_count = 0, r_count = 0;
      for (int j = 0; j < p; ++j) {
        const double xbar = x.col(j).mean();
        const double ss = (x.col(j).array() - xbar).square().sum();
        const double sd = std::sqrt(ss / (n - 1));
        const double tstat = std::sqrt(static_cast<double>(n)) * xbar / sd;
        if (std::abs(tstat) > abs_q) {
          ++r_count;
          if (is_null[j]) ++v_count;
        }
      }
      out.fdp_values[r] =
          r_count > 0 ? static_cast<double>(v_count) / static_cast<double>(r_count) : 0.0;
    }
  });

  double s = 0.0;
  for (double f : out.fdp_values) s += f;
  out.mean = s / reps;
  double ss = 0.0;
  for (double f : out.fdp_values) ss += (f - out.mean) * (f - out.mean);
  out.sd = reps > 1 ? std::sqrt(ss / (reps - 1)) : 0.0;
  return out;
}

namespace {

std::string fmt_opt(const std::optional<double>& v) {
  return v ? io::format_double(*v) : std::string();
}

std::string fmt_opt_x100(const std::optional<double>& v) {
  if (!v) return std::string();
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
  return buf;
}

}  // namespace

std::string TableResult::csv() const {
  std::ostringstream os;
  os << "model,p1,t,seed,reps,k_removed,mc_reps,quad_nodes,"
        "empr_mean,asym_mean,empr_sd,asym_mc_sd,asym_ap_sd,"
        "empr_mean_x100,asym_mean_x100,empr_sd_x100,asym_mc_sd_x100,asym_ap_sd_x100,error\n";
  for (const auto& r : rows) {
    os << r.model << ',' << r.p1 << ',' << io::format_double(r.t) << ',' << r.seed << ','
       << r.reps << ',' << r.k_removed << ',' << r.mc_reps << ',' << r.quad_nodes << ','
       << fmt_opt(r.empr_mean) << ','
       << fmt_opt(r.asym_mean) << ',' << fmt_opt(r.empr_sd) << ',' << fmt_opt(r.asym_mc_sd) << ','
       << fmt_opt(r.asym_ap_sd) << ',' << fmt_opt_x100(r.empr_mean) << ','
       << fmt_opt_x100(r.asym_mean) << ',' << fmt_opt_x100(r.empr_sd) << ','
       << fmt_opt_x100(r.asym_mc_sd) << ',' << fmt_opt_x100(r.asym_ap_sd) << ',' << r.error
       << '\n';
  }
  return os.str();
}

std::string TableResult::json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row;
    row["model"] = r.model;
    row["p1"] = r.p1;
    row["t"] = r.t;
    row["seed"] = r.seed;
    row["reps"] = r.reps;
    row["k_removed"] = r.k_removed;
    row["mc_reps"] = r.mc_reps;
    row["quad_nodes"] = r.quad_nodes;
    auto put = [&row](const char* key, const std::optional<double>& v) {
      if (v) {
        row[key] = *v;
      } else {
        row[key] = nullptr;
      }
    };
    put("empr_mean", r.empr_mean);
    put("asym_mean", r.asym_mean);
    put("empr_sd", r.empr_sd);
    put("asym_mc_sd", r.asym_mc_sd);
    put("asym_ap_sd", r.asym_ap_sd);
    row["error"] = r.error;
    arr.push_back(row);
  }
  return arr.dump(2) + "\n";
}

TableResult table_run(const TableConfig& config) {
  if (config.reps < 1) throw config_error("table_run: reps must be >= 1");
  TableResult result;
  for (const auto& model : config.models) {
    for (int p1 : config.p1_values) {
      for (double t : config.thresholds) {
        TableRow row;
        row.model = to_string(model.kind);
        row.p1 = p1;
        row.t = t;
        row.seed = config.seed;
        row.reps = config.reps;
        row.mc_reps = config.engine_mc ? config.mc_reps : 0;
        row.quad_nodes = config.engine_approx ? config.quad.nodes_1d : 0;
        try {
          if (p1 < 0 || p1 > config.p) throw config_error("table_run: p1 out of range");
          const Threshold thr = Threshold::make(t, config.n);
          auto [corr, defl] = build_sigma(model, config.p, config.sigma_draws, config.k_deflate,
                                          config.seed);
          row.k_removed = defl.k_removed;

          TestingProblem problem;
          problem.n = config.n;
          problem.sigma = corr;
          problem.mu = Eigen::VectorXd::Zero(config.p);
          // alternatives randomly located, noncentrality 2|q|
          {
            PhiloxStream rng = make_stream(config.seed, RngPurpose::alt_placement, 0);
            std::vector<int> idx(config.p);
            for (int i = 0; i < config.p; ++i) idx[i] = i;
            for (int i = 0; i < p1; ++i) {
              const int pick = i + static_cast<int>(rng.uniform() * (config.p - i));
              std::swap(idx[i], idx[std::min(pick, config.p - 1)]);
              problem.mu[idx[i]] = 2.0 * std::abs(thr.q);
            }
          }

          const auto empirical = simulate_fdp(problem, thr, config.reps, config.seed,
                                              config.workers);
          row.empr_mean = empirical.mean;
          row.empr_sd = empirical.sd;

          const auto mean_res = moments::asymptotic_mean(problem, thr);
          row.asym_mean = mean_res.mean;

          if (config.engine_approx) {
            pairwise::CovProvider prov(problem, thr, pairwise::CovMethod::quadrature,
                                       config.sparsity_cutoff, config.quad);
            const auto m = moments::fdp_moments(problem, thr, std::ref(prov), config.workers);
            row.asym_ap_sd = m.sd;
          }
          if (config.engine_mc) {
            pairwise::CovProvider prov(problem, thr, pairwise::CovMethod::monte_carlo,
                                       config.sparsity_cutoff, config.quad, config.mc_reps,
                                       config.seed);
            const auto m = moments::fdp_moments(problem, thr, std::ref(prov), config.workers);
            row.asym_mc_sd = m.sd;
          }
        } catch (const std::exception& e) {
          row.error = e.what();
        }
        result.rows.push_back(row);
      }
    }
  }
  return result;
}

}  // namespace fdpu::sim
