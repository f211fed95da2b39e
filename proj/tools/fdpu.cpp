// fdpu: asymptotic mean/variance of the false discovery proportion for
// weakly dependent t-tests, with simulation and two-sample pipelines.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fdpu/errors.hpp"
#include "fdpu/estimate.hpp"
#include "fdpu/fdp_moments.hpp"
#include "fdpu/io.hpp"
#include "fdpu/manifest.hpp"
#include "fdpu/pairwise_cov.hpp"
#include "fdpu/parallel.hpp"
#include "fdpu/problem.hpp"
#include "fdpu/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fdpu;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j;
  try {
    j = json::parse(io::read_text_file(path));
  } catch (const json::exception& e) {
    throw config_error("config '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw config_error("config '" + path + "': top level must be an object");
  return j;
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error("config field '" + key + "' has the wrong type");
  }
}

template <class T>
T get_req(const json& j, const std::string& key) {
  if (!j.contains(key)) throw config_error("config field '" + key + "' is required");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error("config field '" + key + "' has the wrong type");
  }
}

struct CommonFlags {
  std::string config_path;
  std::vector<double> thresholds;
  std::string engine;
  long mc_reps = -1;
  int quad_nodes = -1;
  int factors_removed = std::numeric_limits<int>::min();
  double pi0_lambda = -1.0;
  std::string ridge_lambda;
  std::optional<std::uint64_t> seed;
  int workers = -1;
  std::string out_dir;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f, bool with_estimation) {
  cmd->add_option("--config", f.config_path, "JSON config file; flags override config keys");
  cmd->add_option("--threshold", f.thresholds, "rejection threshold t (repeatable)");
  cmd->add_option("--engine", f.engine, "pairwise covariance engine: mc | approx")
      ->check(CLI::IsMember({"mc", "approx"}));
  cmd->add_option("--mc-reps", f.mc_reps, "Monte Carlo replicates per pair");
  cmd->add_option("--quad-nodes", f.quad_nodes, "quadrature nodes per axis");
  cmd->add_option("--seed", f.seed, "root seed");
  cmd->add_option("--workers", f.workers, "worker threads (default: machine, or FDPU_WORKERS)");
  cmd->add_option("--out", f.out_dir, "output directory");
  if (with_estimation) {
    cmd->add_option("--factors-removed", f.factors_removed, "principal factors to remove");
    cmd->add_option("--pi0-lambda", f.pi0_lambda, "Storey lambda");
    cmd->add_option("--ridge-lambda", f.ridge_lambda, "'cv' or a positive value");
  }
}

void apply_overrides(json& cfg, const CommonFlags& f) {
  if (!f.thresholds.empty()) {
    if (f.thresholds.size() == 1) cfg["t"] = f.thresholds[0];
    cfg["thresholds"] = f.thresholds;
  }
  if (!f.engine.empty()) cfg["engine"] = f.engine;
  if (f.mc_reps >= 0) cfg["mc_reps"] = f.mc_reps;
  if (f.quad_nodes >= 0) cfg["quad_nodes"] = f.quad_nodes;
  if (f.factors_removed != std::numeric_limits<int>::min()) {
    cfg["factors_removed"] = f.factors_removed;
  }
  if (f.pi0_lambda >= 0.0) cfg["pi0_lambda"] = f.pi0_lambda;
  if (!f.ridge_lambda.empty()) cfg["ridge_lambda"] = f.ridge_lambda;
  if (f.seed) cfg["seed"] = *f.seed;
  if (f.workers >= 0) cfg["workers"] = f.workers;
  if (!f.out_dir.empty()) cfg["out"] = f.out_dir;
}

fs::path ensure_out_dir(const json& cfg) {
  const std::string out = get_or<std::string>(cfg, "out", "fdpu_out");
  fs::create_directories(out);
  return out;
}

json moments_to_json(const moments::FdpMoments& m) {
  json j;
  j["mean"] = m.mean;
  if (m.xi_bar) {
    j["xi_bar"] = *m.xi_bar;
  } else {
    j["xi_bar"] = nullptr;
  }
  j["v1"] = m.v1;
  j["v2"] = m.v2;
  j["variance"] = m.variance;
  j["sd"] = m.sd;
  j["variance_clamped"] = m.clamped;
  return j;
}

json condition_to_json(const moments::ConditionCheck& c) {
  json j;
  j["lhs"] = c.lhs;
  j["rhs"] = std::isfinite(c.rhs) ? json(c.rhs) : json(nullptr);
  j["ok"] = c.ok ? json(*c.ok) : json(nullptr);
  return j;
}

json diagnostics_to_json(const moments::DiagnosticsReport& d) {
  json j;
  j["weak_dep_measure"] = d.weak_dep_measure;
  j["mu_t"] = d.mu_t ? json(*d.mu_t) : json(nullptr);
  j["c_t_max"] = d.c_t_max ? json(*d.c_t_max) : json(nullptr);
  j["cond5"] = condition_to_json(d.cond5);
  j["cond6"] = condition_to_json(d.cond6);
  j["cond7"] = condition_to_json(d.cond7);
  return j;
}

// ---- moments command -------------------------------------------------------

int run_moments(const json& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = get_req<int>(cfg, "n");
  const double t = get_req<double>(cfg, "t");
  const std::uint64_t seed = get_or<std::uint64_t>(cfg, "seed", 0);
  const std::string engine = get_or<std::string>(cfg, "engine", "approx");
  if (engine != "approx" && engine != "mc") throw config_error("config field 'engine' must be 'approx' or 'mc'");
  const int quad_nodes = get_or<int>(cfg, "quad_nodes", 24);
  const long mc_reps = get_or<long>(cfg, "mc_reps", 10000);
  const double cutoff = get_or<double>(cfg, "sparsity_cutoff", 0.0);
  const int workers = get_or<int>(cfg, "workers", 0);

  Threshold thr;
  try {
    thr = Threshold::make(t, n);
  } catch (const std::invalid_argument& e) {
    throw config_error(std::string("config: ") + e.what());
  }

  // mu: inline array or {p, p1, noncentrality}
  Eigen::VectorXd mu;
  if (!cfg.contains("mu")) throw config_error("config field 'mu' is required");
  const json& jmu = cfg.at("mu");
  if (jmu.is_array()) {
    mu.resize(jmu.size());
    for (std::size_t i = 0; i < jmu.size(); ++i) {
      if (!jmu[i].is_number()) throw config_error("config field 'mu[" + std::to_string(i) + "]' must be a number");
      mu[i] = jmu[i].get<double>();
    }
  } else if (jmu.is_object()) {
    const int p = get_req<int>(jmu, "p");
    const int p1 = get_req<int>(jmu, "p1");
    if (p < 1 || p1 < 0 || p1 > p) throw config_error("config field 'mu': need 0 <= p1 <= p, p >= 1");
    double value;
    if (jmu.contains("noncentrality") && jmu.at("noncentrality").is_string()) {
      const std::string s = jmu.at("noncentrality").get<std::string>();
      if (s != "2q") throw config_error("config field 'mu.noncentrality': unknown keyword '" + s + "'");
      value = 2.0 * std::abs(thr.q);
    } else {
      value = get_req<double>(jmu, "noncentrality");
    }
    mu = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < p1; ++i) mu[i] = value;
  } else {
    throw config_error("config field 'mu' must be an array or an object");
  }

  // sigma: "identity" or a matrix file
  Eigen::MatrixXd sigma;
  const std::string sigma_spec = get_req<std::string>(cfg, "sigma");
  if (sigma_spec == "identity") {
    sigma = Eigen::MatrixXd::Identity(mu.size(), mu.size());
  } else {
    if (!fs::exists(sigma_spec)) throw config_error("sigma file not found: " + sigma_spec);
    sigma = io::read_matrix(sigma_spec);
  }

  TestingProblem problem;
  problem.n = n;
  problem.mu = mu;
  problem.sigma = sigma;
  try {
    problem.validate();
  } catch (const std::invalid_argument& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  if (n < 30) std::fprintf(stderr, "warning: n = %d < 30, the variance CLT is rough\n", n);

  const numerics::QuadSpec quad{quad_nodes, get_or<double>(cfg, "quad_halfwidth", 8.0)};
  const auto method = engine == "mc" ? pairwise::CovMethod::monte_carlo
                                     : pairwise::CovMethod::quadrature;
  pairwise::CovProvider prov(problem, thr, method, cutoff, quad, mc_reps, seed);
  const auto m = moments::fdp_moments(problem, thr, std::ref(prov), workers);
  const auto diag = moments::diagnostics(problem, thr);

  json report;
  report["command"] = "moments";
  report["threshold"] = {{"t", thr.t}, {"n", thr.n}, {"q", thr.q}};
  report["problem"] = {{"p", problem.p()}, {"p0", problem.p0()}, {"p1", problem.p1()}, {"n", n}};
  report["engine"] = engine;
  report["settings"] = {{"quad_nodes", quad.nodes_1d},
                        {"quad_halfwidth", quad.domain_halfwidth},
                        {"mc_reps", mc_reps},
                        {"sparsity_cutoff", cutoff},
                        {"seed", seed}};
  report["moments"] = moments_to_json(m);
  report["diagnostics"] = diagnostics_to_json(diag);

  const fs::path out_dir = ensure_out_dir(cfg);
  const std::string report_path = (out_dir / "moments.json").string();
  io::write_text_file(report_path, report.dump(2) + "\n");

  cli::RunManifest manifest;
  manifest.command = "moments";
  manifest.config_hash = cli::config_hash(cfg);
  manifest.root_seed = seed;
  manifest.timestamp = cli::iso8601_utc_now();
  manifest.outputs = {report_path};
  manifest.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cli::write_manifest((out_dir / "manifest.json").string(), manifest);
  std::printf("moments: mean=%.6f sd=%.6f -> %s\n", m.mean, m.sd, report_path.c_str());
  return 0;
}

// ---- simulate command ------------------------------------------------------

int run_simulate(const json& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  sim::TableConfig tc;
  if (!cfg.contains("models")) throw config_error("config field 'models' is required");
  for (const auto& jm : cfg.at("models")) {
    sim::SimulationModel model;
    if (jm.is_string()) {
      model.kind = sim::model_kind_from_string(jm.get<std::string>());
    } else if (jm.is_object()) {
      model.kind = sim::model_kind_from_string(get_req<std::string>(jm, "kind"));
      model.equal_rho = get_or<double>(jm, "equal_rho", 0.5);
    } else {
      throw config_error("config field 'models' entries must be strings or objects");
    }
    tc.models.push_back(model);
  }
  tc.p = get_or<int>(cfg, "p", 500);
  tc.n = get_or<int>(cfg, "n", 200);
  tc.p1_values = get_or<std::vector<int>>(cfg, "p1", {10});
  tc.thresholds = get_or<std::vector<double>>(cfg, "thresholds", {0.02});
  tc.reps = get_req<long>(cfg, "reps");
  if (tc.reps < 1) throw config_error("config field 'reps' must be >= 1");
  tc.sigma_draws = get_or<int>(cfg, "sigma_draws", 400);
  if (cfg.contains("factors_removed") && cfg.at("factors_removed").is_number()) {
    tc.k_deflate = cfg.at("factors_removed").get<int>();
  } else {
    const std::string fr = get_or<std::string>(cfg, "factors_removed", "auto");
    if (fr != "auto") throw config_error("config field 'factors_removed' must be 'auto' or an integer");
    tc.k_deflate = -1;
  }
  const auto engines = get_or<std::vector<std::string>>(cfg, "engines", {"approx", "mc"});
  tc.engine_mc = false;
  tc.engine_approx = false;
  for (const auto& e : engines) {
    if (e == "mc") {
      tc.engine_mc = true;
    } else if (e == "approx") {
      tc.engine_approx = true;
    } else {
      throw config_error("config field 'engines' entries must be 'mc' or 'approx'");
    }
  }
  if (cfg.contains("engine")) {
    const std::string e = cfg.at("engine").get<std::string>();
    tc.engine_mc = e == "mc";
    tc.engine_approx = e == "approx";
  }
  tc.mc_reps = get_or<long>(cfg, "mc_reps", 10000);
  tc.quad.nodes_1d = get_or<int>(cfg, "quad_nodes", 24);
  tc.quad.domain_halfwidth = get_or<double>(cfg, "quad_halfwidth", 8.0);
  tc.sparsity_cutoff = get_or<double>(cfg, "sparsity_cutoff", 0.0);
  tc.seed = get_or<std::uint64_t>(cfg, "seed", 0);
  tc.workers = get_or<int>(cfg, "workers", 0);

  const auto result = sim::table_run(tc);

  const fs::path out_dir = ensure_out_dir(cfg);
  const std::string csv_path = (out_dir / "table.csv").string();
  const std::string json_path = (out_dir / "table.json").string();
  io::write_text_file(csv_path, result.csv());
  io::write_text_file(json_path, result.json());

  cli::RunManifest manifest;
  manifest.command = "simulate";
  manifest.config_hash = cli::config_hash(cfg);
  manifest.root_seed = tc.seed;
  manifest.timestamp = cli::iso8601_utc_now();
  manifest.outputs = {csv_path, json_path};
  manifest.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cli::write_manifest((out_dir / "manifest.json").string(), manifest);
  std::printf("simulate: %zu rows -> %s\n", result.rows.size(), csv_path.c_str());
  return 0;
}

// ---- two-sample command ----------------------------------------------------

int run_two_sample(const std::string& x_csv, const std::string& y_csv, const json& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!fs::exists(x_csv)) throw config_error("group-1 CSV not found: " + x_csv);
  if (!fs::exists(y_csv)) throw config_error("group-2 CSV not found: " + y_csv);
  const auto X = io::read_csv_matrix(x_csv);
  const auto Y = io::read_csv_matrix(y_csv);

  estimate::TwoSampleOptions opts;
  opts.k_deflate = get_or<int>(cfg, "factors_removed", 2);
  opts.pi0_lambda = get_or<double>(cfg, "pi0_lambda", 0.5);
  const std::string engine = get_or<std::string>(cfg, "engine", "approx");
  if (engine != "approx" && engine != "mc") throw config_error("config field 'engine' must be 'approx' or 'mc'");
  opts.engine = engine == "mc" ? pairwise::CovMethod::monte_carlo
                               : pairwise::CovMethod::quadrature;
  opts.quad.nodes_1d = get_or<int>(cfg, "quad_nodes", 24);
  opts.mc_reps = get_or<long>(cfg, "mc_reps", 10000);
  opts.sparsity_cutoff = get_or<double>(cfg, "sparsity_cutoff", 0.0);
  opts.seed = get_or<std::uint64_t>(cfg, "seed", 0);
  opts.workers = get_or<int>(cfg, "workers", 0);
  const std::string rl = get_or<std::string>(cfg, "ridge_lambda", "cv");
  const std::string corr_method = get_or<std::string>(cfg, "correlation", "ridge");
  if (corr_method == "sample") {
    opts.corr_method = estimate::CorrelationMethod::sample;
  } else if (corr_method == "ridge") {
    opts.corr_method = estimate::CorrelationMethod::ridge;
  } else {
    throw config_error("config field 'correlation' must be 'sample' or 'ridge'");
  }
  if (rl != "cv") {
    char* end = nullptr;
    const double v = std::strtod(rl.c_str(), &end);
    if (end == rl.c_str() || *end != '\0' || !(v > 0.0)) {
      throw config_error("--ridge-lambda must be 'cv' or a positive number");
    }
    opts.ridge.lambda = v;
  }
  std::vector<double> thresholds =
      get_or<std::vector<double>>(cfg, "thresholds", {0.005, 0.02, 0.05});

  json report;
  report["command"] = "two_sample";
  report["inputs"] = {{"x", x_csv}, {"y", y_csv}};
  report["settings"] = {{"factors_removed", opts.k_deflate},
                        {"pi0_lambda", opts.pi0_lambda},
                        {"correlation", corr_method},
                        {"ridge_lambda", rl},
                        {"engine", engine},
                        {"quad_nodes", opts.quad.nodes_1d},
                        {"mc_reps", opts.mc_reps},
                        {"seed", opts.seed}};
  report["covariance_deflation_only"] = true;
  json rows = json::array();
  for (double t : thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw config_error("thresholds must be in (0, 1)");
    opts.t = t;
    const auto res = estimate::two_sample_pipeline(X.values, Y.values, opts);
    json row;
    row["t"] = t;
    row["fdp_mean_x100"] = 100.0 * res.moments.mean;
    row["fdp_sd_x100"] = 100.0 * res.moments.sd;
    row["moments"] = moments_to_json(res.moments);
    row["diagnostics"] = diagnostics_to_json(res.diagnostics);
    row["pi0"] = {{"value", res.pi0.value}, {"method", res.pi0.method}, {"lambda", res.pi0.tuning}};
    row["p1_hat"] = res.mu.p1_hat;
    row["ridge_lambda"] = res.ridge_lambda ? json(*res.ridge_lambda) : json(nullptr);
    row["weak_dep_before_deflation"] = res.weak_dep_before;
    rows.push_back(row);
  }
  report["thresholds"] = rows;

  const fs::path out_dir = ensure_out_dir(cfg);
  const std::string report_path = (out_dir / "two_sample.json").string();
  io::write_text_file(report_path, report.dump(2) + "\n");

  cli::RunManifest manifest;
  manifest.command = "two_sample";
  manifest.config_hash = cli::config_hash(cfg);
  manifest.root_seed = opts.seed;
  manifest.timestamp = cli::iso8601_utc_now();
  manifest.outputs = {report_path};
  manifest.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cli::write_manifest((out_dir / "manifest.json").string(), manifest);
  std::printf("two-sample: %zu thresholds -> %s\n", rows.size(), report_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FDP asymptotic mean/variance for weakly dependent t-tests"};
  app.require_subcommand(1);

  CommonFlags mf, sf, tf;
  auto* cmd_moments = app.add_subcommand("moments", "asymptotic FDP moments for one problem");
  add_common_flags(cmd_moments, mf, false);
  auto* cmd_simulate = app.add_subcommand("simulate", "dependence-model tables");
  add_common_flags(cmd_simulate, sf, false);
  auto* cmd_two_sample = app.add_subcommand("two-sample", "two-sample pipeline on CSV matrices");
  std::string x_csv, y_csv;
  cmd_two_sample->add_option("x_csv", x_csv, "group-1 matrix (rows = samples)")->required();
  cmd_two_sample->add_option("y_csv", y_csv, "group-2 matrix (rows = samples)")->required();
  add_common_flags(cmd_two_sample, tf, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (cmd_moments->parsed()) {
      json cfg = load_config(mf.config_path);
      apply_overrides(cfg, mf);
      if (cfg.contains("thresholds") && !cfg.contains("t")) {
        const auto ts = cfg.at("thresholds").get<std::vector<double>>();
        if (ts.size() != 1) throw config_error("moments takes exactly one threshold");
        cfg["t"] = ts[0];
      }
      return run_moments(cfg);
    }
    if (cmd_simulate->parsed()) {
      json cfg = load_config(sf.config_path);
      apply_overrides(cfg, sf);
      return run_simulate(cfg);
    }
    json cfg = load_config(tf.config_path);
    apply_overrides(cfg, tf);
    return run_two_sample(x_csv, y_csv, cfg);
  } catch (const config_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
