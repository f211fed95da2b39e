#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fdpu/numerics.hpp"
#include "fdpu/problem.hpp"
#include "fdpu/rng.hpp"

namespace fdpu::sim {

enum class ModelKind {
  equal_correlation,
  fan_song,
  independent_cauchy,
  three_factor,
  two_factor,
  nonlinear_factor,
};

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct SimulationModel {
  ModelKind kind = ModelKind::equal_correlation;
  double equal_rho = 0.5;  // off-diagonal for equal_correlation
  void validate() const;
};

// A model instance pins the population: factor loadings are drawn once and
// held fixed across draws.
struct ModelInstance {
  SimulationModel model;
  int p = 0;
  Eigen::MatrixXd loadings;  // p x n_factors for the factor models, else empty
};

ModelInstance instantiate(const SimulationModel& model, int p, PhiloxStream& rng);

// One draw of the model's Z vector.
Eigen::VectorXd generate_model_z(const ModelInstance& inst, PhiloxStream& rng);

struct DeflationReport {
  int k_removed = 0;
  std::vector<double> removed_eigenvalues;  // descending
  double weak_dep_before = 0.0;
  double weak_dep_after = 0.0;
  double min_eigen_after = 0.0;
};

// Removes the top-k eigenpairs: sigma - sum lambda_i v_i v_i^T.
Eigen::MatrixXd pfa_deflate(const Eigen::MatrixXd& sigma, int k);

// Sample covariance of m model draws, deflated and normalized to a
// correlation matrix. k_deflate < 0 selects the smallest k <= 10 with
// weak-dependence measure <= 0.05 (falling back to k = 10).
std::pair<Eigen::MatrixXd, DeflationReport> build_sigma(const SimulationModel& model, int p,
                                                        int m, int k_deflate,
                                                        std::uint64_t seed);

struct ReplicateSummary {
  std::vector<double> fdp_values;
  double mean = 0.0;
  double sd = 0.0;
  long reps = 0;
  std::uint64_t seed = 0;
};

// Draws n observations per replicate from N(mu/sqrt(n), sigma), forms the
// one-sample t statistics and the FDP at the threshold. FDP is 0 when R = 0.
ReplicateSummary simulate_fdp(const TestingProblem& problem, const Threshold& thr, long reps,
                              std::uint64_t seed, int workers = 1);

struct TableConfig {
  std::vector<SimulationModel> models;
  int p = 500;
  int n = 200;
  std::vector<int> p1_values;
  std::vector<double> thresholds;
  long reps = 1000;
  int sigma_draws = 400;
  int k_deflate = -1;  // auto rule
  bool engine_mc = true;
  bool engine_approx = true;
  long mc_reps = 10000;
  numerics::QuadSpec quad;
  double sparsity_cutoff = 0.0;
  std::uint64_t seed = 0;
  int workers = 0;
};

struct TableRow {
  std::string model;
  int p1 = 0;
  double t = 0.0;
  std::uint64_t seed = 0;
  long reps = 0;
  int k_removed = 0;
  long mc_reps = 0;
  int quad_nodes = 0;
  std::optional<double> empr_mean, asym_mean, empr_sd, asym_mc_sd, asym_ap_sd;
  std::string error;  // empty on success
};

struct TableResult {
  std::vector<TableRow> rows;
  std::string csv() const;
  std::string json() const;
};

TableResult table_run(const TableConfig& config);

}  // namespace fdpu::sim
