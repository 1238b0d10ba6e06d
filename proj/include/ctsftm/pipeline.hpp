#pragma once

#include "ctsftm/estimator.hpp"
#include "ctsftm/simulation.hpp"

namespace ctsftm {

// Wires the three estimation steps for a cohort: (1) refill gap-time hazard,
// (2) censoring Cox model with Breslow baseline, (3) the IPCW-weighted
// g-estimation Newton solve, plus subject-level bootstrap inference.
struct PipelineConfig {
  double coverage_window = 30.0;
  double epsilon = 1e-6;

  // Feature selections by name; empty lists mean "all covariates plus the
  // documented clock/index terms".
  std::vector<std::string> refill_features;
  std::vector<std::string> censor_features;
  std::vector<std::string> outcome_features;
  std::vector<std::string> g_columns;  // effect modifiers, e.g. {"l1"}
  std::vector<double> g_centers;

  RefillFitOptions refill_options;
  CoxFitOptions cox_options;
  EstimatorConfig estimator;  // index choice, tolerances, bootstrap, seed, threads

  std::vector<double> psi2_init;  // convenience: initial psi2 when initial_psi unset
};

struct PipelineResult {
  EstimationResult estimation;
  RefillHazardModel refill;
  CensoringCoxModel censoring;
  double mean_ipcw = 0.0;
  std::vector<std::string> warnings;
};

// Runs Steps 1-3.  Non-convergence of the psi solve is reported through
// EstimationResult::converged rather than an exception, so callers can still
// persist the result; nuisance fits and identifiability failures throw.
PipelineResult run_estimation(const std::vector<SubjectTrajectory>& cohort,
                              const PipelineConfig& cfg);

// The spec'd bootstrap operation: subject-level resampling, full Steps 1-3
// per replicate, deterministic given the seed.
BootstrapSummary bootstrap_variance(const std::vector<SubjectTrajectory>& cohort,
                                    const PipelineConfig& cfg, std::uint64_t seed);

// Builds an estimation configuration whose named nuisance omits a covariate
// the generating truth actively uses (l2): the single-misspecification arms
// of the double-robustness experiments.
enum class MisspecifyTarget { outcome_regression, refill_hazard, censoring };

PipelineConfig misspecify(const ScenarioConfig& truth, const PipelineConfig& base,
                          MisspecifyTarget which);

// Default feature lists for a cohort with m covariates and q baseline
// regressors.
std::vector<std::string> default_refill_features(Eigen::Index m);
std::vector<std::string> default_censor_features(Eigen::Index m);
std::vector<std::string> default_outcome_features(Eigen::Index m, Eigen::Index q);

}  // namespace ctsftm
