#pragma once

#include <cstdint>
#include <limits>

#include "ctsftm/counterfactual.hpp"

namespace ctsftm {

// Generative scenario with a known true psi*.  Subjects carry two covariates:
// l1 is a binary telegraph process, l2 a clamped AR(1) step process, both
// updated at exponential intervals; X_0 is the time-0 covariate value.  The
// latent baseline failure time U is exponential (or Weibull) with conditional
// mean u_mean * (1 + u_mean_coef . X_0), which ties U to the baseline state
// and makes the time-0 covariates genuine confounders while keeping the
// Step-3 regression exactly linear.  Refill gaps and censoring are drawn from
// log-linear hazards in the current covariates, censoring only after the last
// kept refill.  The observed failure time solves the counterfactual identity,
// i.e. tau = invert_mimicking(U, path, psi*).
struct ScenarioConfig {
  int n = 1000;
  double psi1 = 0.0;
  Vector psi2;                 // empty for p = 1
  std::vector<int> g_columns;  // effect-modifier columns, matches psi2

  double coverage_window = 30.0;
  double epsilon = 1e-6;

  double u_mean = 180.0;      // days
  double weibull_shape = 1.0; // 1 = exponential
  Vector u_mean_coef;         // confounding tilt on X_0; empty = none

  double cov_update_rate = 0.05;  // events/day
  double l1_init_p = 0.4;
  double l1_flip_p = 0.3;
  double l2_ar_mu = 0.0;
  double l2_ar_phi = 0.7;
  double l2_ar_sigma = 0.4;
  double l2_clamp = 1.5;

  double refill_rate = 0.15;  // events/day on the gap clock
  Vector refill_gamma;        // on (l1, l2); empty = none
  bool force_gap_epsilon = false;  // back-to-back refills: treatment always on

  double censor_rate = 0.008;  // events/day on (V_K, inf)
  Vector censor_gamma;         // on (l1, l2); empty = none

  std::uint64_t seed = 0;
  int max_subject_retries = 100;
  int threads = 1;

  void validate() const;
  PsiVector psi_star() const;
  EffectModifierMap effect_modifiers() const;
};

struct SubjectTruth {
  double u_latent = 0.0;
  double tau = 0.0;
  double censor_time = std::numeric_limits<double>::infinity();
  double sc_at_tau = 1.0;  // true censoring survival at tau given the path
  int attempts = 1;
};

struct SimulatedCohort {
  std::vector<SubjectTrajectory> subjects;
  std::vector<SubjectTruth> truth;
};

// Deterministic given (seed, subject index); subjects whose failure precedes
// the first refill (K = 0) are resampled up to max_subject_retries.
SimulatedCohort simulate_cohort(const ScenarioConfig& cfg);

}  // namespace ctsftm
