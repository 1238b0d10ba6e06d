#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ctsftm/features.hpp"

namespace ctsftm {

// ---------------------------------------------------------------------------
// Step 1 nuisance: gap-time refill hazard
//   lambda_k(u | Hbar) = rho_piece(u) * exp(gamma' z(u, Hbar)),
// a proportional-hazards model with piecewise-constant baseline on the gap
// clock, fitted by full maximum likelihood (gaps are fully observed).
// Covariate terms are evaluated at calendar time V_{k-1} + w + u.
// ---------------------------------------------------------------------------

struct RefillHazardModel {
  FeatureSpec features;
  Vector gamma;               // aligned with features
  std::vector<double> cuts;   // baseline cut points, cuts[0] = 0, ascending
  std::vector<double> rates;  // one rate per piece; last piece extends to +inf
  double log_likelihood = 0.0;
  bool converged = false;
  Vector se;                  // asymptotic SEs for (gamma, log rates)
  int n_records = 0;

  double baseline_at(double u) const;
  int piece_index(double u) const;
  void validate() const;
};

struct RefillFitOptions {
  int max_iterations = 100;
  double gradient_tol = 1e-10;
  int baseline_pieces = 5;            // quantile cut points unless cuts given
  std::vector<double> cuts;           // optional explicit cut points (first must be 0)
};

RefillHazardModel fit_refill_hazard(const std::vector<SubjectTrajectory>& cohort,
                                    const FeatureSpec& features,
                                    const RefillFitOptions& opt = {},
                                    std::span<const double> subject_weight = {});

// Pointwise hazard for subject s at gap time u of refill k (1-based); the
// feature map sees history only up to calendar time V_{k-1} + w + u.
double refill_hazard_at(const RefillHazardModel& m, int k, double gap_u,
                        const SubjectTrajectory& s);

// Exact integral of the fitted hazard over gap-clock [a, b] for refill k.
double refill_cumulative_hazard(const RefillHazardModel& m, int k, double a, double b,
                                const SubjectTrajectory& s);

// ---------------------------------------------------------------------------
// Step 2 nuisance: time-dependent Cox model for censoring with Breslow
// baseline.  Each subject is at risk on (V_K, X]; the event is censoring.
// ---------------------------------------------------------------------------

struct CensoringCoxModel {
  FeatureSpec features;
  Vector gamma;
  std::vector<double> jump_times;         // distinct censoring times, ascending
  std::vector<double> baseline_increments;  // Breslow dLambda_0C at each jump
  bool trivial = false;   // no censoring events anywhere: S_C == 1
  bool converged = false;
  double log_partial_likelihood = 0.0;
  Vector se;
  int n_events = 0;
};

struct CoxFitOptions {
  int max_iterations = 100;
  double score_tol = 1e-8;
};

CensoringCoxModel fit_censoring_cox(const std::vector<SubjectTrajectory>& cohort,
                                    const FeatureSpec& features,
                                    const CoxFitOptions& opt = {},
                                    std::span<const double> subject_weight = {});

// Product-limit survival of censoring for subject s at calendar time u:
//   prod_{V_K < t_l <= u} [1 - dLambda_0C(t_l) exp(gamma' g_C(t_l, Hbar))].
// Returns 1 for u <= V_K.  A factor outside [0, 1] or a value below the
// positivity floor raises an error naming the subject.
double censoring_survival(const CensoringCoxModel& m, const SubjectTrajectory& s, double u,
                          double positivity_floor);

}  // namespace ctsftm
