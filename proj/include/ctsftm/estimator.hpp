#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "ctsftm/counterfactual.hpp"
#include "ctsftm/martingale.hpp"

namespace ctsftm {

// ---------------------------------------------------------------------------
// Step 3 regressions.  Both are IPCW-weighted linear least squares on the
// risk-set rows (one row per increment segment, features evaluated at the
// segment midpoint): the outcome regression models E{U(psi) | Hbar, T_k >= u}
// and the gradient regression models E{dU/dpsi | Hbar, T_k >= u}, which the
// optimal index evaluates at jump points.  Rows are weighted by
// IPCW_i / R_i where R_i is the subject's row count, so every subject carries
// equal total weight and an intercept-only fit is the IPCW-weighted mean.
// Feature names follow the hazard models: x0_<j>, l<j>, gap_u ("u" accepted
// as an alias for the risk-set clock), k; an intercept is always prepended.
// ---------------------------------------------------------------------------

struct OutcomeRegressionModel {
  FeatureSpec features;
  Vector xi;                        // intercept first, then feature terms
  double residual_variance = 0.0;   // pooled homoscedastic, IPCW-weighted
  Vector fitted_at;                 // the psi this fit used (U depends on it)
};

struct GradientRegressionModel {
  FeatureSpec features;
  Eigen::MatrixXd coef;  // (1 + q) x p, intercept row first
  Vector fitted_at;
};

// Linear predictor xi' (1, features) at risk point (s, k, u).
double conditional_mean_U(const OutcomeRegressionModel& orm, const SubjectTrajectory& s,
                          int k, double u);

struct EstimatorConfig {
  enum class IndexChoice { simple, optimal };
  IndexChoice index_choice = IndexChoice::simple;

  EffectModifierMap effect_modifiers;  // fixes dim(psi2) and c_simple = (1, g')'
  FeatureSpec outcome_features;        // Step-3 regression terms
  double c_scale = 1.0;                // positive rescaling of c_simple

  double newton_tol = 1e-8;   // on the norm of the mean estimating equation
  int max_iterations = 100;
  int step_halving_limit = 20;
  double variance_floor = 1e-8;
  int bootstrap_replicates = 200;  // 0 disables; otherwise must be >= 50
  double positivity_floor = 0.05;
  std::optional<Vector> initial_psi;  // defaults to zero

  std::uint64_t seed = 0;
  int threads = 1;

  Eigen::Index psi_dim() const { return 1 + effect_modifiers.dim(); }
};

// IPCW weight Delta_i / S_C-hat(tau_i | Hbar); zero for censored subjects.
double ipcw_weight(const SubjectTrajectory& s, const CensoringCoxModel& cm,
                   double positivity_floor);

// Optimal index c_opt = [jump factor]^{-1} Var^{-1} E{dU/dpsi | Hbar, T_k = u},
// realized as the gradient regression evaluated at the point over the floored
// pooled residual variance.
Vector c_opt(const GradientRegressionModel& gm, double residual_variance,
             double variance_floor, const SubjectTrajectory& s, int k, double u);

// Bundle used by the reference estimating function.
struct NuisanceSet {
  RefillHazardModel refill;
  CensoringCoxModel censoring;
  OutcomeRegressionModel outcome;
  std::optional<GradientRegressionModel> gradient;  // required for the optimal index
};

// Per-subject estimating function
//   (Delta/S_C) sum_k int c(Hbar) [U(psi) - E{U(psi)|Hbar, T_k>=u}] dM-hat_k(u)
// evaluated through the increment partition; censored subjects return zero.
Vector estimating_function(const PsiVector& psi, const SubjectTrajectory& s,
                           const NuisanceSet& nuis, const EstimatorConfig& cfg);

struct EstimationResult {
  PsiVector psi_hat;
  double ee_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  Vector bootstrap_se;
  std::vector<std::array<double, 2>> bootstrap_ci;
  int bootstrap_failures = 0;
  int bootstrap_replicates = 0;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Estimation engine: precomputes the row geometry (increment partitions,
// regression features, treated-segment exposure) once per cohort, then lets
// nuisance parameter values and subject multiplicities be rebound cheaply.
// The bootstrap reuses one engine across replicates; baseline cut points and
// feature specs are fixed by the models bound first.
// ---------------------------------------------------------------------------

struct SolveOutcome {
  Vector psi;
  double ee_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // ee norm per iterate
};

class EstimationEngine {
 public:
  EstimationEngine(const std::vector<SubjectTrajectory>& cohort, const EstimatorConfig& cfg,
                   const RefillHazardModel& refill, const CensoringCoxModel& censoring);
  ~EstimationEngine();
  EstimationEngine(EstimationEngine&&) noexcept;

  // Recompute compensator masses and IPCW weights for new parameter values /
  // multiplicities.  The models must share the feature specs and cuts of the
  // ones the engine was built with.
  void bind(const RefillHazardModel& refill, const CensoringCoxModel& censoring,
            std::span<const double> multiplicity = {});

  // Mean estimating equation at psi; refits the Step-3 regressions first.
  Vector ee_mean(const Vector& psi);
  // Per-subject estimating function at the last psi passed to ee_mean.
  Vector ee_subject(std::size_t subject) const;

  SolveOutcome solve(const Vector& initial);

  OutcomeRegressionModel outcome_model() const;
  std::optional<GradientRegressionModel> gradient_model() const;
  double total_ipcw_weight() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Fits Step-3 regressions standalone (reference implementations used by the
// public ops and tests; the engine fuses the same arithmetic).
OutcomeRegressionModel fit_outcome_regression(const std::vector<SubjectTrajectory>& cohort,
                                              const PsiVector& psi,
                                              const RefillHazardModel& refill,
                                              const CensoringCoxModel& censoring,
                                              const EstimatorConfig& cfg,
                                              std::span<const double> multiplicity = {});
GradientRegressionModel fit_gradient_regression(const std::vector<SubjectTrajectory>& cohort,
                                                const PsiVector& psi,
                                                const RefillHazardModel& refill,
                                                const CensoringCoxModel& censoring,
                                                const EstimatorConfig& cfg,
                                                std::span<const double> multiplicity = {});

// Newton-Raphson root of the mean estimating equation.  Throws
// ConvergenceError after max_iterations and NonIdentifiabilityError when the
// finite-difference Jacobian is singular.
EstimationResult solve_psi(const std::vector<SubjectTrajectory>& cohort,
                           const RefillHazardModel& refill,
                           const CensoringCoxModel& censoring, const EstimatorConfig& cfg);

// Percentile bootstrap summary from a draw matrix (one row per replicate).
struct BootstrapSummary {
  Vector se;
  std::vector<std::array<double, 2>> ci;
  int failures = 0;
  int replicates = 0;
};

BootstrapSummary bootstrap_from_draws(const Eigen::MatrixXd& draws, double level = 0.95);

}  // namespace ctsftm
