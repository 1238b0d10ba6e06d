#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "ctsftm/errors.hpp"

namespace ctsftm {

using Vector = Eigen::VectorXd;

// Cadlag step function of calendar time carrying the covariate vector L_u.
// Values change at change_times and hold until the next change (evaluation is
// continuous from the right with limits from the left).
struct CovariateProcess {
  std::vector<double> change_times;  // starts at 0, strictly increasing, days
  std::vector<Vector> values;        // one vector per change time

  Eigen::Index dim() const { return values.empty() ? 0 : values.front().size(); }
  void validate() const;
};

// Right-continuous lookup: value at the largest change time <= u.
const Vector& covariate_at(const CovariateProcess& c, double u);

// Normalized refill schedule V_0 = 0 < V_1 < ... < V_K with the overlap rule
// applied, so V_k - V_{k-1} >= w for every k >= 1.
struct DispensationRecord {
  std::vector<double> refill_times;  // V_0 .. V_K, days
  double coverage_window = 0.0;      // w, days
  double epsilon = 1e-6;             // gap-clock origin shift, days

  int refill_count() const { return static_cast<int>(refill_times.size()) - 1; }  // K
  void validate() const;
};

// Applies the overlap rule V_k := max(V_k, V_{k-1} + w) left to right.
// Requires at least two times (K >= 1), first exactly 0, strictly increasing.
DispensationRecord normalize_dispensations(std::vector<double> raw_refills, double w,
                                           double epsilon = 1e-6);

// Gap times T_k = V_k - (V_{k-1} + w - epsilon), k = 1..K; strictly positive
// after normalization.
struct GapTimeSet {
  std::vector<double> gaps;
};

GapTimeSet gap_times(const DispensationRecord& d);

// One subject's observed data: follow-up X = min(tau, C), event indicator
// Delta, the baseline regressors X_0, and the two continuous-time processes.
struct SubjectTrajectory {
  std::string id;
  double followup_time = 0.0;  // X, days
  int event_indicator = 0;     // Delta
  Vector baseline_covariates;  // X_0
  CovariateProcess covariates;
  DispensationRecord dispensations;

  double last_refill_time() const { return dispensations.refill_times.back(); }
  void validate() const;
};

// Coverage intervals are closed-left/open-right [V_k, V_k + w); the window of
// the final refill is truncated at the follow-up time.  A path-level variant
// (no follow-up cap) is exposed for the generative inverse map.
int treatment_indicator(const SubjectTrajectory& s, double u);
int treatment_on_path(const DispensationRecord& d, double u);
// Left limit A_{u-}: treatment status immediately before u.
int treatment_before(const DispensationRecord& d, double u);

// Treatment switch times (window opens/closes) in (0, horizon), ascending.
std::vector<double> treatment_switch_times(const DispensationRecord& d, double horizon);

}  // namespace ctsftm
