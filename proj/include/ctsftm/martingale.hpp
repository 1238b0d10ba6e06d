#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "ctsftm/hazard_models.hpp"

namespace ctsftm {

// Discrete-jump correction {1 - Delta int lambda du} appearing in the
// covariation formula and the optimal index.  Every hazard implemented here
// is absolutely continuous, so the compensator has no jump and the factor is
// identically one; a discrete-hazard extension would restore it.
inline constexpr double kJumpCorrectionFactor = 1.0;

// Counting and at-risk processes on the gap clock of refill k (1-based):
// N = 1{u >= T_k}, Y = 1{u <= T_k}.
std::pair<int, int> counting_at_risk(const GapTimeSet& gaps, int k, double u);

// dM-hat for one (subject, k): a +1 atom at the gap time T_k and exact
// per-segment compensator masses int lambda-hat Y du on a partition of
// [0, T_k] refined at covariate changes and baseline cut points.
struct SegmentMass {
  double start = 0.0;
  double end = 0.0;
  double mass = 0.0;
};

struct GapIncrements {
  int k = 0;
  double jump_time = 0.0;
  std::vector<SegmentMass> segments;

  double compensator() const {
    double total = 0.0;
    for (const auto& seg : segments) total += seg.mass;
    return total;
  }
};

struct MartingaleIncrements {
  std::vector<GapIncrements> gaps;

  // M-hat(inf) = K - sum of compensator masses
  double total() const {
    double m = 0.0;
    for (const auto& g : gaps) m += 1.0 - g.compensator();
    return m;
  }
};

MartingaleIncrements martingale_increments(const SubjectTrajectory& s,
                                           const RefillHazardModel& m);

// A point where a predictable step integrand is evaluated.  The history view
// is bounded at the segment's left endpoint (the jump uses the jump time), so
// peeking at later data throws LeakageError.
struct IntegrandPoint {
  int k = 0;
  double gap_start = 0.0;
  double gap_end = 0.0;
  bool is_jump = false;
  const HistoryView* history = nullptr;
};

using StepIntegrand = std::function<double(const IntegrandPoint&)>;

// sum_k [ f(T_k) - sum_segments f(seg) * mass(seg) ]; exact, no quadrature.
// Requires f piecewise constant on the increment partition.
double stochastic_integral(const SubjectTrajectory& s, const MartingaleIncrements& inc,
                           const StepIntegrand& f);

// Lemma-based diagnostic: the covariation of int f dM and int g dM estimated
// two ways.  With a correctly specified hazard the ratio tends to one.
struct CovariationDiagnostic {
  double compensator_form = 0.0;  // mean over subjects of sum_k int f g Y lambda du
  double empirical_cov = 0.0;     // empirical covariance of the two integrals
  double ratio = 0.0;
  double ratio_se = 0.0;
  int n = 0;
};

CovariationDiagnostic covariation_diagnostic(const StepIntegrand& f, const StepIntegrand& g,
                                             const std::vector<SubjectTrajectory>& cohort,
                                             const RefillHazardModel& m);

}  // namespace ctsftm
