#pragma once

#include "ctsftm/martingale.hpp"

namespace ctsftm {

// Model-fit diagnostics reported by the diagnose front-end: martingale
// mean-zero checks, Lemma covariation ratios, and the IPCW weight profile.
struct WeightSummary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double ess = 0.0;  // (sum w)^2 / sum w^2 over uncensored subjects
  int n_uncensored = 0;
  int positivity_violations = 0;
};

struct DiagnosticsReport {
  double martingale_mean = 0.0;
  double martingale_se = 0.0;
  int n_records = 0;
  bool martingale_pass = false;  // |mean| <= 3 SE

  CovariationDiagnostic covariation_unit;       // f = g = 1
  CovariationDiagnostic covariation_modulated;  // f = g = 1 + l1
  bool covariation_pass = false;  // |ratio - 1| <= 3 SE(ratio) on both

  WeightSummary weights;
};

DiagnosticsReport run_diagnostics(const std::vector<SubjectTrajectory>& cohort,
                                  const RefillHazardModel& refill,
                                  const CensoringCoxModel& censoring,
                                  double positivity_floor);

}  // namespace ctsftm
