#include "ctsftm/diagnostics.hpp"

#include <cmath>

namespace ctsftm {

DiagnosticsReport run_diagnostics(const std::vector<SubjectTrajectory>& cohort,
                                  const RefillHazardModel& refill,
                                  const CensoringCoxModel& censoring,
                                  double positivity_floor) {
  DiagnosticsReport rep;

  // Per-record martingale totals under the fitted hazard.
  double sum = 0.0, sumsq = 0.0;
  int n_rec = 0;
  for (const auto& s : cohort) {
    const auto inc = martingale_increments(s, refill);
    for (const auto& g : inc.gaps) {
      const double m = 1.0 - g.compensator();
      sum += m;
      sumsq += m * m;
      ++n_rec;
    }
  }
  rep.n_records = n_rec;
  if (n_rec > 1) {
    rep.martingale_mean = sum / n_rec;
    const double var = (sumsq - n_rec * rep.martingale_mean * rep.martingale_mean) /
                       (n_rec - 1);
    rep.martingale_se = std::sqrt(std::max(var, 0.0) / n_rec);
    rep.martingale_pass = std::abs(rep.martingale_mean) <= 3.0 * rep.martingale_se;
  }

  const StepIntegrand unit = [](const IntegrandPoint&) { return 1.0; };
  const StepIntegrand modulated = [](const IntegrandPoint& pt) {
    const double cal = pt.history->bound();
    return 1.0 + pt.history->covariates_at(cal)[0];
  };
  rep.covariation_unit = covariation_diagnostic(unit, unit, cohort, refill);
  rep.covariation_modulated = covariation_diagnostic(modulated, modulated, cohort, refill);
  const auto pass = [](const CovariationDiagnostic& d) {
    return d.ratio_se > 0.0 && std::abs(d.ratio - 1.0) <= 3.0 * d.ratio_se;
  };
  rep.covariation_pass = pass(rep.covariation_unit) && pass(rep.covariation_modulated);

  // IPCW weight profile; violations are counted, not thrown, here.
  double wsum = 0.0, wsumsq = 0.0;
  for (const auto& s : cohort) {
    if (s.event_indicator != 1) continue;
    const double surv = censoring_survival(censoring, s, s.followup_time, 0.0);
    if (surv < positivity_floor) {
      ++rep.weights.positivity_violations;
      continue;
    }
    const double w = 1.0 / surv;
    if (rep.weights.n_uncensored == 0) {
      rep.weights.min = w;
      rep.weights.max = w;
    } else {
      rep.weights.min = std::min(rep.weights.min, w);
      rep.weights.max = std::max(rep.weights.max, w);
    }
    ++rep.weights.n_uncensored;
    wsum += w;
    wsumsq += w * w;
  }
  if (rep.weights.n_uncensored > 0) {
    rep.weights.mean = wsum / rep.weights.n_uncensored;
    rep.weights.ess = wsumsq > 0.0 ? wsum * wsum / wsumsq : 0.0;
  }
  return rep;
}

}  // namespace ctsftm
