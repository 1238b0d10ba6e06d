#include "ctsftm/martingale.hpp"

#include <algorithm>
#include <cmath>

namespace ctsftm {

std::pair<int, int> counting_at_risk(const GapTimeSet& gaps, int k, double u) {
  if (u < 0.0) throw DomainError("gap time must be non-negative");
  if (k < 1 || k > static_cast<int>(gaps.gaps.size()))
    throw DomainError("refill index out of range");
  const double t = gaps.gaps[static_cast<std::size_t>(k - 1)];
  return {u >= t ? 1 : 0, u <= t ? 1 : 0};
}

// Partition [0, T_k] at covariate changes (mapped onto the gap clock) and at
// the baseline cut points, so each piece is a single closed-form cell.
static std::vector<double> gap_partition(const SubjectTrajectory& s,
                                         const RefillHazardModel& m, int k, double gap) {
  const double cal0 = s.dispensations.refill_times[static_cast<std::size_t>(k - 1)] +
                      s.dispensations.coverage_window;
  std::vector<double> pts{0.0, gap};
  for (double c : s.covariates.change_times) {
    const double u = c - cal0;
    if (u > 0.0 && u < gap) pts.push_back(u);
  }
  for (double c : m.cuts)
    if (c > 0.0 && c < gap) pts.push_back(c);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

MartingaleIncrements martingale_increments(const SubjectTrajectory& s,
                                           const RefillHazardModel& m) {
  MartingaleIncrements out;
  const GapTimeSet gaps = gap_times(s.dispensations);
  out.gaps.reserve(gaps.gaps.size());
  for (std::size_t kk = 0; kk < gaps.gaps.size(); ++kk) {
    const int k = static_cast<int>(kk) + 1;
    const double gap = gaps.gaps[kk];
    GapIncrements inc;
    inc.k = k;
    inc.jump_time = gap;
    const auto pts = gap_partition(s, m, k, gap);
    inc.segments.reserve(pts.size() - 1);
    for (std::size_t j = 0; j + 1 < pts.size(); ++j) {
      SegmentMass seg;
      seg.start = pts[j];
      seg.end = pts[j + 1];
      seg.mass = refill_cumulative_hazard(m, k, seg.start, seg.end, s);
      inc.segments.push_back(seg);
    }
    out.gaps.push_back(std::move(inc));
  }
  return out;
}

double stochastic_integral(const SubjectTrajectory& s, const MartingaleIncrements& inc,
                           const StepIntegrand& f) {
  double total = 0.0;
  for (const auto& g : inc.gaps) {
    const double cal0 =
        s.dispensations.refill_times[static_cast<std::size_t>(g.k - 1)] +
        s.dispensations.coverage_window;
    // jump part
    {
      HistoryView view(s, cal0 + g.jump_time);
      IntegrandPoint pt;
      pt.k = g.k;
      pt.gap_start = g.jump_time;
      pt.gap_end = g.jump_time;
      pt.is_jump = true;
      pt.history = &view;
      const double v = f(pt);
      if (!std::isfinite(v)) throw Error("integrand not finite at a jump point");
      total += v;
    }
    // compensator part, summed left to right
    for (const auto& seg : g.segments) {
      HistoryView view(s, cal0 + seg.start);
      IntegrandPoint pt;
      pt.k = g.k;
      pt.gap_start = seg.start;
      pt.gap_end = seg.end;
      pt.is_jump = false;
      pt.history = &view;
      const double v = f(pt);
      if (!std::isfinite(v)) throw Error("integrand not finite on a segment");
      total -= v * seg.mass;
    }
  }
  return total;
}

CovariationDiagnostic covariation_diagnostic(const StepIntegrand& f, const StepIntegrand& g,
                                             const std::vector<SubjectTrajectory>& cohort,
                                             const RefillHazardModel& m) {
  CovariationDiagnostic out;
  const std::size_t n = cohort.size();
  if (n == 0) return out;
  std::vector<double> fi(n), gi(n), qi(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto inc = martingale_increments(cohort[i], m);
    fi[i] = stochastic_integral(cohort[i], inc, f);
    gi[i] = stochastic_integral(cohort[i], inc, g);
    // predictable covariation with the jump factor held at its named constant
    double q = 0.0;
    for (const auto& gp : inc.gaps) {
      const double cal0 =
          cohort[i].dispensations.refill_times[static_cast<std::size_t>(gp.k - 1)] +
          cohort[i].dispensations.coverage_window;
      for (const auto& seg : gp.segments) {
        HistoryView view(cohort[i], cal0 + seg.start);
        IntegrandPoint pt;
        pt.k = gp.k;
        pt.gap_start = seg.start;
        pt.gap_end = seg.end;
        pt.is_jump = false;
        pt.history = &view;
        q += f(pt) * g(pt) * seg.mass * kJumpCorrectionFactor;
      }
    }
    qi[i] = q;
  }
  double fbar = 0.0, gbar = 0.0, qbar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    fbar += fi[i];
    gbar += gi[i];
    qbar += qi[i];
  }
  fbar /= static_cast<double>(n);
  gbar /= static_cast<double>(n);
  qbar /= static_cast<double>(n);
  double cov = 0.0;
  for (std::size_t i = 0; i < n; ++i) cov += (fi[i] - fbar) * (gi[i] - gbar);
  cov /= static_cast<double>(n);

  out.compensator_form = qbar;
  out.empirical_cov = cov;
  out.n = static_cast<int>(n);
  if (qbar != 0.0) {
    out.ratio = cov / qbar;
    // delta-method spread of the ratio across subjects
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double di = (fi[i] - fbar) * (gi[i] - gbar) - out.ratio * qi[i];
      var += di * di;
    }
    var /= static_cast<double>(n) * static_cast<double>(n);
    out.ratio_se = std::sqrt(var) / std::abs(qbar);
  }
  return out;
}

}  // namespace ctsftm
