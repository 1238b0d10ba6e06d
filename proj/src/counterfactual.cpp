#include "ctsftm/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ctsftm {

Vector PsiVector::as_vector() const {
  Vector v(dim());
  v[0] = psi1;
  if (psi2.size() > 0) v.tail(psi2.size()) = psi2;
  return v;
}

PsiVector PsiVector::from_vector(const Vector& v) {
  PsiVector p;
  p.psi1 = v[0];
  if (v.size() > 1) p.psi2 = v.tail(v.size() - 1);
  return p;
}

void EffectModifierMap::validate(Eigen::Index covariate_dim) const {
  for (int c : columns) {
    if (c < 0 || c >= covariate_dim)
      throw ValidationError("effect modifier column index out of range");
  }
  if (centers.size() > 0 && centers.size() != static_cast<Eigen::Index>(columns.size()))
    throw ValidationError("effect modifier centers must match selected columns");
}

std::vector<ExposureSegment> exposure_segments(const CovariateProcess& covariates,
                                               const DispensationRecord& dispensations,
                                               double horizon) {
  std::vector<double> cuts;
  cuts.push_back(0.0);
  for (double t : covariates.change_times)
    if (t > 0.0 && t < horizon) cuts.push_back(t);
  for (double t : treatment_switch_times(dispensations, horizon)) cuts.push_back(t);
  cuts.push_back(horizon);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<ExposureSegment> segs;
  segs.reserve(cuts.size());
  std::size_t cov_idx = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    ExposureSegment seg;
    seg.start = cuts[i];
    seg.end = cuts[i + 1];
    while (cov_idx + 1 < covariates.change_times.size() &&
           covariates.change_times[cov_idx + 1] <= seg.start)
      ++cov_idx;
    seg.covariate_index = static_cast<int>(cov_idx);
    seg.treated = treatment_on_path(dispensations, seg.start) != 0;
    segs.push_back(seg);
  }
  return segs;
}

namespace {

double segment_exponent(const PsiVector& psi, const EffectModifierMap& g, const Vector& l,
                        double where) {
  const double theta = psi.psi1 + (psi.psi2.size() > 0 ? g.dot(psi.psi2, l) : 0.0);
  if (!(std::abs(theta) <= kMaxExponent)) {
    std::ostringstream msg;
    msg << "exponent " << theta << " exceeds clamp " << kMaxExponent
        << " on treated segment starting at t=" << where;
    throw OverflowError(msg.str());
  }
  return theta;
}

}  // namespace

double mimicking_time(const SubjectTrajectory& s, const PsiVector& psi,
                      const EffectModifierMap& g, double horizon) {
  if (horizon < 0.0 || horizon > s.followup_time)
    throw DomainError("mimicking_time horizon outside [0, followup]");
  g.validate(s.covariates.dim());
  double extra = 0.0;
  for (const auto& seg : exposure_segments(s.covariates, s.dispensations, horizon)) {
    if (!seg.treated) continue;
    const Vector& l = s.covariates.values[static_cast<std::size_t>(seg.covariate_index)];
    const double theta = segment_exponent(psi, g, l, seg.start);
    extra += (seg.end - seg.start) * std::expm1(theta);
  }
  return horizon + extra;
}

Vector mimicking_gradient(const SubjectTrajectory& s, const PsiVector& psi,
                          const EffectModifierMap& g, double horizon) {
  if (horizon < 0.0 || horizon > s.followup_time)
    throw DomainError("mimicking_gradient horizon outside [0, followup]");
  g.validate(s.covariates.dim());
  Vector grad = Vector::Zero(psi.dim());
  std::vector<double> gval(static_cast<std::size_t>(g.dim()));
  for (const auto& seg : exposure_segments(s.covariates, s.dispensations, horizon)) {
    if (!seg.treated) continue;
    const Vector& l = s.covariates.values[static_cast<std::size_t>(seg.covariate_index)];
    const double theta = segment_exponent(psi, g, l, seg.start);
    const double coef = (seg.end - seg.start) * std::exp(theta);
    grad[0] += coef;
    if (g.dim() > 0) {
      g.fill(l, gval.data());
      for (Eigen::Index j = 0; j < g.dim(); ++j)
        grad[1 + j] += coef * gval[static_cast<std::size_t>(j)];
    }
  }
  return grad;
}

double invert_mimicking(double u_value, const TreatmentCovariatePath& path,
                        const PsiVector& psi, const EffectModifierMap& g) {
  if (!(u_value > 0.0)) throw DomainError("invert_mimicking requires a positive target");
  g.validate(path.covariates.dim());

  // Walk the path segments keeping U(t) = t + extra.  The final refill window
  // closes at V_K + w; beyond it treatment is off and the covariates hold
  // their last value, so the tail rate is one.
  const double tail =
      path.dispensations.refill_times.back() + path.dispensations.coverage_window;
  double last_cut = std::max(tail, path.covariates.change_times.back()) + 1.0;

  double t = 0.0;
  double extra = 0.0;
  while (true) {
    const double u_at_t = t + extra;
    // Locate the end of the current constant segment.
    double seg_end = last_cut;
    for (double c : path.covariates.change_times)
      if (c > t && c < seg_end) seg_end = c;
    for (double c : treatment_switch_times(path.dispensations, last_cut))
      if (c > t && c < seg_end) seg_end = c;

    const bool treated = treatment_on_path(path.dispensations, t) != 0;
    double rate = 1.0;
    double em1 = 0.0;
    if (treated) {
      const Vector& l = covariate_at(path.covariates, t);
      const double theta = segment_exponent(psi, g, l, t);
      em1 = std::expm1(theta);
      rate = 1.0 + em1;
    }
    const double u_at_end = seg_end + (extra + (seg_end - t) * em1);
    if (u_value <= u_at_end || t >= last_cut) {
      if (rate == 1.0) return u_value - extra;  // exact when psi contributes nothing
      return t + (u_value - u_at_t) / rate;
    }
    extra += (seg_end - t) * em1;
    t = seg_end;
  }
}

}  // namespace ctsftm
