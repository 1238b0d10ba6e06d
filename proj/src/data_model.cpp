#include "ctsftm/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ctsftm {

void CovariateProcess::validate() const {
  if (change_times.empty())
    throw ValidationError("covariate process has no change times");
  if (change_times.front() != 0.0)
    throw ValidationError("covariate process must start at time 0");
  if (change_times.size() != values.size())
    throw ValidationError("covariate change times and values differ in length");
  for (std::size_t i = 1; i < change_times.size(); ++i) {
    if (!(change_times[i] > change_times[i - 1]))
      throw ValidationError("covariate change times must be strictly increasing");
  }
  const Eigen::Index d = dim();
  for (const auto& v : values) {
    if (v.size() != d)
      throw ValidationError("covariate vectors must share one dimension");
    if (!v.allFinite()) throw ValidationError("covariate value not finite");
  }
}

const Vector& covariate_at(const CovariateProcess& c, double u) {
  if (u < 0.0) throw DomainError("covariate lookup before time 0");
  // index of the largest change time <= u
  auto it = std::upper_bound(c.change_times.begin(), c.change_times.end(), u);
  const std::size_t idx = static_cast<std::size_t>(it - c.change_times.begin()) - 1;
  return c.values[idx];
}

void DispensationRecord::validate() const {
  if (coverage_window <= 0.0) throw ValidationError("coverage window must be positive");
  if (!(epsilon > 0.0) || !(epsilon < coverage_window))
    throw ValidationError("epsilon must satisfy 0 < epsilon < coverage window");
  if (refill_times.size() < 2)
    throw ValidationError("subject needs at least one refill after baseline (K >= 1)");
  if (refill_times.front() != 0.0)
    throw ValidationError("first dispensation must be at time 0");
  for (std::size_t k = 1; k < refill_times.size(); ++k) {
    if (!(refill_times[k] - refill_times[k - 1] >= coverage_window))
      throw ValidationError("refill spacing below coverage window; record not normalized");
  }
}

DispensationRecord normalize_dispensations(std::vector<double> raw_refills, double w,
                                           double epsilon) {
  if (w <= 0.0) throw ValidationError("coverage window must be positive");
  if (!(epsilon > 0.0) || !(epsilon < w))
    throw ValidationError("epsilon must satisfy 0 < epsilon < coverage window");
  if (raw_refills.size() < 2)
    throw ValidationError("subject needs at least one refill after baseline (K >= 1)");
  if (raw_refills.front() != 0.0)
    throw ValidationError("first dispensation must be at time 0");
  for (std::size_t k = 1; k < raw_refills.size(); ++k) {
    if (!(raw_refills[k] > raw_refills[k - 1]))
      throw ValidationError("refill times must be strictly increasing");
  }
  for (std::size_t k = 1; k < raw_refills.size(); ++k) {
    raw_refills[k] = std::max(raw_refills[k], raw_refills[k - 1] + w);
  }
  DispensationRecord d;
  d.refill_times = std::move(raw_refills);
  d.coverage_window = w;
  d.epsilon = epsilon;
  d.validate();
  return d;
}

GapTimeSet gap_times(const DispensationRecord& d) {
  GapTimeSet out;
  out.gaps.reserve(d.refill_times.size() - 1);
  for (std::size_t k = 1; k < d.refill_times.size(); ++k) {
    // T_k = V_k - (V_{k-1} + w - eps); grouped so a back-to-back refill gives
    // exactly eps rather than eps plus rounding noise.
    out.gaps.push_back((d.refill_times[k] - d.refill_times[k - 1] - d.coverage_window) +
                       d.epsilon);
  }
  return out;
}

void SubjectTrajectory::validate() const {
  covariates.validate();
  dispensations.validate();
  if (!(followup_time > dispensations.refill_times.back())) {
    std::ostringstream msg;
    msg << "subject " << id << ": follow-up time " << followup_time
        << " does not exceed the last refill " << dispensations.refill_times.back();
    throw ValidationError(msg.str());
  }
  if (covariates.change_times.back() > followup_time) {
    std::ostringstream msg;
    msg << "subject " << id << ": covariate change after follow-up time";
    throw ValidationError(msg.str());
  }
  if (!baseline_covariates.allFinite())
    throw ValidationError("subject " + id + ": baseline covariates not finite");
  if (event_indicator != 0 && event_indicator != 1)
    throw ValidationError("subject " + id + ": event indicator must be 0 or 1");
}

int treatment_on_path(const DispensationRecord& d, double u) {
  const auto& v = d.refill_times;
  auto it = std::upper_bound(v.begin(), v.end(), u);
  if (it == v.begin()) return 0;  // u < V_0 = 0
  const double last_refill = *(it - 1);
  return u < last_refill + d.coverage_window ? 1 : 0;
}

int treatment_before(const DispensationRecord& d, double u) {
  const auto& v = d.refill_times;
  // A_{u-}: on iff some window [V_k, V_k + w) contains times arbitrarily close
  // below u, i.e. V_k < u <= V_k + w for the last refill V_k < u.
  auto it = std::lower_bound(v.begin(), v.end(), u);
  if (it == v.begin()) return 0;
  const double last_refill = *(it - 1);
  return u <= last_refill + d.coverage_window ? 1 : 0;
}

int treatment_indicator(const SubjectTrajectory& s, double u) {
  if (u < 0.0 || u > s.followup_time)
    throw DomainError("treatment indicator queried outside [0, followup]");
  if (u == s.followup_time) return 0;  // half-open final window [V_K, min(V_K+w, X))
  return treatment_on_path(s.dispensations, u);
}

std::vector<double> treatment_switch_times(const DispensationRecord& d, double horizon) {
  std::vector<double> out;
  for (std::size_t k = 0; k < d.refill_times.size(); ++k) {
    const double open = d.refill_times[k];
    const double close = open + d.coverage_window;
    if (open > 0.0 && open < horizon) out.push_back(open);
    if (close > 0.0 && close < horizon) out.push_back(close);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace ctsftm
