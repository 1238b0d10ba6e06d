#pragma once

#include <vector>

#include "ctsftm/counterfactual.hpp"
#include "ctsftm/rng.hpp"

namespace ctsftm::testing {

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Builds a valid trajectory from raw pieces; covariates default to a single
// constant vector at time zero.
inline SubjectTrajectory make_subject(std::vector<double> refills, double w, double followup,
                                      int delta = 1,
                                      std::vector<std::pair<double, Vector>> covs = {},
                                      Vector baseline = Vector(),
                                      double epsilon = 1e-6) {
  SubjectTrajectory s;
  s.id = "t";
  s.followup_time = followup;
  s.event_indicator = delta;
  s.dispensations = normalize_dispensations(std::move(refills), w, epsilon);
  if (covs.empty()) covs.push_back({0.0, vec({0.0})});
  for (auto& [t, v] : covs) {
    s.covariates.change_times.push_back(t);
    s.covariates.values.push_back(v);
  }
  s.baseline_covariates = baseline.size() > 0 ? baseline : vec({0.0});
  s.validate();
  return s;
}

// Random piecewise path + psi draw for property tests.
struct RandomCase {
  SubjectTrajectory subject;
  PsiVector psi;
  EffectModifierMap g;
};

inline RandomCase random_case(Rng& rng, bool with_modifier = true) {
  RandomCase rc;
  const double w = 5.0 + 20.0 * rng.uniform();
  const int n_refills = 1 + static_cast<int>(rng.below(5));
  std::vector<double> refills{0.0};
  for (int k = 0; k < n_refills; ++k)
    refills.push_back(refills.back() + w + rng.exponential(0.2));
  const double followup = refills.back() + 0.5 + rng.exponential(0.05);

  std::vector<std::pair<double, Vector>> covs;
  covs.push_back({0.0, vec({rng.normal(), rng.uniform()})});
  double t = 0.0;
  while (true) {
    t += rng.exponential(0.08);
    if (t >= followup) break;
    covs.push_back({t, vec({rng.normal(), rng.uniform()})});
  }
  rc.subject = make_subject(refills, w, followup, 1, covs, vec({0.0}));
  rc.psi.psi1 = rng.normal() * 0.6;
  if (with_modifier) {
    rc.psi.psi2 = vec({rng.normal() * 0.4});
    rc.g.columns = {0};
  }
  return rc;
}

}  // namespace ctsftm::testing
