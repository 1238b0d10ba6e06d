#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ctsftm/hazard_models.hpp"

namespace ctsftm {

namespace {

Vector censor_features_at(const FeatureSpec& spec, const SubjectTrajectory& s, double t) {
  HistoryView view(s, t);
  FeatureContext ctx;
  ctx.history = &view;
  ctx.calendar_time = t;
  Vector z(spec.dim());
  spec.evaluate(ctx, z.data());
  return z;
}

}  // namespace

CensoringCoxModel fit_censoring_cox(const std::vector<SubjectTrajectory>& cohort,
                                    const FeatureSpec& features, const CoxFitOptions& opt,
                                    std::span<const double> subject_weight) {
  if (!subject_weight.empty() && subject_weight.size() != cohort.size())
    throw ValidationError("subject weights must match cohort size");
  const auto weight_of = [&](std::size_t i) {
    return subject_weight.empty() ? 1.0 : subject_weight[i];
  };
  const Eigen::Index q = features.dim();

  CensoringCoxModel model;
  model.features = features;
  model.gamma = Vector::Zero(q);
  model.se = Vector::Zero(q);

  // Censoring is the event; failures are treated as censored-for-this-model.
  std::vector<std::size_t> event_subjects;
  for (std::size_t i = 0; i < cohort.size(); ++i)
    if (weight_of(i) > 0.0 && cohort[i].event_indicator == 0) event_subjects.push_back(i);

  if (event_subjects.empty()) {
    model.trivial = true;
    model.converged = true;
    return model;
  }

  std::sort(event_subjects.begin(), event_subjects.end(), [&](std::size_t a, std::size_t b) {
    if (cohort[a].followup_time != cohort[b].followup_time)
      return cohort[a].followup_time < cohort[b].followup_time;
    return a < b;
  });

  // Distinct event times; exact ties share a Breslow denominator.
  struct EventGroup {
    double time;
    double dn = 0.0;          // weighted event mass
    Vector z_sum;             // weighted sum of event features
    std::vector<std::size_t> at_risk;  // subject indices with V_K < t <= X
    std::vector<Vector> z_risk;
    std::vector<double> w_risk;
  };
  std::vector<EventGroup> groups;
  for (std::size_t idx : event_subjects) {
    const double t = cohort[idx].followup_time;
    if (groups.empty() || groups.back().time != t) {
      EventGroup g;
      g.time = t;
      g.z_sum = Vector::Zero(q);
      groups.push_back(std::move(g));
    }
    groups.back().dn += weight_of(idx);
    groups.back().z_sum += weight_of(idx) * censor_features_at(features, cohort[idx], t);
  }
  for (auto& g : groups) {
    for (std::size_t j = 0; j < cohort.size(); ++j) {
      if (weight_of(j) <= 0.0) continue;
      const auto& s = cohort[j];
      if (s.last_refill_time() < g.time && g.time <= s.followup_time) {
        g.at_risk.push_back(j);
        g.z_risk.push_back(censor_features_at(features, s, g.time));
        g.w_risk.push_back(weight_of(j));
      }
    }
  }

  model.n_events = static_cast<int>(event_subjects.size());

  Vector gamma = Vector::Zero(q);
  Vector score(q);
  Eigen::MatrixXd info(q, q);
  const auto eval = [&](const Vector& gm, Vector* sc, Eigen::MatrixXd* in) -> double {
    double ll = 0.0;
    if (sc) sc->setZero();
    if (in) in->setZero();
    Vector s1(q);
    Eigen::MatrixXd s2(q, q);
    for (const auto& g : groups) {
      double s0 = 0.0;
      s1.setZero();
      if (in) s2.setZero();
      for (std::size_t r = 0; r < g.at_risk.size(); ++r) {
        const double lin = gm.dot(g.z_risk[r]);
        if (lin > 500.0) return -std::numeric_limits<double>::infinity();
        const double e = g.w_risk[r] * std::exp(lin);
        s0 += e;
        s1 += e * g.z_risk[r];
        if (in) s2.selfadjointView<Eigen::Lower>().rankUpdate(g.z_risk[r], e);
      }
      ll += gm.dot(g.z_sum) - g.dn * std::log(s0);
      if (sc) *sc += g.z_sum - (g.dn / s0) * s1;
      if (in) {
        Eigen::MatrixXd s2full = s2.selfadjointView<Eigen::Lower>();
        *in += g.dn * (s2full / s0 - (s1 / s0) * (s1 / s0).transpose());
      }
    }
    return ll;
  };

  if (q == 0) {
    model.converged = true;
    model.log_partial_likelihood = eval(gamma, nullptr, nullptr);
  } else {
    double ll = eval(gamma, &score, &info);
    bool converged = false;
    for (int it = 0; it < opt.max_iterations; ++it) {
      if (score.lpNorm<Eigen::Infinity>() < opt.score_tol) {
        converged = true;
        break;
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
      if (ldlt.info() != Eigen::Success)
        throw ConvergenceError("censoring Cox information matrix not positive definite");
      Vector step = ldlt.solve(score);
      double scale = 1.0;
      Vector cand;
      double ll_new = -std::numeric_limits<double>::infinity();
      for (int h = 0; h < 40; ++h) {
        cand = gamma + scale * step;
        ll_new = eval(cand, nullptr, nullptr);
        if (ll_new > ll - 1e-14 * std::abs(ll)) break;
        scale *= 0.5;
      }
      if (!(ll_new > -std::numeric_limits<double>::infinity())) break;
      gamma = cand;
      ll = eval(gamma, &score, &info);
    }
    if (!converged && score.lpNorm<Eigen::Infinity>() < opt.score_tol) converged = true;
    if (!converged) {
      std::vector<double> last(gamma.data(), gamma.data() + gamma.size());
      throw ConvergenceError("censoring Cox fit did not converge in " +
                                 std::to_string(opt.max_iterations) + " iterations",
                             last);
    }
    model.converged = true;
    model.log_partial_likelihood = ll;
    Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(q, q));
    model.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  }
  model.gamma = gamma;

  // Breslow baseline increments at the distinct censoring times.
  model.jump_times.reserve(groups.size());
  model.baseline_increments.reserve(groups.size());
  for (const auto& g : groups) {
    double s0 = 0.0;
    for (std::size_t r = 0; r < g.at_risk.size(); ++r)
      s0 += g.w_risk[r] * std::exp(gamma.dot(g.z_risk[r]));
    model.jump_times.push_back(g.time);
    model.baseline_increments.push_back(g.dn / s0);
  }
  return model;
}

double censoring_survival(const CensoringCoxModel& m, const SubjectTrajectory& s, double u,
                          double positivity_floor) {
  if (u > s.followup_time)
    throw DomainError("censoring survival queried past follow-up for subject " + s.id);
  const double entry = s.last_refill_time();
  if (u <= entry) return 1.0;
  if (m.trivial) return 1.0;

  double surv = 1.0;
  auto lo = std::upper_bound(m.jump_times.begin(), m.jump_times.end(), entry);
  auto hi = std::upper_bound(m.jump_times.begin(), m.jump_times.end(), u);
  for (auto it = lo; it != hi; ++it) {
    const std::size_t idx = static_cast<std::size_t>(it - m.jump_times.begin());
    const Vector z = censor_features_at(m.features, s, *it);
    const double factor = 1.0 - m.baseline_increments[idx] * std::exp(m.gamma.dot(z));
    if (factor < 0.0 || factor > 1.0)
      throw Error("product-limit factor outside [0,1] for subject " + s.id + " at t=" +
                  std::to_string(*it));
    surv *= factor;
  }
  if (surv < positivity_floor)
    throw PositivityError("censoring survival " + std::to_string(surv) + " for subject " +
                          s.id + " falls below the positivity floor " +
                          std::to_string(positivity_floor));
  return surv;
}

}  // namespace ctsftm
