#include "ctsftm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ctsftm/parallel.hpp"
#include "ctsftm/rng.hpp"

namespace ctsftm {

void ScenarioConfig::validate() const {
  if (n <= 0) throw ConfigError("n must be positive");
  if (coverage_window <= 0.0) throw ConfigError("coverage_window must be positive");
  if (!(epsilon > 0.0) || !(epsilon < coverage_window))
    throw ConfigError("epsilon must satisfy 0 < epsilon < coverage_window");
  if (u_mean <= 0.0) throw ConfigError("u_mean must be positive");
  if (weibull_shape <= 0.0) throw ConfigError("weibull_shape must be positive");
  if (cov_update_rate <= 0.0) throw ConfigError("cov_update_rate must be positive");
  if (refill_rate <= 0.0) throw ConfigError("refill_rate must be positive");
  if (censor_rate < 0.0) throw ConfigError("censor_rate must be non-negative");
  if (l1_init_p < 0.0 || l1_init_p > 1.0) throw ConfigError("l1_init_p must be in [0,1]");
  if (l1_flip_p < 0.0 || l1_flip_p > 1.0) throw ConfigError("l1_flip_p must be in [0,1]");
  if (l2_clamp <= 0.0) throw ConfigError("l2_clamp must be positive");
  if (static_cast<Eigen::Index>(g_columns.size()) != psi2.size())
    throw ConfigError("g_columns must match the length of psi2");
  for (int c : g_columns)
    if (c < 0 || c > 1) throw ConfigError("g_columns refer to l1/l2 (indices 0 and 1)");
  if (u_mean_coef.size() != 0 && u_mean_coef.size() != 2)
    throw ConfigError("u_mean_coef must have two entries (l1, l2) or be empty");
  if (refill_gamma.size() != 0 && refill_gamma.size() != 2)
    throw ConfigError("refill_gamma must have two entries (l1, l2) or be empty");
  if (censor_gamma.size() != 0 && censor_gamma.size() != 2)
    throw ConfigError("censor_gamma must have two entries (l1, l2) or be empty");
  if (u_mean_coef.size() == 2) {
    // worst-case conditional mean over the covariate box must stay positive
    const double lo = 1.0 + std::min(0.0, u_mean_coef[0]) - std::abs(u_mean_coef[1]) * l2_clamp;
    if (lo <= 0.0)
      throw ConfigError("u_mean_coef admits a non-positive conditional mean for U");
  }
  if (max_subject_retries < 1) throw ConfigError("max_subject_retries must be >= 1");
}

PsiVector ScenarioConfig::psi_star() const {
  PsiVector p;
  p.psi1 = psi1;
  p.psi2 = psi2;
  return p;
}

EffectModifierMap ScenarioConfig::effect_modifiers() const {
  EffectModifierMap g;
  g.columns = g_columns;
  return g;
}

namespace {

// Lazily extended two-covariate step process.
struct CovariateStream {
  const ScenarioConfig* cfg;
  Rng* rng;
  std::vector<double> times;
  std::vector<double> l1, l2;
  double next_update = 0.0;

  void init() {
    times = {0.0};
    l1 = {rng->bernoulli(cfg->l1_init_p) ? 1.0 : 0.0};
    l2 = {(2.0 * rng->uniform() - 1.0)};
    next_update = rng->exponential(cfg->cov_update_rate);
  }
  void extend_past(double t) {
    while (next_update <= t) {
      times.push_back(next_update);
      double v1 = l1.back();
      if (rng->bernoulli(cfg->l1_flip_p)) v1 = 1.0 - v1;
      double v2 = cfg->l2_ar_mu + cfg->l2_ar_phi * (l2.back() - cfg->l2_ar_mu) +
                  cfg->l2_ar_sigma * rng->normal();
      v2 = std::clamp(v2, -cfg->l2_clamp, cfg->l2_clamp);
      l1.push_back(v1);
      l2.push_back(v2);
      next_update += rng->exponential(cfg->cov_update_rate);
    }
  }
  // index of the value active at time t (right-continuous); t must be covered
  std::size_t index_at(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    return static_cast<std::size_t>(it - times.begin()) - 1;
  }
  // next change strictly after t, or +inf within the extended range
  double next_change_after(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    return it == times.end() ? std::numeric_limits<double>::infinity() : *it;
  }
};

constexpr double kHorizonGuard = 1e7;  // days; runaway-scenario guard

struct SubjectDraw {
  SubjectTrajectory subject;
  SubjectTruth truth;
  bool k_zero = false;
};

SubjectDraw draw_subject(const ScenarioConfig& cfg, std::uint64_t subject_index,
                         int attempt) {
  Rng rng = Rng::substream(cfg.seed, subject_index * 1021 + static_cast<std::uint64_t>(attempt));
  SubjectDraw out;

  CovariateStream cov{&cfg, &rng};
  cov.init();

  // latent baseline failure time, conditionally on X_0
  const double x0_l1 = cov.l1[0], x0_l2 = cov.l2[0];
  double mean = cfg.u_mean;
  if (cfg.u_mean_coef.size() == 2)
    mean *= 1.0 + cfg.u_mean_coef[0] * x0_l1 + cfg.u_mean_coef[1] * x0_l2;
  double u_latent;
  if (cfg.weibull_shape == 1.0) {
    u_latent = mean * rng.exp1();
  } else {
    const double scale = mean / std::tgamma(1.0 + 1.0 / cfg.weibull_shape);
    u_latent = scale * std::pow(rng.exp1(), 1.0 / cfg.weibull_shape);
  }

  const auto theta_at = [&](std::size_t idx) {
    double th = cfg.psi1;
    for (std::size_t j = 0; j < cfg.g_columns.size(); ++j)
      th += cfg.psi2[static_cast<Eigen::Index>(j)] *
            (cfg.g_columns[j] == 0 ? cov.l1[idx] : cov.l2[idx]);
    if (!(std::abs(th) <= kMaxExponent))
      throw OverflowError("scenario effect exponent exceeds clamp");
    return th;
  };

  std::vector<double> refills{0.0};
  double extra = 0.0;  // U(t) = t + extra along the generated path
  double tau = -1.0;

  // Walk a treated window [a, b); returns true when U is reached inside.
  const auto walk_coverage = [&](double a, double b) {
    double t = a;
    while (t < b) {
      cov.extend_past(t);
      const double change = cov.next_change_after(t);
      const double end = std::min(b, change);
      const double em1 = std::expm1(theta_at(cov.index_at(t)));
      const double u_end = end + (extra + (end - t) * em1);
      if (u_latent <= u_end) {
        tau = t + (u_latent - (t + extra)) / (1.0 + em1);
        return true;
      }
      extra += (end - t) * em1;
      t = end;
    }
    return false;
  };

  // Draws the next raw gap length from the true refill hazard; covariates are
  // read at calendar V_{k-1} + w + u, matching the fitted model's clock.
  const auto draw_gap = [&](double cal0) {
    double target = rng.exp1();
    double u = 0.0;
    while (true) {
      const double cal = cal0 + u;
      cov.extend_past(cal);
      const std::size_t idx = cov.index_at(cal);
      double lambda = cfg.refill_rate;
      if (cfg.refill_gamma.size() == 2)
        lambda *= std::exp(cfg.refill_gamma[0] * cov.l1[idx] +
                           cfg.refill_gamma[1] * cov.l2[idx]);
      const double change = cov.next_change_after(cal);
      const double span = change - cal;
      if (target <= lambda * span) return u + target / lambda;
      target -= lambda * span;
      u += span;
      if (cal0 + u > kHorizonGuard)
        throw Error("refill draw exceeded the horizon guard; check scenario rates");
    }
  };

  // Alternate coverage and gap phases until the latent U is consumed.
  while (tau < 0.0) {
    const double v = refills.back();
    if (v > kHorizonGuard)
      throw Error("follow-up exceeded the horizon guard; check scenario rates");
    if (walk_coverage(v, v + cfg.coverage_window)) break;
    const double cal0 = v + cfg.coverage_window;
    const double raw_gap = cfg.force_gap_epsilon ? 0.0 : draw_gap(cal0);
    const double next_refill = v + cfg.coverage_window + std::max(raw_gap - cfg.epsilon, 0.0);
    // untreated stretch [v + w, next_refill): U accrues at rate one
    if (u_latent <= next_refill + extra) {
      tau = u_latent - extra;
      break;
    }
    refills.push_back(next_refill);
  }

  if (refills.size() < 2 || !(tau > refills.back())) {
    out.k_zero = true;  // failure before the first refill; caller resamples
    return out;
  }

  // Censoring on (V_K, inf) from the true log-linear hazard.
  const double v_last = refills.back();
  double censor_time = std::numeric_limits<double>::infinity();
  double cum_at_tau = 0.0;
  if (cfg.censor_rate > 0.0) {
    double target = rng.exp1();
    double t = v_last;
    bool have_cum_at_tau = false;
    while (true) {
      cov.extend_past(t);
      const std::size_t idx = cov.index_at(t);
      double lambda = cfg.censor_rate;
      if (cfg.censor_gamma.size() == 2)
        lambda *=
            std::exp(cfg.censor_gamma[0] * cov.l1[idx] + cfg.censor_gamma[1] * cov.l2[idx]);
      const double change = cov.next_change_after(t);
      const double end = std::min(change, t + 1e6);
      if (!have_cum_at_tau && tau <= end) {
        cum_at_tau += lambda * (tau - t);
        have_cum_at_tau = true;
      } else if (!have_cum_at_tau) {
        cum_at_tau += lambda * (end - t);
      }
      if (target <= lambda * (end - t)) {
        censor_time = t + target / lambda;
        break;
      }
      target -= lambda * (end - t);
      t = end;
      if (t > kHorizonGuard) break;  // effectively uncensored
    }
  }

  const double followup = std::min(tau, censor_time);
  const int delta = tau <= censor_time ? 1 : 0;

  SubjectTrajectory s;
  {
    std::ostringstream id;
    id << "s" << subject_index;
    s.id = id.str();
  }
  s.followup_time = followup;
  s.event_indicator = delta;
  s.baseline_covariates = Vector(2);
  s.baseline_covariates << x0_l1, x0_l2;
  for (std::size_t j = 0; j < cov.times.size(); ++j) {
    if (cov.times[j] > followup) break;
    Vector l(2);
    l << cov.l1[j], cov.l2[j];
    s.covariates.change_times.push_back(cov.times[j]);
    s.covariates.values.push_back(std::move(l));
  }
  s.dispensations.refill_times = refills;
  s.dispensations.coverage_window = cfg.coverage_window;
  s.dispensations.epsilon = cfg.epsilon;
  s.validate();

  out.subject = std::move(s);
  out.truth.u_latent = u_latent;
  out.truth.tau = tau;
  out.truth.censor_time = censor_time;
  out.truth.sc_at_tau = std::exp(-cum_at_tau);
  return out;
}

}  // namespace

SimulatedCohort simulate_cohort(const ScenarioConfig& cfg) {
  cfg.validate();
  SimulatedCohort out;
  out.subjects.resize(static_cast<std::size_t>(cfg.n));
  out.truth.resize(static_cast<std::size_t>(cfg.n));
  parallel_for(static_cast<std::size_t>(cfg.n), cfg.threads, [&](std::size_t i) {
    for (int attempt = 0; attempt < cfg.max_subject_retries; ++attempt) {
      SubjectDraw d = draw_subject(cfg, static_cast<std::uint64_t>(i), attempt);
      if (!d.k_zero) {
        d.truth.attempts = attempt + 1;
        out.subjects[i] = std::move(d.subject);
        out.truth[i] = d.truth;
        return;
      }
    }
    throw Error("subject " + std::to_string(i) + " failed before its first refill in " +
                std::to_string(cfg.max_subject_retries) + " attempts; implausible scenario");
  });
  return out;
}

}  // namespace ctsftm
