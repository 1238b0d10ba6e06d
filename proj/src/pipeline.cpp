#include "ctsftm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ctsftm/parallel.hpp"
#include "ctsftm/rng.hpp"

namespace ctsftm {

std::vector<std::string> default_refill_features(Eigen::Index m) {
  std::vector<std::string> out;
  for (Eigen::Index j = 1; j <= m; ++j) out.push_back("l" + std::to_string(j));
  out.push_back("gap_u");
  out.push_back("k");
  return out;
}

std::vector<std::string> default_censor_features(Eigen::Index m) {
  std::vector<std::string> out;
  for (Eigen::Index j = 1; j <= m; ++j) out.push_back("l" + std::to_string(j));
  return out;
}

std::vector<std::string> default_outcome_features(Eigen::Index m, Eigen::Index q) {
  std::vector<std::string> out;
  for (Eigen::Index j = 1; j <= q; ++j) out.push_back("x0_" + std::to_string(j));
  for (Eigen::Index j = 1; j <= m; ++j) out.push_back("l" + std::to_string(j));
  out.push_back("gap_u");
  out.push_back("k");
  return out;
}

namespace {

struct ResolvedConfig {
  FeatureSpec refill_spec;
  FeatureSpec censor_spec;
  EstimatorConfig estimator;
  RefillFitOptions refill_options;
  CoxFitOptions cox_options;
};

std::vector<std::string> map_risk_clock_alias(std::vector<std::string> names) {
  for (auto& n : names)
    if (n == "u") n = "gap_u";  // risk-set clock alias in the outcome regression
  return names;
}

ResolvedConfig resolve(const std::vector<SubjectTrajectory>& cohort,
                       const PipelineConfig& cfg) {
  if (cohort.empty()) throw ValidationError("empty cohort");
  const Eigen::Index m = cohort.front().covariates.dim();
  const Eigen::Index q = cohort.front().baseline_covariates.size();

  ResolvedConfig r;
  r.refill_options = cfg.refill_options;
  r.cox_options = cfg.cox_options;
  r.estimator = cfg.estimator;

  const auto refill_names =
      cfg.refill_features.empty() ? default_refill_features(m) : cfg.refill_features;
  const auto censor_names =
      cfg.censor_features.empty() ? default_censor_features(m) : cfg.censor_features;
  const auto outcome_names = map_risk_clock_alias(
      cfg.outcome_features.empty() ? default_outcome_features(m, q) : cfg.outcome_features);

  r.refill_spec = FeatureSpec::parse(refill_names, m, q, true, false);
  r.censor_spec = FeatureSpec::parse(censor_names, m, q, false, true);
  r.estimator.outcome_features = FeatureSpec::parse(outcome_names, m, q, true, false);

  EffectModifierMap g;
  for (const auto& name : cfg.g_columns) {
    if (name.size() < 2 || name[0] != 'l')
      throw ConfigError("effect modifier '" + name + "' must name a covariate column l<j>");
    const int idx = std::stoi(name.substr(1));
    if (idx < 1 || idx > m)
      throw ConfigError("effect modifier '" + name + "' refers to a missing covariate");
    g.columns.push_back(idx - 1);
  }
  if (!cfg.g_centers.empty()) {
    if (cfg.g_centers.size() != cfg.g_columns.size())
      throw ConfigError("g_centers must match g_columns");
    g.centers = Eigen::Map<const Vector>(cfg.g_centers.data(),
                                         static_cast<Eigen::Index>(cfg.g_centers.size()));
  }
  r.estimator.effect_modifiers = g;

  if (!r.estimator.initial_psi && !cfg.psi2_init.empty()) {
    Vector init = Vector::Zero(r.estimator.psi_dim());
    for (std::size_t j = 0; j < cfg.psi2_init.size() &&
                            static_cast<Eigen::Index>(j) + 1 < init.size();
         ++j)
      init[static_cast<Eigen::Index>(j) + 1] = cfg.psi2_init[j];
    r.estimator.initial_psi = init;
  }

  const int b = r.estimator.bootstrap_replicates;
  if (b != 0 && b < 50)
    throw ConfigError("bootstrap_replicates must be 0 (disabled) or at least 50");
  return r;
}

}  // namespace

PipelineResult run_estimation(const std::vector<SubjectTrajectory>& cohort,
                              const PipelineConfig& cfg) {
  const ResolvedConfig rc = resolve(cohort, cfg);
  PipelineResult out;

  // Step 1: refill gap-time hazard on the pooled gap records.
  out.refill = fit_refill_hazard(cohort, rc.refill_spec, rc.refill_options);

  // Step 2: time-dependent censoring Cox model with Breslow baseline.
  out.censoring = fit_censoring_cox(cohort, rc.censor_spec, rc.cox_options);
  if (out.censoring.trivial)
    out.warnings.push_back("no censoring events; S_C taken as 1 everywhere");

  // Step 3: Newton-Raphson on the IPCW-weighted estimating equation.
  EstimationEngine engine(cohort, rc.estimator, out.refill, out.censoring);
  out.mean_ipcw = engine.total_ipcw_weight() / static_cast<double>(cohort.size());
  const Vector initial =
      rc.estimator.initial_psi.value_or(Vector::Zero(rc.estimator.psi_dim()));
  if (initial.size() != rc.estimator.psi_dim())
    throw ConfigError("initial psi dimension does not match 1 + dim(g)");

  SolveOutcome so = engine.solve(initial);
  out.estimation.psi_hat = PsiVector::from_vector(so.psi);
  out.estimation.ee_norm = so.ee_norm;
  out.estimation.iterations = so.iterations;
  out.estimation.converged = so.converged;
  if (!so.converged)
    out.warnings.push_back("psi solver hit the iteration cap; result not converged");

  // Bootstrap inference.
  const int b_total = rc.estimator.bootstrap_replicates;
  if (b_total > 0 && so.converged) {
    BootstrapSummary bs = bootstrap_variance(cohort, cfg, rc.estimator.seed);
    out.estimation.bootstrap_se = bs.se;
    out.estimation.bootstrap_ci = bs.ci;
    out.estimation.bootstrap_failures = bs.failures;
    out.estimation.bootstrap_replicates = bs.replicates;
  }
  return out;
}

BootstrapSummary bootstrap_variance(const std::vector<SubjectTrajectory>& cohort,
                                    const PipelineConfig& cfg, std::uint64_t seed) {
  const ResolvedConfig rc = resolve(cohort, cfg);
  const int b_total = rc.estimator.bootstrap_replicates;
  if (b_total < 50) throw ConfigError("bootstrap requires at least 50 replicates");
  const std::size_t n = cohort.size();
  const Eigen::Index p = rc.estimator.psi_dim();

  // Point fit: replicates reuse its baseline cut points and warm-start at its
  // solution.
  RefillHazardModel refill = fit_refill_hazard(cohort, rc.refill_spec, rc.refill_options);
  CensoringCoxModel censoring = fit_censoring_cox(cohort, rc.censor_spec, rc.cox_options);
  RefillFitOptions replicate_refill_options = rc.refill_options;
  replicate_refill_options.cuts = refill.cuts;

  Vector psi_hat;
  {
    EstimationEngine engine(cohort, rc.estimator, refill, censoring);
    SolveOutcome so =
        engine.solve(rc.estimator.initial_psi.value_or(Vector::Zero(p)));
    if (!so.converged)
      throw ConvergenceError("bootstrap requested but the point estimate did not converge");
    psi_hat = so.psi;
  }

  Eigen::MatrixXd draws(b_total, p);
  std::vector<std::uint8_t> ok(static_cast<std::size_t>(b_total), 0);

  const int threads = std::max(1, rc.estimator.threads);
  const int chunks = std::min<int>(threads, b_total);
  const int per_chunk = (b_total + chunks - 1) / chunks;
  parallel_for(static_cast<std::size_t>(chunks), threads, [&](std::size_t c) {
    // One engine per worker; replicate results depend only on (seed, b).
    EstimationEngine engine(cohort, rc.estimator, refill, censoring);
    std::vector<double> mult(n);
    const int lo = static_cast<int>(c) * per_chunk;
    const int hi = std::min(b_total, lo + per_chunk);
    for (int b = lo; b < hi; ++b) {
      Rng rng = Rng::substream(seed, 0x626f6f74ULL + static_cast<std::uint64_t>(b));
      std::fill(mult.begin(), mult.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) mult[rng.below(n)] += 1.0;
      try {
        RefillHazardModel rf =
            fit_refill_hazard(cohort, rc.refill_spec, replicate_refill_options, mult);
        CensoringCoxModel cm = fit_censoring_cox(cohort, rc.censor_spec, rc.cox_options, mult);
        engine.bind(rf, cm, mult);
        SolveOutcome so = engine.solve(psi_hat);
        if (so.converged) {
          draws.row(b) = so.psi.transpose();
          ok[static_cast<std::size_t>(b)] = 1;
        }
      } catch (const Error&) {
        // replicate failure; counted below
      }
    }
  });

  int n_ok = 0;
  for (auto f : ok) n_ok += f;
  const int failures = b_total - n_ok;
  if (failures * 5 > b_total) {
    std::ostringstream msg;
    msg << "bootstrap failed in " << failures << " of " << b_total
        << " replicates (limit 20%); check positivity and identifiability";
    throw Error(msg.str());
  }
  Eigen::MatrixXd kept(n_ok, p);
  int r = 0;
  for (int b = 0; b < b_total; ++b)
    if (ok[static_cast<std::size_t>(b)]) kept.row(r++) = draws.row(b);
  BootstrapSummary summary = bootstrap_from_draws(kept);
  summary.failures = failures;
  summary.replicates = b_total;
  return summary;
}

PipelineConfig misspecify(const ScenarioConfig& truth, const PipelineConfig& base,
                          MisspecifyTarget which) {
  const auto active = [&](const Vector& v) { return v.size() == 2 && v[1] != 0.0; };
  PipelineConfig out = base;
  const auto strip = [](std::vector<std::string> names, const std::string& dropped) {
    names.erase(std::remove(names.begin(), names.end(), dropped), names.end());
    return names;
  };
  switch (which) {
    case MisspecifyTarget::refill_hazard:
      if (!active(truth.refill_gamma))
        throw ConfigError("l2 is not active in the true refill hazard; omission is vacuous");
      if (out.refill_features.empty()) out.refill_features = default_refill_features(2);
      out.refill_features = strip(out.refill_features, "l2");
      break;
    case MisspecifyTarget::outcome_regression:
      if (!(truth.u_mean_coef.size() == 2 && truth.u_mean_coef[1] != 0.0))
        throw ConfigError("l2 is not active in the true outcome mean; omission is vacuous");
      if (out.outcome_features.empty()) out.outcome_features = default_outcome_features(2, 2);
      out.outcome_features = strip(strip(out.outcome_features, "l2"), "x0_2");
      break;
    case MisspecifyTarget::censoring:
      if (!active(truth.censor_gamma))
        throw ConfigError("l2 is not active in the true censoring hazard; omission is vacuous");
      if (out.censor_features.empty()) out.censor_features = default_censor_features(2);
      out.censor_features = strip(out.censor_features, "l2");
      break;
  }
  return out;
}

}  // namespace ctsftm
