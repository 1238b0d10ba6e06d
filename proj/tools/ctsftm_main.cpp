#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <iostream>

#include "ctsftm/config.hpp"
#include "ctsftm/csv_io.hpp"
#include "ctsftm/diagnostics.hpp"
#include "ctsftm/model_io.hpp"
#include "ctsftm/pipeline.hpp"

namespace {

using ctsftm::ConfigError;
using ctsftm::ConfigMap;
using ctsftm::Vector;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;       // input, schema, or config errors
constexpr int kExitStatistical = 3;  // non-convergence / non-identifiability / positivity

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void require_consumed(const ConfigMap& cfg) {
  const auto leftovers = cfg.unconsumed();
  if (!leftovers.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : leftovers) msg += " " + k;
    throw ConfigError(msg);
  }
}

std::uint64_t read_seed(ConfigMap& cfg) {
  if (!cfg.has("seed")) {
    std::cerr << "warning: no seed in config; using deterministic default 0\n";
    return 0;
  }
  const double s = cfg.required_number("seed");
  if (s < 0) throw ConfigError("seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

ctsftm::ScenarioConfig load_scenario(ConfigMap& cfg) {
  ctsftm::ScenarioConfig sc;
  sc.n = static_cast<int>(cfg.number("n", sc.n));
  sc.psi1 = cfg.number("psi1", sc.psi1);
  sc.psi2 = to_vector(cfg.number_list("psi2"));
  for (const auto& name : cfg.string_list("g_columns")) {
    if (name == "l1")
      sc.g_columns.push_back(0);
    else if (name == "l2")
      sc.g_columns.push_back(1);
    else
      throw ConfigError("g_columns entries must be l1 or l2");
  }
  sc.coverage_window = cfg.number("coverage_window", sc.coverage_window);
  sc.epsilon = cfg.number("epsilon", sc.epsilon);
  sc.u_mean = cfg.number("u_mean", sc.u_mean);
  sc.weibull_shape = cfg.number("weibull_shape", sc.weibull_shape);
  sc.u_mean_coef = to_vector(cfg.number_list("u_mean_coef"));
  sc.cov_update_rate = cfg.number("cov_update_rate", sc.cov_update_rate);
  sc.l1_init_p = cfg.number("l1_init_p", sc.l1_init_p);
  sc.l1_flip_p = cfg.number("l1_flip_p", sc.l1_flip_p);
  sc.l2_ar_mu = cfg.number("l2_ar_mu", sc.l2_ar_mu);
  sc.l2_ar_phi = cfg.number("l2_ar_phi", sc.l2_ar_phi);
  sc.l2_ar_sigma = cfg.number("l2_ar_sigma", sc.l2_ar_sigma);
  sc.l2_clamp = cfg.number("l2_clamp", sc.l2_clamp);
  sc.refill_rate = cfg.number("refill_rate", sc.refill_rate);
  sc.refill_gamma = to_vector(cfg.number_list("refill_gamma"));
  sc.force_gap_epsilon = cfg.boolean("force_gap_epsilon", false);
  sc.censor_rate = cfg.number("censor_rate", sc.censor_rate);
  sc.censor_gamma = to_vector(cfg.number_list("censor_gamma"));
  sc.seed = read_seed(cfg);
  sc.max_subject_retries = static_cast<int>(cfg.number("max_subject_retries", 100));
  sc.threads = static_cast<int>(cfg.number("threads", 1));
  return sc;
}

ctsftm::PipelineConfig load_pipeline(ConfigMap& cfg) {
  ctsftm::PipelineConfig pc;
  pc.coverage_window = cfg.number("coverage_window", pc.coverage_window);
  pc.epsilon = cfg.number("epsilon", pc.epsilon);
  pc.refill_features = cfg.string_list("refill_features");
  pc.censor_features = cfg.string_list("censor_features");
  pc.outcome_features = cfg.string_list("outcome_features");
  pc.g_columns = cfg.string_list("g_columns");
  pc.g_centers = cfg.number_list("g_centers");
  pc.refill_options.baseline_pieces =
      static_cast<int>(cfg.number("baseline_pieces", pc.refill_options.baseline_pieces));
  pc.refill_options.cuts = cfg.number_list("baseline_cuts");
  pc.cox_options.score_tol = cfg.number("cox_score_tol", pc.cox_options.score_tol);

  auto& est = pc.estimator;
  const std::string index = cfg.str("index_choice", "simple");
  if (index == "simple")
    est.index_choice = ctsftm::EstimatorConfig::IndexChoice::simple;
  else if (index == "optimal")
    est.index_choice = ctsftm::EstimatorConfig::IndexChoice::optimal;
  else
    throw ConfigError("index_choice must be simple or optimal");
  est.c_scale = cfg.number("c_scale", est.c_scale);
  est.newton_tol = cfg.number("newton_tol", est.newton_tol);
  est.max_iterations = static_cast<int>(cfg.number("max_iterations", est.max_iterations));
  est.step_halving_limit =
      static_cast<int>(cfg.number("step_halving_limit", est.step_halving_limit));
  est.variance_floor = cfg.number("variance_floor", est.variance_floor);
  est.bootstrap_replicates =
      static_cast<int>(cfg.number("bootstrap_replicates", est.bootstrap_replicates));
  est.positivity_floor = cfg.number("positivity_floor", est.positivity_floor);
  if (cfg.has("initial_psi")) est.initial_psi = to_vector(cfg.number_list("initial_psi"));
  est.seed = read_seed(cfg);
  est.threads = static_cast<int>(cfg.number("threads", 1));
  return pc;
}

nlohmann::json config_echo(const ctsftm::PipelineConfig& pc) {
  nlohmann::json j;
  j["coverage_window"] = pc.coverage_window;
  j["epsilon"] = pc.epsilon;
  j["refill_features"] = pc.refill_features;
  j["censor_features"] = pc.censor_features;
  j["outcome_features"] = pc.outcome_features;
  j["g_columns"] = pc.g_columns;
  j["index_choice"] =
      pc.estimator.index_choice == ctsftm::EstimatorConfig::IndexChoice::simple ? "simple"
                                                                                : "optimal";
  j["c_scale"] = pc.estimator.c_scale;
  j["newton_tol"] = pc.estimator.newton_tol;
  j["max_iterations"] = pc.estimator.max_iterations;
  j["variance_floor"] = pc.estimator.variance_floor;
  j["bootstrap_replicates"] = pc.estimator.bootstrap_replicates;
  j["positivity_floor"] = pc.estimator.positivity_floor;
  j["seed"] = pc.estimator.seed;
  j["threads"] = pc.estimator.threads;
  return j;
}

nlohmann::json meta_block() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return nlohmann::json{{"created_at", buf}};
}

nlohmann::json result_to_json(const ctsftm::PipelineResult& res,
                              const ctsftm::PipelineConfig& pc) {
  nlohmann::json j;
  j["schema_version"] = ctsftm::kResultSchemaVersion;
  const auto& est = res.estimation;
  nlohmann::json psi = nlohmann::json::array();
  psi.push_back(est.psi_hat.psi1);
  for (Eigen::Index i = 0; i < est.psi_hat.psi2.size(); ++i)
    psi.push_back(est.psi_hat.psi2[i]);
  j["psi_hat"] = psi;
  j["ee_norm"] = est.ee_norm;
  j["iterations"] = est.iterations;
  j["converged"] = est.converged;
  if (est.bootstrap_replicates > 0) {
    nlohmann::json bs;
    bs["replicates"] = est.bootstrap_replicates;
    bs["failures"] = est.bootstrap_failures;
    bs["se"] = std::vector<double>(est.bootstrap_se.data(),
                                   est.bootstrap_se.data() + est.bootstrap_se.size());
    nlohmann::json ci = nlohmann::json::array();
    for (const auto& c : est.bootstrap_ci) ci.push_back({c[0], c[1]});
    bs["ci95"] = ci;
    j["bootstrap"] = bs;
  }
  j["nuisance"] = {{"refill", ctsftm::refill_to_json(res.refill)},
                   {"censoring", ctsftm::censoring_to_json(res.censoring)}};
  j["mean_ipcw"] = res.mean_ipcw;
  j["warnings"] = res.warnings;
  j["config_echo"] = config_echo(pc);
  j["meta"] = meta_block();
  return j;
}

int cmd_simulate(const std::string& config_path) {
  ConfigMap cfg = ConfigMap::parse_file(config_path);
  const std::string prefix = cfg.str("out_prefix", "cohort_");
  ctsftm::ScenarioConfig sc = load_scenario(cfg);
  require_consumed(cfg);
  sc.validate();

  const ctsftm::SimulatedCohort cohort = ctsftm::simulate_cohort(sc);
  ctsftm::write_cohort_csvs(cohort.subjects, prefix + "covariates.csv",
                            prefix + "dispensations.csv", prefix + "outcomes.csv");
  ctsftm::write_json_file(ctsftm::truth_to_json(sc, cohort.truth, cohort.subjects),
                          prefix + "truth.json");
  std::cerr << "simulated " << cohort.subjects.size() << " subjects -> " << prefix
            << "{covariates,dispensations,outcomes}.csv, " << prefix << "truth.json\n";
  return kExitOk;
}

std::vector<ctsftm::SubjectTrajectory> load_cohort(ConfigMap& cfg,
                                                   const ctsftm::PipelineConfig& pc) {
  const std::string cov = cfg.required_str("covariates_csv");
  const std::string disp = cfg.required_str("dispensations_csv");
  const std::string out = cfg.required_str("outcomes_csv");
  const auto raw = ctsftm::read_cohort_csvs(cov, disp, out);
  return ctsftm::assemble_cohort(raw, pc.coverage_window, pc.epsilon);
}

int cmd_estimate(const std::string& config_path) {
  ConfigMap cfg = ConfigMap::parse_file(config_path);
  const std::string output = cfg.str("output", "result.json");
  const std::string models_output = cfg.str("models_output", "");
  ctsftm::PipelineConfig pc = load_pipeline(cfg);
  const auto cohort = load_cohort(cfg, pc);
  require_consumed(cfg);

  try {
    const ctsftm::PipelineResult res = ctsftm::run_estimation(cohort, pc);
    ctsftm::write_json_file(result_to_json(res, pc), output);
    if (!models_output.empty())
      ctsftm::write_json_file(ctsftm::models_to_json(res.refill, res.censoring),
                              models_output);
    for (const auto& w : res.estimation.warnings) std::cerr << "warning: " << w << "\n";
    if (!res.estimation.converged) {
      std::cerr << "error: estimation did not converge\n";
      return kExitStatistical;
    }
    std::cerr << "estimate written to " << output << "\n";
    return kExitOk;
  } catch (const ctsftm::NonIdentifiabilityError& e) {
    nlohmann::json j;
    j["schema_version"] = ctsftm::kResultSchemaVersion;
    j["converged"] = false;
    j["error"] = e.what();
    j["config_echo"] = config_echo(pc);
    j["meta"] = meta_block();
    ctsftm::write_json_file(j, output);
    std::cerr << "error: " << e.what() << "\n";
    return kExitStatistical;
  } catch (const ctsftm::ConvergenceError& e) {
    nlohmann::json j;
    j["schema_version"] = ctsftm::kResultSchemaVersion;
    j["converged"] = false;
    j["error"] = e.what();
    j["last_iterate"] = e.last_iterate;
    j["config_echo"] = config_echo(pc);
    j["meta"] = meta_block();
    ctsftm::write_json_file(j, output);
    std::cerr << "error: " << e.what() << "\n";
    return kExitStatistical;
  }
}

int cmd_diagnose(const std::string& config_path) {
  ConfigMap cfg = ConfigMap::parse_file(config_path);
  const std::string output = cfg.str("output", "diagnostics.json");
  const std::string models_input = cfg.str("models_input", "");
  ctsftm::PipelineConfig pc = load_pipeline(cfg);
  const auto cohort = load_cohort(cfg, pc);
  require_consumed(cfg);

  ctsftm::RefillHazardModel refill;
  ctsftm::CensoringCoxModel censoring;
  if (!models_input.empty()) {
    ctsftm::models_from_json(ctsftm::read_json_file(models_input), &refill, &censoring);
  } else {
    const Eigen::Index m = cohort.front().covariates.dim();
    const auto rf = pc.refill_features.empty() ? ctsftm::default_refill_features(m)
                                               : pc.refill_features;
    const auto cf = pc.censor_features.empty() ? ctsftm::default_censor_features(m)
                                               : pc.censor_features;
    const Eigen::Index q = cohort.front().baseline_covariates.size();
    refill = ctsftm::fit_refill_hazard(
        cohort, ctsftm::FeatureSpec::parse(rf, m, q, true, false), pc.refill_options);
    censoring = ctsftm::fit_censoring_cox(
        cohort, ctsftm::FeatureSpec::parse(cf, m, q, false, true), pc.cox_options);
  }

  const auto rep =
      ctsftm::run_diagnostics(cohort, refill, censoring, pc.estimator.positivity_floor);
  nlohmann::json j;
  j["schema_version"] = ctsftm::kResultSchemaVersion;
  j["martingale"] = {{"mean", rep.martingale_mean},
                     {"se", rep.martingale_se},
                     {"n_records", rep.n_records},
                     {"pass", rep.martingale_pass}};
  const auto cov_json = [](const ctsftm::CovariationDiagnostic& d) {
    return nlohmann::json{{"compensator_form", d.compensator_form},
                          {"empirical_cov", d.empirical_cov},
                          {"ratio", d.ratio},
                          {"ratio_se", d.ratio_se}};
  };
  j["covariation"] = {{"unit", cov_json(rep.covariation_unit)},
                      {"modulated", cov_json(rep.covariation_modulated)},
                      {"pass", rep.covariation_pass}};
  j["weights"] = {{"min", rep.weights.min},
                  {"max", rep.weights.max},
                  {"mean", rep.weights.mean},
                  {"ess", rep.weights.ess},
                  {"n_uncensored", rep.weights.n_uncensored},
                  {"positivity_violations", rep.weights.positivity_violations}};
  j["meta"] = meta_block();
  ctsftm::write_json_file(j, output);
  std::cerr << "diagnostics written to " << output << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuous-time structural failure time model for intermittent treatment"};
  app.require_subcommand(1);

  std::string sim_config, est_config, diag_config;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic cohort with known psi*");
  sim->add_option("config", sim_config, "scenario config file")->required();
  auto* est = app.add_subcommand("estimate", "run the three-step estimation pipeline");
  est->add_option("config", est_config, "estimation config file")->required();
  auto* diag = app.add_subcommand("diagnose", "martingale and weight diagnostics");
  diag->add_option("config", diag_config, "diagnostics config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(sim_config);
    if (est->parsed()) return cmd_estimate(est_config);
    if (diag->parsed()) return cmd_diagnose(diag_config);
  } catch (const ctsftm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ctsftm::ValidationError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ctsftm::NonIdentifiabilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStatistical;
  } catch (const ctsftm::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStatistical;
  } catch (const ctsftm::PositivityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStatistical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
