#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "ctsftm/config.hpp"
#include "ctsftm/csv_io.hpp"
#include "ctsftm/diagnostics.hpp"
#include "ctsftm/model_io.hpp"
#include "ctsftm/pipeline.hpp"

namespace py = pybind11;
using namespace ctsftm;

namespace {

SubjectTrajectory build_subject(const std::vector<double>& refill_times, double coverage_window,
                                double epsilon, double followup_time, int event_indicator,
                                const std::vector<double>& change_times,
                                const std::vector<std::vector<double>>& covariate_values,
                                const std::vector<double>& baseline) {
  SubjectTrajectory s;
  s.id = "py";
  s.followup_time = followup_time;
  s.event_indicator = event_indicator;
  s.dispensations = normalize_dispensations(refill_times, coverage_window, epsilon);
  if (change_times.size() != covariate_values.size())
    throw ValidationError("change_times and covariate_values differ in length");
  for (std::size_t i = 0; i < change_times.size(); ++i) {
    s.covariates.change_times.push_back(change_times[i]);
    Vector v(static_cast<Eigen::Index>(covariate_values[i].size()));
    for (std::size_t j = 0; j < covariate_values[i].size(); ++j)
      v[static_cast<Eigen::Index>(j)] = covariate_values[i][j];
    s.covariates.values.push_back(std::move(v));
  }
  s.baseline_covariates = Vector::Zero(static_cast<Eigen::Index>(baseline.size()));
  for (std::size_t j = 0; j < baseline.size(); ++j)
    s.baseline_covariates[static_cast<Eigen::Index>(j)] = baseline[j];
  s.validate();
  return s;
}

PsiVector make_psi(double psi1, const std::vector<double>& psi2) {
  PsiVector p;
  p.psi1 = psi1;
  p.psi2 = Vector::Zero(static_cast<Eigen::Index>(psi2.size()));
  for (std::size_t j = 0; j < psi2.size(); ++j)
    p.psi2[static_cast<Eigen::Index>(j)] = psi2[j];
  return p;
}

EffectModifierMap make_g(const std::vector<int>& columns) {
  EffectModifierMap g;
  g.columns = columns;
  return g;
}

py::object json_to_py(const nlohmann::json& j) {
  py::module_ json = py::module_::import("json");
  return json.attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_ctsftm, m) {
  m.doc() = "continuous-time structural failure time model for intermittent treatment";

  py::register_exception<ValidationError>(m, "ValidationError");
  py::register_exception<DomainError>(m, "DomainError");
  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<ConvergenceError>(m, "ConvergenceError");
  py::register_exception<NonIdentifiabilityError>(m, "NonIdentifiabilityError");
  py::register_exception<PositivityError>(m, "PositivityError");

  m.def(
      "normalize_dispensations",
      [](std::vector<double> refills, double w, double epsilon) {
        return normalize_dispensations(std::move(refills), w, epsilon).refill_times;
      },
      py::arg("refill_times"), py::arg("coverage_window"), py::arg("epsilon") = 1e-6,
      "Apply the overlap rule V_k := max(V_k, V_{k-1} + w).");

  m.def(
      "gap_times",
      [](std::vector<double> refills, double w, double epsilon) {
        return gap_times(normalize_dispensations(std::move(refills), w, epsilon)).gaps;
      },
      py::arg("refill_times"), py::arg("coverage_window"), py::arg("epsilon") = 1e-6);

  m.def(
      "treatment_indicator",
      [](const std::vector<double>& refills, double w, double followup, double u) {
        SubjectTrajectory s;
        s.id = "py";
        s.followup_time = followup;
        s.event_indicator = 1;
        s.dispensations = normalize_dispensations(refills, w);
        s.covariates.change_times = {0.0};
        s.covariates.values = {Vector::Zero(1)};
        s.baseline_covariates = Vector::Zero(1);
        s.validate();
        return treatment_indicator(s, u);
      },
      py::arg("refill_times"), py::arg("coverage_window"), py::arg("followup_time"),
      py::arg("u"));

  m.def(
      "mimicking_time",
      [](const std::vector<double>& refills, double w, double eps, double followup, int delta,
         const std::vector<double>& change_times,
         const std::vector<std::vector<double>>& values, const std::vector<double>& baseline,
         double psi1, const std::vector<double>& psi2, const std::vector<int>& g_columns,
         double horizon) {
        const auto s =
            build_subject(refills, w, eps, followup, delta, change_times, values, baseline);
        return mimicking_time(s, make_psi(psi1, psi2), make_g(g_columns), horizon);
      },
      py::arg("refill_times"), py::arg("coverage_window"), py::arg("epsilon"),
      py::arg("followup_time"), py::arg("event_indicator"), py::arg("change_times"),
      py::arg("covariate_values"), py::arg("baseline"), py::arg("psi1"), py::arg("psi2"),
      py::arg("g_columns"), py::arg("horizon"));

  m.def(
      "mimicking_gradient",
      [](const std::vector<double>& refills, double w, double eps, double followup, int delta,
         const std::vector<double>& change_times,
         const std::vector<std::vector<double>>& values, const std::vector<double>& baseline,
         double psi1, const std::vector<double>& psi2, const std::vector<int>& g_columns,
         double horizon) {
        const auto s =
            build_subject(refills, w, eps, followup, delta, change_times, values, baseline);
        const Vector g =
            mimicking_gradient(s, make_psi(psi1, psi2), make_g(g_columns), horizon);
        return std::vector<double>(g.data(), g.data() + g.size());
      },
      py::arg("refill_times"), py::arg("coverage_window"), py::arg("epsilon"),
      py::arg("followup_time"), py::arg("event_indicator"), py::arg("change_times"),
      py::arg("covariate_values"), py::arg("baseline"), py::arg("psi1"), py::arg("psi2"),
      py::arg("g_columns"), py::arg("horizon"));

  m.def(
      "invert_mimicking",
      [](double u_value, const std::vector<double>& refills, double w, double eps,
         const std::vector<double>& change_times,
         const std::vector<std::vector<double>>& values, double psi1,
         const std::vector<double>& psi2, const std::vector<int>& g_columns) {
        TreatmentCovariatePath path;
        path.dispensations = normalize_dispensations(refills, w, eps);
        for (std::size_t i = 0; i < change_times.size(); ++i) {
          path.covariates.change_times.push_back(change_times[i]);
          Vector v(static_cast<Eigen::Index>(values[i].size()));
          for (std::size_t j = 0; j < values[i].size(); ++j)
            v[static_cast<Eigen::Index>(j)] = values[i][j];
          path.covariates.values.push_back(std::move(v));
        }
        return invert_mimicking(u_value, path, make_psi(psi1, psi2), make_g(g_columns));
      },
      py::arg("u_value"), py::arg("refill_times"), py::arg("coverage_window"),
      py::arg("epsilon"), py::arg("change_times"), py::arg("covariate_values"),
      py::arg("psi1"), py::arg("psi2"), py::arg("g_columns"));

  m.def(
      "simulate",
      [](const std::string& config_text, const std::string& out_prefix) {
        ConfigMap cfg = ConfigMap::parse_string(config_text, "<python>");
        ScenarioConfig sc;
        sc.n = static_cast<int>(cfg.number("n", sc.n));
        sc.psi1 = cfg.number("psi1", 0.0);
        const auto psi2 = cfg.number_list("psi2");
        sc.psi2 = Eigen::Map<const Vector>(psi2.data(), static_cast<Eigen::Index>(psi2.size()));
        for (const auto& name : cfg.string_list("g_columns"))
          sc.g_columns.push_back(name == "l1" ? 0 : 1);
        sc.coverage_window = cfg.number("coverage_window", sc.coverage_window);
        sc.epsilon = cfg.number("epsilon", sc.epsilon);
        sc.u_mean = cfg.number("u_mean", sc.u_mean);
        const auto um = cfg.number_list("u_mean_coef");
        sc.u_mean_coef = Eigen::Map<const Vector>(um.data(), static_cast<Eigen::Index>(um.size()));
        sc.refill_rate = cfg.number("refill_rate", sc.refill_rate);
        const auto rg = cfg.number_list("refill_gamma");
        sc.refill_gamma = Eigen::Map<const Vector>(rg.data(), static_cast<Eigen::Index>(rg.size()));
        sc.censor_rate = cfg.number("censor_rate", sc.censor_rate);
        const auto cg = cfg.number_list("censor_gamma");
        sc.censor_gamma = Eigen::Map<const Vector>(cg.data(), static_cast<Eigen::Index>(cg.size()));
        sc.force_gap_epsilon = cfg.boolean("force_gap_epsilon", false);
        sc.seed = static_cast<std::uint64_t>(cfg.number("seed", 0));
        sc.threads = static_cast<int>(cfg.number("threads", 1));
        sc.validate();
        const auto cohort = simulate_cohort(sc);
        write_cohort_csvs(cohort.subjects, out_prefix + "covariates.csv",
                          out_prefix + "dispensations.csv", out_prefix + "outcomes.csv");
        write_json_file(truth_to_json(sc, cohort.truth, cohort.subjects),
                        out_prefix + "truth.json");
        return static_cast<int>(cohort.subjects.size());
      },
      py::arg("config_text"), py::arg("out_prefix"),
      "Simulate a cohort and write the three ingestion CSVs plus the truth JSON.");

  m.def(
      "estimate",
      [](const std::string& covariates_csv, const std::string& dispensations_csv,
         const std::string& outcomes_csv, const std::string& config_text) {
        ConfigMap cfg = ConfigMap::parse_string(config_text, "<python>");
        PipelineConfig pc;
        pc.coverage_window = cfg.number("coverage_window", pc.coverage_window);
        pc.epsilon = cfg.number("epsilon", pc.epsilon);
        pc.refill_features = cfg.string_list("refill_features");
        pc.censor_features = cfg.string_list("censor_features");
        pc.outcome_features = cfg.string_list("outcome_features");
        pc.g_columns = cfg.string_list("g_columns");
        const std::string index = cfg.str("index_choice", "simple");
        pc.estimator.index_choice = index == "optimal"
                                        ? EstimatorConfig::IndexChoice::optimal
                                        : EstimatorConfig::IndexChoice::simple;
        pc.estimator.bootstrap_replicates =
            static_cast<int>(cfg.number("bootstrap_replicates", 0));
        pc.estimator.seed = static_cast<std::uint64_t>(cfg.number("seed", 0));
        pc.estimator.threads = static_cast<int>(cfg.number("threads", 1));
        const auto raw = read_cohort_csvs(covariates_csv, dispensations_csv, outcomes_csv);
        const auto cohort = assemble_cohort(raw, pc.coverage_window, pc.epsilon);
        const PipelineResult res = run_estimation(cohort, pc);

        nlohmann::json j;
        j["psi_hat"] = nlohmann::json::array();
        j["psi_hat"].push_back(res.estimation.psi_hat.psi1);
        for (Eigen::Index i = 0; i < res.estimation.psi_hat.psi2.size(); ++i)
          j["psi_hat"].push_back(res.estimation.psi_hat.psi2[i]);
        j["converged"] = res.estimation.converged;
        j["iterations"] = res.estimation.iterations;
        j["ee_norm"] = res.estimation.ee_norm;
        if (res.estimation.bootstrap_replicates > 0) {
          j["bootstrap_se"] = std::vector<double>(
              res.estimation.bootstrap_se.data(),
              res.estimation.bootstrap_se.data() + res.estimation.bootstrap_se.size());
        }
        j["mean_ipcw"] = res.mean_ipcw;
        return json_to_py(j);
      },
      py::arg("covariates_csv"), py::arg("dispensations_csv"), py::arg("outcomes_csv"),
      py::arg("config_text") = "",
      "Run the three-step estimation pipeline over the ingestion CSVs.");
}
