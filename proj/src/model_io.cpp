#include "ctsftm/model_io.hpp"

#include <fstream>

namespace ctsftm {

namespace {

nlohmann::json vec_to_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vector vec_from_json(const nlohmann::json& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i];
  return v;
}

void check_version(const nlohmann::json& j) {
  if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kModelSchemaVersion)
    throw ValidationError("unsupported model schema version");
}

}  // namespace

nlohmann::json refill_to_json(const RefillHazardModel& m) {
  nlohmann::json j;
  j["schema_version"] = kModelSchemaVersion;
  j["kind"] = "refill_hazard";
  j["features"] = m.features.names();
  j["gamma"] = vec_to_json(m.gamma);
  j["cuts"] = m.cuts;
  j["rates"] = m.rates;
  j["log_likelihood"] = m.log_likelihood;
  j["converged"] = m.converged;
  j["se"] = vec_to_json(m.se);
  j["n_records"] = m.n_records;
  return j;
}

RefillHazardModel refill_from_json(const nlohmann::json& j) {
  check_version(j);
  if (j.at("kind").get<std::string>() != "refill_hazard")
    throw ValidationError("not a refill hazard model");
  RefillHazardModel m;
  // feature indices are re-parsed with loose bounds; evaluation re-validates
  m.features = FeatureSpec::parse(j.at("features").get<std::vector<std::string>>(), 1 << 20,
                                  1 << 20, true, false);
  m.gamma = vec_from_json(j.at("gamma"));
  m.cuts = j.at("cuts").get<std::vector<double>>();
  m.rates = j.at("rates").get<std::vector<double>>();
  m.log_likelihood = j.at("log_likelihood").get<double>();
  m.converged = j.at("converged").get<bool>();
  m.se = vec_from_json(j.at("se"));
  m.n_records = j.at("n_records").get<int>();
  m.validate();
  return m;
}

nlohmann::json censoring_to_json(const CensoringCoxModel& m) {
  nlohmann::json j;
  j["schema_version"] = kModelSchemaVersion;
  j["kind"] = "censoring_cox";
  j["features"] = m.features.names();
  j["gamma"] = vec_to_json(m.gamma);
  j["jump_times"] = m.jump_times;
  j["baseline_increments"] = m.baseline_increments;
  j["trivial"] = m.trivial;
  j["converged"] = m.converged;
  j["log_partial_likelihood"] = m.log_partial_likelihood;
  j["se"] = vec_to_json(m.se);
  j["n_events"] = m.n_events;
  return j;
}

CensoringCoxModel censoring_from_json(const nlohmann::json& j) {
  check_version(j);
  if (j.at("kind").get<std::string>() != "censoring_cox")
    throw ValidationError("not a censoring Cox model");
  CensoringCoxModel m;
  m.features = FeatureSpec::parse(j.at("features").get<std::vector<std::string>>(), 1 << 20,
                                  1 << 20, false, true);
  m.gamma = vec_from_json(j.at("gamma"));
  m.jump_times = j.at("jump_times").get<std::vector<double>>();
  m.baseline_increments = j.at("baseline_increments").get<std::vector<double>>();
  m.trivial = j.at("trivial").get<bool>();
  m.converged = j.at("converged").get<bool>();
  m.log_partial_likelihood = j.at("log_partial_likelihood").get<double>();
  m.se = vec_from_json(j.at("se"));
  m.n_events = j.at("n_events").get<int>();
  return m;
}

nlohmann::json models_to_json(const RefillHazardModel& refill, const CensoringCoxModel& cox) {
  nlohmann::json j;
  j["schema_version"] = kModelSchemaVersion;
  j["refill_hazard"] = refill_to_json(refill);
  j["censoring_cox"] = censoring_to_json(cox);
  return j;
}

void models_from_json(const nlohmann::json& j, RefillHazardModel* refill,
                      CensoringCoxModel* cox) {
  check_version(j);
  *refill = refill_from_json(j.at("refill_hazard"));
  *cox = censoring_from_json(j.at("censoring_cox"));
}

nlohmann::json truth_to_json(const ScenarioConfig& cfg,
                             const std::vector<SubjectTruth>& truth,
                             const std::vector<SubjectTrajectory>& subjects) {
  nlohmann::json j;
  j["schema_version"] = kResultSchemaVersion;
  j["psi_star"] = nlohmann::json::array();
  j["psi_star"].push_back(cfg.psi1);
  for (Eigen::Index i = 0; i < cfg.psi2.size(); ++i) j["psi_star"].push_back(cfg.psi2[i]);
  j["g_columns"] = cfg.g_columns;
  j["nuisance"] = {{"u_mean", cfg.u_mean},
                   {"u_mean_coef", std::vector<double>(cfg.u_mean_coef.data(),
                                                       cfg.u_mean_coef.data() +
                                                           cfg.u_mean_coef.size())},
                   {"weibull_shape", cfg.weibull_shape},
                   {"refill_rate", cfg.refill_rate},
                   {"refill_gamma", std::vector<double>(cfg.refill_gamma.data(),
                                                        cfg.refill_gamma.data() +
                                                            cfg.refill_gamma.size())},
                   {"censor_rate", cfg.censor_rate},
                   {"censor_gamma", std::vector<double>(cfg.censor_gamma.data(),
                                                        cfg.censor_gamma.data() +
                                                            cfg.censor_gamma.size())}};
  j["seed"] = cfg.seed;
  nlohmann::json subs = nlohmann::json::array();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    nlohmann::json s;
    s["id"] = subjects[i].id;
    s["u_latent"] = truth[i].u_latent;
    s["tau"] = truth[i].tau;
    s["censor_time"] = std::isfinite(truth[i].censor_time)
                           ? nlohmann::json(truth[i].censor_time)
                           : nlohmann::json();
    s["sc_at_tau"] = truth[i].sc_at_tau;
    s["attempts"] = truth[i].attempts;
    subs.push_back(std::move(s));
  }
  j["subjects"] = std::move(subs);
  return j;
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << "\n";
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

}  // namespace ctsftm
