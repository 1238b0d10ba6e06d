#pragma once

#include <string>

#include "ctsftm/estimator.hpp"
#include "ctsftm/simulation.hpp"

#include <json.hpp>

namespace ctsftm {

// JSON schemas are versioned; readers reject unknown versions.
inline constexpr int kModelSchemaVersion = 1;
inline constexpr int kResultSchemaVersion = 1;

nlohmann::json refill_to_json(const RefillHazardModel& m);
RefillHazardModel refill_from_json(const nlohmann::json& j);

nlohmann::json censoring_to_json(const CensoringCoxModel& m);
CensoringCoxModel censoring_from_json(const nlohmann::json& j);

// Both nuisance fits in one reproducibility bundle.
nlohmann::json models_to_json(const RefillHazardModel& refill, const CensoringCoxModel& cox);
void models_from_json(const nlohmann::json& j, RefillHazardModel* refill,
                      CensoringCoxModel* cox);

nlohmann::json truth_to_json(const ScenarioConfig& cfg,
                             const std::vector<SubjectTruth>& truth,
                             const std::vector<SubjectTrajectory>& subjects);

void write_json_file(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json_file(const std::string& path);

}  // namespace ctsftm
