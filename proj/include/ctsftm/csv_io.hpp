#pragma once

#include <map>
#include <string>
#include <vector>

#include "ctsftm/data_model.hpp"

namespace ctsftm {

// Long-format ingestion files (all times in days, header row required):
//   covariates:    subject_id,time,l1,...,l<m>      (time-0 row mandatory)
//   dispensations: subject_id,refill_time           (refill_time-0 row mandatory)
//   outcomes:      subject_id,followup_time,event_indicator,x0_1,...,x0_<q>
struct RawCohortData {
  std::vector<std::string> ids;  // outcome-file order; the cohort order
  std::map<std::string, CovariateProcess> covariates;
  std::map<std::string, std::vector<double>> dispensations;
  struct Outcome {
    double followup_time = 0.0;
    int event_indicator = 0;
    Vector baseline;
  };
  std::map<std::string, Outcome> outcomes;
  Eigen::Index covariate_dim = 0;
  Eigen::Index baseline_dim = 0;
};

RawCohortData read_cohort_csvs(const std::string& covariates_path,
                               const std::string& dispensations_path,
                               const std::string& outcomes_path);

// Joins the three files, normalizes dispensations, and validates every
// subject; validation failures name the subject and are never silent.
std::vector<SubjectTrajectory> assemble_cohort(const RawCohortData& raw, double coverage_window,
                                               double epsilon);

void write_cohort_csvs(const std::vector<SubjectTrajectory>& cohort,
                       const std::string& covariates_path,
                       const std::string& dispensations_path,
                       const std::string& outcomes_path);

}  // namespace ctsftm
