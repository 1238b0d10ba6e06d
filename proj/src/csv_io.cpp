#include "ctsftm/csv_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ctsftm {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& s, const std::string& file, int lineno) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ValidationError(file + ":" + std::to_string(lineno) + ": cannot parse number '" +
                          s + "'");
  }
  if (pos != s.size())
    throw ValidationError(file + ":" + std::to_string(lineno) + ": trailing characters in '" +
                          s + "'");
  return v;
}

struct CsvReader {
  std::ifstream in;
  std::string file;
  int lineno = 0;

  explicit CsvReader(const std::string& path) : in(path), file(path) {
    if (!in) throw ValidationError("cannot open " + path);
  }
  bool next(std::vector<std::string>* fields) {
    std::string line;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      *fields = split_csv_line(line);
      return true;
    }
    return false;
  }
};

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

RawCohortData read_cohort_csvs(const std::string& covariates_path,
                               const std::string& dispensations_path,
                               const std::string& outcomes_path) {
  RawCohortData raw;

  // outcomes first: they fix the cohort membership and order
  {
    CsvReader r(outcomes_path);
    std::vector<std::string> f;
    if (!r.next(&f)) throw ValidationError(outcomes_path + ": empty file");
    if (f.size() < 3 || f[0] != "subject_id" || f[1] != "followup_time" ||
        f[2] != "event_indicator")
      throw ValidationError(outcomes_path +
                            ": header must be subject_id,followup_time,event_indicator,x0_*");
    raw.baseline_dim = static_cast<Eigen::Index>(f.size()) - 3;
    for (Eigen::Index j = 0; j < raw.baseline_dim; ++j) {
      const std::string expect = "x0_" + std::to_string(j + 1);
      if (f[static_cast<std::size_t>(3 + j)] != expect)
        throw ValidationError(outcomes_path + ": baseline column " +
                              std::to_string(j + 1) + " must be named " + expect);
    }
    while (r.next(&f)) {
      if (f.size() != static_cast<std::size_t>(3 + raw.baseline_dim))
        throw ValidationError(outcomes_path + ":" + std::to_string(r.lineno) +
                              ": wrong field count");
      RawCohortData::Outcome o;
      o.followup_time = parse_number(f[1], outcomes_path, r.lineno);
      const double ev = parse_number(f[2], outcomes_path, r.lineno);
      if (ev != 0.0 && ev != 1.0)
        throw ValidationError(outcomes_path + ":" + std::to_string(r.lineno) +
                              ": event_indicator must be 0 or 1");
      o.event_indicator = static_cast<int>(ev);
      o.baseline = Vector(raw.baseline_dim);
      for (Eigen::Index j = 0; j < raw.baseline_dim; ++j)
        o.baseline[j] = parse_number(f[static_cast<std::size_t>(3 + j)], outcomes_path, r.lineno);
      if (raw.outcomes.count(f[0]))
        throw ValidationError(outcomes_path + ":" + std::to_string(r.lineno) +
                              ": duplicate subject " + f[0]);
      raw.outcomes[f[0]] = std::move(o);
      raw.ids.push_back(f[0]);
    }
    if (raw.ids.empty()) throw ValidationError(outcomes_path + ": no subjects");
  }

  {
    CsvReader r(covariates_path);
    std::vector<std::string> f;
    if (!r.next(&f)) throw ValidationError(covariates_path + ": empty file");
    if (f.size() < 3 || f[0] != "subject_id" || f[1] != "time")
      throw ValidationError(covariates_path + ": header must be subject_id,time,l1,...");
    raw.covariate_dim = static_cast<Eigen::Index>(f.size()) - 2;
    for (Eigen::Index j = 0; j < raw.covariate_dim; ++j) {
      const std::string expect = "l" + std::to_string(j + 1);
      if (f[static_cast<std::size_t>(2 + j)] != expect)
        throw ValidationError(covariates_path + ": covariate column " +
                              std::to_string(j + 1) + " must be named " + expect);
    }
    while (r.next(&f)) {
      if (f.size() != static_cast<std::size_t>(2 + raw.covariate_dim))
        throw ValidationError(covariates_path + ":" + std::to_string(r.lineno) +
                              ": wrong field count");
      auto& proc = raw.covariates[f[0]];
      const double t = parse_number(f[1], covariates_path, r.lineno);
      if (!proc.change_times.empty() && t <= proc.change_times.back())
        throw ValidationError(covariates_path + ":" + std::to_string(r.lineno) +
                              ": change times must be strictly increasing per subject");
      Vector l(raw.covariate_dim);
      for (Eigen::Index j = 0; j < raw.covariate_dim; ++j)
        l[j] = parse_number(f[static_cast<std::size_t>(2 + j)], covariates_path, r.lineno);
      proc.change_times.push_back(t);
      proc.values.push_back(std::move(l));
    }
  }

  {
    CsvReader r(dispensations_path);
    std::vector<std::string> f;
    if (!r.next(&f)) throw ValidationError(dispensations_path + ": empty file");
    if (f.size() != 2 || f[0] != "subject_id" || f[1] != "refill_time")
      throw ValidationError(dispensations_path + ": header must be subject_id,refill_time");
    while (r.next(&f)) {
      if (f.size() != 2)
        throw ValidationError(dispensations_path + ":" + std::to_string(r.lineno) +
                              ": wrong field count");
      raw.dispensations[f[0]].push_back(parse_number(f[1], dispensations_path, r.lineno));
    }
  }

  return raw;
}

std::vector<SubjectTrajectory> assemble_cohort(const RawCohortData& raw, double coverage_window,
                                               double epsilon) {
  std::vector<SubjectTrajectory> cohort;
  cohort.reserve(raw.ids.size());
  for (const auto& id : raw.ids) {
    auto cov = raw.covariates.find(id);
    if (cov == raw.covariates.end())
      throw ValidationError("subject " + id + ": no covariate rows");
    auto disp = raw.dispensations.find(id);
    if (disp == raw.dispensations.end())
      throw ValidationError("subject " + id + ": no dispensation rows");
    const auto& out = raw.outcomes.at(id);

    SubjectTrajectory s;
    s.id = id;
    s.followup_time = out.followup_time;
    s.event_indicator = out.event_indicator;
    s.baseline_covariates = out.baseline;
    s.covariates = cov->second;
    try {
      s.covariates.validate();
      s.dispensations = normalize_dispensations(disp->second, coverage_window, epsilon);
      s.validate();
    } catch (const ValidationError& err) {
      throw ValidationError("subject " + id + ": " + err.what());
    }
    cohort.push_back(std::move(s));
  }
  return cohort;
}

void write_cohort_csvs(const std::vector<SubjectTrajectory>& cohort,
                       const std::string& covariates_path,
                       const std::string& dispensations_path,
                       const std::string& outcomes_path) {
  if (cohort.empty()) throw ValidationError("cannot write an empty cohort");
  const Eigen::Index m = cohort.front().covariates.dim();
  const Eigen::Index q = cohort.front().baseline_covariates.size();

  std::ofstream cov(covariates_path);
  if (!cov) throw ValidationError("cannot write " + covariates_path);
  cov << "subject_id,time";
  for (Eigen::Index j = 1; j <= m; ++j) cov << ",l" << j;
  cov << "\n";
  for (const auto& s : cohort) {
    for (std::size_t r = 0; r < s.covariates.change_times.size(); ++r) {
      cov << s.id << "," << format_double(s.covariates.change_times[r]);
      for (Eigen::Index j = 0; j < m; ++j)
        cov << "," << format_double(s.covariates.values[r][j]);
      cov << "\n";
    }
  }

  std::ofstream disp(dispensations_path);
  if (!disp) throw ValidationError("cannot write " + dispensations_path);
  disp << "subject_id,refill_time\n";
  for (const auto& s : cohort)
    for (double v : s.dispensations.refill_times)
      disp << s.id << "," << format_double(v) << "\n";

  std::ofstream out(outcomes_path);
  if (!out) throw ValidationError("cannot write " + outcomes_path);
  out << "subject_id,followup_time,event_indicator";
  for (Eigen::Index j = 1; j <= q; ++j) out << ",x0_" << j;
  out << "\n";
  for (const auto& s : cohort) {
    out << s.id << "," << format_double(s.followup_time) << "," << s.event_indicator;
    for (Eigen::Index j = 0; j < q; ++j)
      out << "," << format_double(s.baseline_covariates[j]);
    out << "\n";
  }
}

}  // namespace ctsftm
