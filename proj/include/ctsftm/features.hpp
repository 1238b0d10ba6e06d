#pragma once

#include <string>
#include <vector>

#include "ctsftm/data_model.hpp"

namespace ctsftm {

// Read-only window onto a trajectory's history, bounded at a calendar time.
// Feature maps draw covariate and treatment information only through a view;
// querying past the bound throws LeakageError.  This is the machine-checked
// no-future-data guard.
class HistoryView {
 public:
  HistoryView(const SubjectTrajectory& s, double bound) : subj_(&s), bound_(bound) {}

  const Vector& covariates_at(double t) const {
    check(t);
    return covariate_at(subj_->covariates, t);
  }
  int treatment_before(double t) const {
    check(t);
    return ctsftm::treatment_before(subj_->dispensations, t);
  }
  const Vector& baseline() const { return subj_->baseline_covariates; }
  double bound() const { return bound_; }
  const SubjectTrajectory& subject() const { return *subj_; }

 private:
  void check(double t) const {
    if (t > bound_)
      throw LeakageError("feature map queried history at t=" + std::to_string(t) +
                         " past its bound " + std::to_string(bound_));
  }
  const SubjectTrajectory* subj_;
  double bound_;
};

// Where a hazard feature vector is being evaluated.
struct FeatureContext {
  const HistoryView* history = nullptr;
  double calendar_time = 0.0;  // u on the calendar clock (== history bound)
  double gap_time = 0.0;       // u on the gap clock (refill model only)
  int refill_index = 0;        // k (refill model only)
};

// A named, order-preserving feature specification.  Recognized terms:
//   l<j>    covariate j (1-based) at the calendar time
//   x0_<j>  baseline covariate j (1-based)
//   gap_u   the gap clock (refill model)
//   k       the refill index (refill model)
//   u       the calendar clock (censoring model)
//   a_minus treatment status A_{u-} (censoring model)
struct FeatureSpec {
  enum class Kind { covariate, baseline, gap_clock, refill_index, calendar_clock, a_minus };
  struct Term {
    Kind kind;
    int index = 0;  // covariate / baseline slot
    std::string name;
  };

  std::vector<Term> terms;

  static FeatureSpec parse(const std::vector<std::string>& names, Eigen::Index covariate_dim,
                           Eigen::Index baseline_dim, bool allow_gap_terms,
                           bool allow_calendar_terms);

  Eigen::Index dim() const { return static_cast<Eigen::Index>(terms.size()); }
  std::vector<std::string> names() const;
  bool has_gap_clock() const;
  int gap_clock_slot() const;  // -1 if absent

  // Fills out[0..dim); the gap-clock slot is written from ctx.gap_time.
  void evaluate(const FeatureContext& ctx, double* out) const;
};

}  // namespace ctsftm
