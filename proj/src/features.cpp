#include "ctsftm/features.hpp"

#include <charconv>

namespace ctsftm {

namespace {

bool parse_index(const std::string& s, std::size_t offset, int* out) {
  const char* first = s.data() + offset;
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, *out);
  return res.ec == std::errc{} && res.ptr == last;
}

}  // namespace

FeatureSpec FeatureSpec::parse(const std::vector<std::string>& names,
                               Eigen::Index covariate_dim, Eigen::Index baseline_dim,
                               bool allow_gap_terms, bool allow_calendar_terms) {
  FeatureSpec spec;
  for (const auto& name : names) {
    Term term;
    term.name = name;
    int idx = 0;
    if (name == "gap_u") {
      if (!allow_gap_terms)
        throw ConfigError("feature 'gap_u' is only valid for the refill model");
      term.kind = Kind::gap_clock;
    } else if (name == "k") {
      if (!allow_gap_terms)
        throw ConfigError("feature 'k' is only valid for the refill model");
      term.kind = Kind::refill_index;
    } else if (name == "u") {
      if (!allow_calendar_terms)
        throw ConfigError("feature 'u' is only valid for the censoring model");
      term.kind = Kind::calendar_clock;
    } else if (name == "a_minus") {
      if (!allow_calendar_terms)
        throw ConfigError("feature 'a_minus' is only valid for the censoring model");
      term.kind = Kind::a_minus;
    } else if (name.size() > 1 && name[0] == 'l' && parse_index(name, 1, &idx)) {
      if (idx < 1 || idx > covariate_dim)
        throw ConfigError("feature '" + name + "' refers to a missing covariate column");
      term.kind = Kind::covariate;
      term.index = idx - 1;
    } else if (name.size() > 3 && name.rfind("x0_", 0) == 0 && parse_index(name, 3, &idx)) {
      if (idx < 1 || idx > baseline_dim)
        throw ConfigError("feature '" + name + "' refers to a missing baseline column");
      term.kind = Kind::baseline;
      term.index = idx - 1;
    } else {
      throw ConfigError("unknown feature name '" + name + "'");
    }
    spec.terms.push_back(std::move(term));
  }
  return spec;
}

std::vector<std::string> FeatureSpec::names() const {
  std::vector<std::string> out;
  out.reserve(terms.size());
  for (const auto& t : terms) out.push_back(t.name);
  return out;
}

bool FeatureSpec::has_gap_clock() const { return gap_clock_slot() >= 0; }

int FeatureSpec::gap_clock_slot() const {
  for (std::size_t i = 0; i < terms.size(); ++i)
    if (terms[i].kind == Kind::gap_clock) return static_cast<int>(i);
  return -1;
}

void FeatureSpec::evaluate(const FeatureContext& ctx, double* out) const {
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Term& t = terms[i];
    switch (t.kind) {
      case Kind::covariate:
        out[i] = ctx.history->covariates_at(ctx.calendar_time)[t.index];
        break;
      case Kind::baseline:
        out[i] = ctx.history->baseline()[t.index];
        break;
      case Kind::gap_clock:
        out[i] = ctx.gap_time;
        break;
      case Kind::refill_index:
        out[i] = static_cast<double>(ctx.refill_index);
        break;
      case Kind::calendar_clock:
        out[i] = ctx.calendar_time;
        break;
      case Kind::a_minus:
        out[i] = static_cast<double>(ctx.history->treatment_before(ctx.calendar_time));
        break;
    }
  }
}

}  // namespace ctsftm
