#include <doctest.h>

#include "test_helpers.hpp"

using namespace ctsftm;
using ctsftm::testing::make_subject;
using ctsftm::testing::vec;

TEST_SUITE_BEGIN("data_model");

TEST_CASE("normalize_dispensations applies the overlap rule") {
  CHECK(normalize_dispensations({0, 20, 60}, 30).refill_times ==
        std::vector<double>{0, 30, 60});
  CHECK(normalize_dispensations({0, 40}, 30).refill_times == std::vector<double>{0, 40});
  // cascading overlap: the second adjustment uses the adjusted predecessor
  CHECK(normalize_dispensations({0, 10, 15}, 30).refill_times ==
        std::vector<double>{0, 30, 60});
}

TEST_CASE("normalize_dispensations is idempotent") {
  Rng rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> raw{0.0};
    const int k = 1 + static_cast<int>(rng.below(6));
    for (int j = 0; j < k; ++j) raw.push_back(raw.back() + rng.exponential(0.05));
    const double w = 5 + 30 * rng.uniform();
    const auto once = normalize_dispensations(raw, w);
    const auto twice = normalize_dispensations(once.refill_times, w);
    CHECK(once.refill_times == twice.refill_times);
  }
}

TEST_CASE("normalize_dispensations input errors") {
  CHECK_THROWS_AS(normalize_dispensations({0}, 30), ValidationError);       // K >= 1
  CHECK_THROWS_AS(normalize_dispensations({0, 5, 5}, 30), ValidationError); // not increasing
  CHECK_THROWS_AS(normalize_dispensations({1, 5}, 30), ValidationError);    // must start at 0
  CHECK_THROWS_AS(normalize_dispensations({0, 40}, 30, 31), ValidationError);  // eps >= w
}

TEST_CASE("gap_times formula and positivity") {
  const double eps = 1e-6;
  auto d = normalize_dispensations({0, 40}, 30, eps);
  CHECK(gap_times(d).gaps[0] == doctest::Approx(10 + eps).epsilon(1e-15));
  // back-to-back refill gives exactly epsilon
  d = normalize_dispensations({0, 30}, 30, eps);
  CHECK(gap_times(d).gaps[0] == eps);
  d = normalize_dispensations({0, 30, 75}, 30, eps);
  CHECK(gap_times(d).gaps[0] == eps);
  CHECK(gap_times(d).gaps[1] == doctest::Approx(15 + eps).epsilon(1e-15));
}

TEST_CASE("gap_times strictly positive after normalization") {
  Rng rng(13);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> raw{0.0};
    const int k = 1 + static_cast<int>(rng.below(5));
    for (int j = 0; j < k; ++j) raw.push_back(raw.back() + rng.exponential(0.2));
    const auto d = normalize_dispensations(raw, 10.0);
    for (double t : gap_times(d).gaps) CHECK(t > 0.0);
  }
}

TEST_CASE("treatment_indicator windows") {
  const auto s = make_subject({0, 40}, 30, 90);
  CHECK(treatment_indicator(s, 10) == 1);   // first coverage window
  CHECK(treatment_indicator(s, 35) == 0);   // gap
  CHECK(treatment_indicator(s, 45) == 1);   // second coverage window
  CHECK(treatment_indicator(s, 0) == 1);
  CHECK(treatment_indicator(s, 30) == 0);   // window is [0, w)
  CHECK(treatment_indicator(s, 70) == 0);   // beyond V_K + w
  CHECK_THROWS_AS(treatment_indicator(s, -1), DomainError);
  CHECK_THROWS_AS(treatment_indicator(s, 91), DomainError);
}

TEST_CASE("final window truncated at follow-up") {
  const auto s = make_subject({0, 40}, 30, 55);
  CHECK(treatment_indicator(s, 54) == 1);
  CHECK(treatment_indicator(s, 55) == 0);  // half-open at X
}

TEST_CASE("treated set is a union of half-open windows anchored at refills") {
  Rng rng(29);
  for (int rep = 0; rep < 50; ++rep) {
    auto rc = ctsftm::testing::random_case(rng);
    const auto& s = rc.subject;
    const auto& v = s.dispensations.refill_times;
    const double w = s.dispensations.coverage_window;
    for (double t : v) {
      if (t < s.followup_time) CHECK(treatment_indicator(s, t) == 1);
      const double before = t - 1e-9;
      if (before > 0 && before < s.followup_time) {
        // just below a refill: on only when the previous window still covers
        const bool prev_covers = [&] {
          for (double u : v)
            if (u < t && before < u + w) return true;
          return false;
        }();
        CHECK(treatment_indicator(s, before) == (prev_covers ? 1 : 0));
      }
    }
  }
}

TEST_CASE("coverage + gaps + terminal segment decompose the follow-up") {
  Rng rng(31);
  for (int rep = 0; rep < 50; ++rep) {
    auto rc = ctsftm::testing::random_case(rng);
    const auto& s = rc.subject;
    const auto& d = s.dispensations;
    const double w = d.coverage_window;
    double on = 0.0;
    for (std::size_t k = 0; k < d.refill_times.size(); ++k) {
      const double open = d.refill_times[k];
      on += std::min(open + w, s.followup_time) - open;
    }
    double gaps_total = 0.0;
    for (double g : gap_times(d).gaps) gaps_total += g - d.epsilon;
    const double tail =
        std::max(0.0, s.followup_time - (d.refill_times.back() + w));
    CHECK(on + gaps_total + tail == doctest::Approx(s.followup_time).epsilon(1e-12));
  }
}

TEST_CASE("covariate_at is right-continuous with a constant tail") {
  CovariateProcess c;
  c.change_times = {0, 10};
  c.values = {vec({1.0}), vec({2.0})};
  c.validate();
  CHECK(covariate_at(c, 9.999)[0] == 1.0);
  CHECK(covariate_at(c, 10)[0] == 2.0);  // right-continuity at the jump
  CHECK(covariate_at(c, 500)[0] == 2.0);
  CHECK_THROWS_AS(covariate_at(c, -0.5), DomainError);

  CovariateProcess single;
  single.change_times = {0};
  single.values = {vec({7.0})};
  CHECK(covariate_at(single, 500)[0] == 7.0);
}

TEST_CASE("trajectory validation rejects bad geometry") {
  // X <= V_K
  CHECK_THROWS_AS(make_subject({0, 40}, 30, 40), ValidationError);
  // covariate change after follow-up
  CHECK_THROWS_AS(
      make_subject({0, 40}, 30, 90, 1, {{0.0, vec({0.0})}, {95.0, vec({1.0})}}),
      ValidationError);
}

TEST_SUITE_END();
