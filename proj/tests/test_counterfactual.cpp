#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"

using namespace ctsftm;
using ctsftm::testing::make_subject;
using ctsftm::testing::vec;

TEST_SUITE_BEGIN("counterfactual");

namespace {

// Independent oracle: adaptive Simpson quadrature of exp(theta(u) A_u) on
// [0, horizon].  Slow and tolerance-bound where the exact segment sum is not.
double integrand(const SubjectTrajectory& s, const PsiVector& psi, const EffectModifierMap& g,
                 double u) {
  if (u >= s.followup_time || treatment_indicator(s, u) == 0) return 1.0;
  const Vector& l = covariate_at(s.covariates, u);
  return std::exp(psi.psi1 + (psi.psi2.size() ? g.dot(psi.psi2, l) : 0.0));
}

double simpson(const SubjectTrajectory& s, const PsiVector& psi, const EffectModifierMap& g,
               double a, double b, double fa, double fm, double fb, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = integrand(s, psi, g, lm), frm = integrand(s, psi, g, rm);
  const double whole = (b - a) / 6.0 * (fa + 4 * fm + fb);
  const double left = (m - a) / 6.0 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson(s, psi, g, a, m, fa, flm, fm, tol / 2, depth - 1) +
         simpson(s, psi, g, m, b, fm, frm, fb, tol / 2, depth - 1);
}

double quadrature_oracle(const SubjectTrajectory& s, const PsiVector& psi,
                         const EffectModifierMap& g, double horizon) {
  // integrate between the discontinuities so Simpson sees smooth pieces
  std::vector<double> cuts{0.0, horizon};
  for (double t : s.covariates.change_times)
    if (t > 0 && t < horizon) cuts.push_back(t);
  for (double t : treatment_switch_times(s.dispensations, horizon)) cuts.push_back(t);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], b = cuts[i + 1];
    if (b <= a) continue;
    const double m = 0.5 * (a + b);
    total += simpson(s, psi, g, a, b, integrand(s, psi, g, a + 1e-12),
                     integrand(s, psi, g, m), integrand(s, psi, g, b - 1e-12), 1e-12, 40);
  }
  return total;
}

}  // namespace

TEST_CASE("psi = 0 returns the horizon bit-for-bit") {
  Rng rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    auto rc = ctsftm::testing::random_case(rng);
    PsiVector zero;
    zero.psi2 = Vector::Zero(rc.psi.psi2.size());
    const double horizon = rc.subject.followup_time * rng.uniform();
    CHECK(mimicking_time(rc.subject, zero, rc.g, horizon) == horizon);
  }
}

TEST_CASE("always-on treatment scales the horizon by exp(psi1)") {
  // back-to-back refills: A == 1 on [0, X)
  const auto s = make_subject({0, 30, 60, 90}, 30, 100);
  PsiVector psi;
  psi.psi1 = 0.7;
  EffectModifierMap g;
  const double u = mimicking_time(s, psi, g, s.followup_time);
  CHECK(u == doctest::Approx(100 * std::exp(0.7)).epsilon(1e-13));
}

TEST_CASE("two-segment closed form") {
  // on for 10, off for 5, psi1 = ln 2 -> 10*2 + 5 = 25
  const auto s = make_subject({0, 40}, 10, 15);
  PsiVector psi;
  psi.psi1 = std::log(2.0);
  EffectModifierMap g;
  CHECK(mimicking_time(s, psi, g, 15) == doctest::Approx(25).epsilon(1e-14));
  CHECK(quadrature_oracle(s, psi, g, 15) == doctest::Approx(25).epsilon(1e-9));
}

TEST_CASE("matches adaptive quadrature on random paths") {
  Rng rng(11);
  for (int rep = 0; rep < 40; ++rep) {
    auto rc = ctsftm::testing::random_case(rng);
    const double horizon = rc.subject.followup_time * (0.2 + 0.8 * rng.uniform());
    const double exact = mimicking_time(rc.subject, rc.psi, rc.g, horizon);
    const double approx = quadrature_oracle(rc.subject, rc.psi, rc.g, horizon);
    CHECK(exact == doctest::Approx(approx).epsilon(1e-7));
  }
}

TEST_CASE("monotone and additive in the horizon") {
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    auto rc = ctsftm::testing::random_case(rng);
    const double t2 = rc.subject.followup_time * (0.3 + 0.7 * rng.uniform());
    const double t1 = t2 * rng.uniform();
    const double u1 = mimicking_time(rc.subject, rc.psi, rc.g, t1);
    const double u2 = mimicking_time(rc.subject, rc.psi, rc.g, t2);
    CHECK(u2 > u1);
    // additivity: U[0,t2] - U[0,t1] equals the segment sum over [t1,t2]
    double seg = 0.0;
    for (const auto& sgm :
         exposure_segments(rc.subject.covariates, rc.subject.dispensations, t2)) {
      const double a = std::max(sgm.start, t1);
      const double b = sgm.end;
      if (b <= a) continue;
      if (!sgm.treated) {
        seg += b - a;
      } else {
        const Vector& l = rc.subject.covariates.values[sgm.covariate_index];
        seg += (b - a) * std::exp(rc.psi.psi1 + rc.g.dot(rc.psi.psi2, l));
      }
    }
    CHECK(u2 - u1 == doctest::Approx(seg).epsilon(1e-11));
  }
}

TEST_CASE("gradient of untreated exposure is zero") {
  // the stretch (10, 40) is untreated, so the gradient stops growing there
  const auto s = make_subject({0, 40}, 10, 45);
  PsiVector psi;
  psi.psi1 = 0.4;
  EffectModifierMap g;
  const Vector at_cover_end = mimicking_gradient(s, psi, g, 10.0);
  const Vector inside_gap = mimicking_gradient(s, psi, g, 39.0);
  CHECK(inside_gap[0] == at_cover_end[0]);
  CHECK(mimicking_gradient(s, psi, g, 0.0)[0] == 0.0);
}

TEST_CASE("gradient pure-psi1 case") {
  // A == 1 on [0, horizon], psi1 = 0: dU/dpsi1 = horizon
  const auto s = make_subject({0, 30}, 30, 40);
  PsiVector zero;
  EffectModifierMap none;
  const Vector gr = mimicking_gradient(s, zero, none, 31);
  CHECK(gr.size() == 1);
  CHECK(gr[0] == doctest::Approx(31.0).epsilon(1e-14));
}

TEST_CASE("gradient matches central finite differences") {
  Rng rng(19);
  for (int rep = 0; rep < 200; ++rep) {
    auto rc = ctsftm::testing::random_case(rng);
    const double horizon = rc.subject.followup_time * (0.3 + 0.7 * rng.uniform());
    const Vector grad = mimicking_gradient(rc.subject, rc.psi, rc.g, horizon);
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < grad.size(); ++j) {
      PsiVector hi = rc.psi, lo = rc.psi;
      if (j == 0) {
        hi.psi1 += h;
        lo.psi1 -= h;
      } else {
        hi.psi2[j - 1] += h;
        lo.psi2[j - 1] -= h;
      }
      const double fd = (mimicking_time(rc.subject, hi, rc.g, horizon) -
                         mimicking_time(rc.subject, lo, rc.g, horizon)) /
                        (2 * h);
      const double scale = std::max(1.0, std::abs(grad[j]));
      CHECK(std::abs(grad[j] - fd) / scale < 1e-6);
    }
  }
}

TEST_CASE("invert_mimicking closed forms") {
  TreatmentCovariatePath path;
  path.dispensations = normalize_dispensations({0, 30, 60, 90}, 30);
  path.covariates.change_times = {0};
  path.covariates.values = {vec({0.0})};
  EffectModifierMap g;

  PsiVector zero;
  CHECK(invert_mimicking(123.456, path, zero, g) == 123.456);

  PsiVector psi;
  psi.psi1 = 0.8;
  // A == 1 until 120; u small enough to stay inside
  const double u = 50.0;
  CHECK(invert_mimicking(u, path, psi, g) ==
        doctest::Approx(u * std::exp(-0.8)).epsilon(1e-13));
  CHECK_THROWS_AS(invert_mimicking(0.0, path, psi, g), DomainError);
}

TEST_CASE("round trip over random paths and psi draws") {
  Rng rng(23);
  int done = 0;
  while (done < 1000) {
    auto rc = ctsftm::testing::random_case(rng);
    TreatmentCovariatePath path;
    path.covariates = rc.subject.covariates;
    path.dispensations = rc.subject.dispensations;
    const double tau = rc.subject.followup_time * (0.2 + 0.8 * rng.uniform());
    const double u = mimicking_time(rc.subject, rc.psi, rc.g, tau);
    const double tau_back = invert_mimicking(u, path, rc.psi, rc.g);
    CHECK(std::abs(tau_back - tau) / tau < 1e-10);
    const double u_back = mimicking_time(rc.subject, rc.psi, rc.g, tau_back);
    CHECK(std::abs(u_back - u) / u < 1e-10);
    ++done;
  }
}

TEST_CASE("exponent clamp raises instead of saturating") {
  const auto s = make_subject({0, 30}, 30, 40);
  PsiVector psi;
  psi.psi1 = 60.0;
  EffectModifierMap g;
  CHECK_THROWS_AS(mimicking_time(s, psi, g, 35), OverflowError);
  TreatmentCovariatePath path;
  path.covariates = s.covariates;
  path.dispensations = s.dispensations;
  CHECK_THROWS_AS(invert_mimicking(1.0, path, psi, g), OverflowError);
}

TEST_SUITE_END();
