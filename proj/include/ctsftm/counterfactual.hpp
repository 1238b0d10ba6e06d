#pragma once

#include <vector>

#include "ctsftm/data_model.hpp"

namespace ctsftm {

// The p-dimensional causal parameter psi = (psi1, psi2): log time-ratio effect
// of treatment plus effect-modification coefficients.
struct PsiVector {
  double psi1 = 0.0;
  Vector psi2;  // dim(g) entries; may be empty (p = 1)

  Eigen::Index dim() const { return 1 + psi2.size(); }
  Vector as_vector() const;
  static PsiVector from_vector(const Vector& v);
};

// Maps a covariate vector L_u to the effect-modifier vector g(L_u): a named
// column subset, optionally centered.
struct EffectModifierMap {
  std::vector<int> columns;  // indices into L
  Vector centers;            // same length; zero if empty

  Eigen::Index dim() const { return static_cast<Eigen::Index>(columns.size()); }
  void validate(Eigen::Index covariate_dim) const;

  double dot(const Vector& psi2, const Vector& l) const {
    double s = 0.0;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const double centered =
          l[columns[j]] - (centers.size() > 0 ? centers[static_cast<Eigen::Index>(j)] : 0.0);
      s += psi2[static_cast<Eigen::Index>(j)] * centered;
    }
    return s;
  }
  void fill(const Vector& l, double* out) const {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      out[j] = l[columns[j]] -
               (centers.size() > 0 ? centers[static_cast<Eigen::Index>(j)] : 0.0);
    }
  }
};

// Treatment + covariate history without a follow-up cap; the last covariate
// value and the off-treatment state extrapolate to infinity.  Used by the
// generative inverse map.
struct TreatmentCovariatePath {
  CovariateProcess covariates;
  DispensationRecord dispensations;
};

// Mimicking counterfactual baseline failure time
//   U(psi) = int_0^horizon exp{(psi1 + psi2' g(L_u)) A_u} du,
// computed by exact summation over the partition induced by covariate changes
// and treatment switches.  Internally accumulated as
//   U = horizon + sum_{treated segments} len * expm1(theta),
// so psi = 0 returns the horizon bit-for-bit.
double mimicking_time(const SubjectTrajectory& s, const PsiVector& psi,
                      const EffectModifierMap& g, double horizon);

// Exact gradient dU/dpsi: treated segments contribute len * exp(theta) * (1, g(l)').
Vector mimicking_gradient(const SubjectTrajectory& s, const PsiVector& psi,
                          const EffectModifierMap& g, double horizon);

// Unique tau with U(tau) = u_value, found by walking segments and solving the
// final linear piece in closed form.
double invert_mimicking(double u_value, const TreatmentCovariatePath& path,
                        const PsiVector& psi, const EffectModifierMap& g);

// Segment list shared by the three operations above and by the estimator's
// workspace: half-open [start, end) pieces with constant treatment and
// covariates.
struct ExposureSegment {
  double start = 0.0;
  double end = 0.0;
  bool treated = false;
  int covariate_index = 0;  // into CovariateProcess::values
};

std::vector<ExposureSegment> exposure_segments(const CovariateProcess& covariates,
                                               const DispensationRecord& dispensations,
                                               double horizon);

// Exponent clamp shared by the transform and its inverse; exceeding it raises
// OverflowError instead of silently saturating.
inline constexpr double kMaxExponent = 50.0;

}  // namespace ctsftm
