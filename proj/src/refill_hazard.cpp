#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "ctsftm/exp_integrals.hpp"
#include "ctsftm/hazard_models.hpp"

namespace ctsftm {

namespace {

// One elementary integration cell of a gap record: constant covariates and a
// single baseline piece, so the hazard is rho * exp(gamma'z_rest + c*u) on it.
struct Cell {
  double a = 0.0, b = 0.0;
  int piece = 0;
  Vector z;  // gap-clock slot zeroed; handled analytically
};

struct Record {
  int subject = 0;
  int k = 0;
  double gap = 0.0;
  double weight = 1.0;
  Vector z_event;
  std::vector<Cell> cells;
};

// Gap-clock breakpoints of covariate changes inside (0, gap).
std::vector<double> covariate_breaks(const SubjectTrajectory& s, double cal0, double gap) {
  std::vector<double> out;
  for (double c : s.covariates.change_times) {
    const double u = c - cal0;
    if (u > 0.0 && u < gap) out.push_back(u);
  }
  return out;
}

Vector features_at(const FeatureSpec& spec, const SubjectTrajectory& s, int k, double cal0,
                   double gap_u, bool zero_gap_slot) {
  HistoryView view(s, cal0 + gap_u);
  FeatureContext ctx;
  ctx.history = &view;
  ctx.calendar_time = cal0 + gap_u;
  ctx.gap_time = gap_u;
  ctx.refill_index = k;
  Vector z(spec.dim());
  spec.evaluate(ctx, z.data());
  if (zero_gap_slot && spec.gap_clock_slot() >= 0) z[spec.gap_clock_slot()] = 0.0;
  return z;
}

}  // namespace

int RefillHazardModel::piece_index(double u) const {
  if (u < 0.0) throw DomainError("gap time must be non-negative");
  auto it = std::upper_bound(cuts.begin(), cuts.end(), u);
  return static_cast<int>(it - cuts.begin()) - 1;
}

double RefillHazardModel::baseline_at(double u) const {
  return rates[static_cast<std::size_t>(piece_index(u))];
}

void RefillHazardModel::validate() const {
  if (cuts.empty() || cuts.front() != 0.0)
    throw ValidationError("baseline cuts must start at 0");
  for (std::size_t i = 1; i < cuts.size(); ++i)
    if (!(cuts[i] > cuts[i - 1]))
      throw ValidationError("baseline cuts must be strictly increasing");
  if (rates.size() != cuts.size())
    throw ValidationError("one baseline rate per cut point required");
  for (double r : rates)
    if (!(r >= 0.0) || !std::isfinite(r))
      throw ValidationError("baseline rates must be finite and non-negative");
}

double refill_hazard_at(const RefillHazardModel& m, int k, double gap_u,
                        const SubjectTrajectory& s) {
  if (gap_u < 0.0) throw DomainError("gap time must be non-negative");
  const double cal0 = s.dispensations.refill_times[static_cast<std::size_t>(k - 1)] +
                      s.dispensations.coverage_window;
  const Vector z = features_at(m.features, s, k, cal0, gap_u, /*zero_gap_slot=*/false);
  return m.baseline_at(gap_u) * std::exp(m.gamma.dot(z));
}

double refill_cumulative_hazard(const RefillHazardModel& m, int k, double a, double b,
                                const SubjectTrajectory& s) {
  if (a < 0.0 || b < a) throw DomainError("invalid gap-clock interval");
  if (b == a) return 0.0;
  const double cal0 = s.dispensations.refill_times[static_cast<std::size_t>(k - 1)] +
                      s.dispensations.coverage_window;
  std::vector<double> pts{a, b};
  for (double c : s.covariates.change_times) {
    const double u = c - cal0;
    if (u > a && u < b) pts.push_back(u);
  }
  for (double c : m.cuts)
    if (c > a && c < b) pts.push_back(c);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  const int gap_slot = m.features.gap_clock_slot();
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double lo = pts[i], hi = pts[i + 1];
    Vector z = features_at(m.features, s, k, cal0, lo, /*zero_gap_slot=*/true);
    const double c = gap_slot >= 0 ? m.gamma[gap_slot] : 0.0;
    const double scale =
        m.rates[static_cast<std::size_t>(m.piece_index(lo))] * std::exp(m.gamma.dot(z));
    total += scale * exp_int0(lo, hi, c);
  }
  return total;
}

RefillHazardModel fit_refill_hazard(const std::vector<SubjectTrajectory>& cohort,
                                    const FeatureSpec& features, const RefillFitOptions& opt,
                                    std::span<const double> subject_weight) {
  if (!subject_weight.empty() && subject_weight.size() != cohort.size())
    throw ValidationError("subject weights must match cohort size");
  const auto weight_of = [&](std::size_t i) {
    return subject_weight.empty() ? 1.0 : subject_weight[i];
  };
  const Eigen::Index q = features.dim();
  const int gap_slot = features.gap_clock_slot();

  // Pool gap records across subjects and refill indices.
  std::vector<Record> records;
  std::vector<double> pooled_gaps;
  double max_epsilon = 0.0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (weight_of(i) <= 0.0) continue;
    const auto& s = cohort[i];
    const GapTimeSet gaps = gap_times(s.dispensations);
    max_epsilon = std::max(max_epsilon, s.dispensations.epsilon);
    for (std::size_t kk = 0; kk < gaps.gaps.size(); ++kk) {
      Record r;
      r.subject = static_cast<int>(i);
      r.k = static_cast<int>(kk) + 1;
      r.gap = gaps.gaps[kk];
      r.weight = weight_of(i);
      records.push_back(std::move(r));
      pooled_gaps.push_back(gaps.gaps[kk]);
    }
  }
  if (records.empty()) throw ValidationError("no gap records to fit");

  std::sort(pooled_gaps.begin(), pooled_gaps.end());
  if (pooled_gaps.back() <= 2.0 * max_epsilon)
    throw ValidationError("all gap times collapse to epsilon; refill hazard degenerate");

  // Baseline cut points: gap quantiles by default, dropping cuts that would
  // leave a piece without events.
  std::vector<double> cuts;
  if (!opt.cuts.empty()) {
    cuts = opt.cuts;
    if (cuts.front() != 0.0) throw ConfigError("explicit baseline cuts must start at 0");
  } else {
    cuts.push_back(0.0);
    const int pieces = std::max(1, opt.baseline_pieces);
    for (int j = 1; j < pieces; ++j) {
      const double qpos = static_cast<double>(j) / pieces * (pooled_gaps.size() - 1);
      const std::size_t lo = static_cast<std::size_t>(qpos);
      const double frac = qpos - static_cast<double>(lo);
      const double qv = lo + 1 < pooled_gaps.size()
                            ? pooled_gaps[lo] * (1 - frac) + pooled_gaps[lo + 1] * frac
                            : pooled_gaps[lo];
      if (qv > cuts.back() &&
          std::upper_bound(pooled_gaps.begin(), pooled_gaps.end(), qv) !=
              pooled_gaps.begin() &&
          *(std::upper_bound(pooled_gaps.begin(), pooled_gaps.end(), qv) - 1) >= cuts.back())
        cuts.push_back(qv);
    }
    // Remove cuts whose left piece would hold no event.
    std::vector<double> kept{0.0};
    for (std::size_t j = 1; j < cuts.size(); ++j) {
      const auto lo = std::lower_bound(pooled_gaps.begin(), pooled_gaps.end(), kept.back());
      const auto hi = std::lower_bound(pooled_gaps.begin(), pooled_gaps.end(), cuts[j]);
      if (hi > lo) kept.push_back(cuts[j]);
    }
    // The final open piece needs an event too.
    while (kept.size() > 1 &&
           std::lower_bound(pooled_gaps.begin(), pooled_gaps.end(), kept.back()) ==
               pooled_gaps.end())
      kept.pop_back();
    cuts = std::move(kept);
  }
  const int n_pieces = static_cast<int>(cuts.size());

  // Build event rows and integration cells.
  for (auto& r : records) {
    const auto& s = cohort[static_cast<std::size_t>(r.subject)];
    const double cal0 =
        s.dispensations.refill_times[static_cast<std::size_t>(r.k - 1)] +
        s.dispensations.coverage_window;
    r.z_event = features_at(features, s, r.k, cal0, r.gap, /*zero_gap_slot=*/false);
    std::vector<double> pts{0.0, r.gap};
    for (double u : covariate_breaks(s, cal0, r.gap)) pts.push_back(u);
    for (double c : cuts)
      if (c > 0.0 && c < r.gap) pts.push_back(c);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    for (std::size_t j = 0; j + 1 < pts.size(); ++j) {
      Cell cell;
      cell.a = pts[j];
      cell.b = pts[j + 1];
      auto it = std::upper_bound(cuts.begin(), cuts.end(), cell.a);
      cell.piece = static_cast<int>(it - cuts.begin()) - 1;
      cell.z = features_at(features, s, r.k, cal0, cell.a, /*zero_gap_slot=*/true);
      r.cells.push_back(std::move(cell));
    }
  }

  // Reject features with no variation across event rows: they are collinear
  // with the baseline and carry no signal.
  for (Eigen::Index j = 0; j < q; ++j) {
    double lo = records.front().z_event[j], hi = lo;
    for (const auto& r : records) {
      lo = std::min(lo, r.z_event[j]);
      hi = std::max(hi, r.z_event[j]);
    }
    if (hi == lo)
      throw ValidationError("refill feature '" + features.terms[static_cast<std::size_t>(j)].name +
                            "' has zero variance");
  }

  // theta = (gamma, log rates); the log-likelihood is concave in theta.
  const Eigen::Index dim = q + n_pieces;
  Vector theta = Vector::Zero(dim);
  {
    // Start the rates at the empirical piecewise-exponential values.
    Vector events = Vector::Zero(n_pieces), exposure = Vector::Zero(n_pieces);
    for (const auto& r : records) {
      auto it = std::upper_bound(cuts.begin(), cuts.end(), r.gap);
      events[static_cast<int>(it - cuts.begin()) - 1] += r.weight;
      for (const auto& cell : r.cells) exposure[cell.piece] += r.weight * (cell.b - cell.a);
    }
    for (int p = 0; p < n_pieces; ++p)
      theta[q + p] = std::log(std::max(events[p], 0.5) / std::max(exposure[p], 1e-12));
  }

  Vector grad(dim);
  Eigen::MatrixXd hess(dim, dim);
  const auto eval = [&](const Vector& th, Vector* g, Eigen::MatrixXd* h) -> double {
    double ll = 0.0;
    if (g) g->setZero();
    if (h) h->setZero();
    const Vector gamma = th.head(q);
    const double c = gap_slot >= 0 ? gamma[gap_slot] : 0.0;
    for (const auto& r : records) {
      const double w = r.weight;
      // event part
      {
        auto it = std::upper_bound(cuts.begin(), cuts.end(), r.gap);
        const int p = static_cast<int>(it - cuts.begin()) - 1;
        const double lin = th[q + p] + gamma.dot(r.z_event);
        ll += w * lin;
        if (g) {
          g->head(q) += w * r.z_event;
          (*g)[q + p] += w;
        }
      }
      // compensator part
      for (const auto& cell : r.cells) {
        const double lin = th[q + cell.piece] + gamma.dot(cell.z);
        if (lin > 500.0) return -std::numeric_limits<double>::infinity();
        const double scale = std::exp(lin);
        const double m0 = scale * exp_int0(cell.a, cell.b, c);
        ll -= w * m0;
        if (!g) continue;
        const double m1 = gap_slot >= 0 ? scale * exp_int1(cell.a, cell.b, c) : 0.0;
        for (Eigen::Index j = 0; j < q; ++j)
          (*g)[j] -= w * (j == gap_slot ? m1 : m0 * cell.z[j]);
        (*g)[q + cell.piece] -= w * m0;
        if (!h) continue;
        const double m2 = gap_slot >= 0 ? scale * exp_int2(cell.a, cell.b, c) : 0.0;
        const auto moment = [&](Eigen::Index j) { return j == gap_slot ? m1 : m0 * cell.z[j]; };
        for (Eigen::Index j = 0; j < q; ++j) {
          for (Eigen::Index l = 0; l <= j; ++l) {
            double v;
            if (j == gap_slot && l == gap_slot)
              v = m2;
            else if (j == gap_slot)
              v = m1 * cell.z[l];
            else if (l == gap_slot)
              v = m1 * cell.z[j];
            else
              v = m0 * cell.z[j] * cell.z[l];
            (*h)(j, l) -= w * v;
          }
          (*h)(q + cell.piece, j) -= w * moment(j);
        }
        (*h)(q + cell.piece, q + cell.piece) -= w * m0;
      }
    }
    return ll;
  };

  double ll = eval(theta, &grad, &hess);
  bool converged = false;
  int it = 0;
  const double gtol = opt.gradient_tol * std::max(1.0, static_cast<double>(records.size()));
  for (; it < opt.max_iterations; ++it) {
    if (grad.lpNorm<Eigen::Infinity>() <= gtol) {
      converged = true;
      break;
    }
    Eigen::MatrixXd neg_h = Eigen::MatrixXd(hess.selfadjointView<Eigen::Lower>()) * -1.0;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
    Vector step = ldlt.solve(grad);
    double scale = 1.0;
    Vector cand;
    double ll_new = -std::numeric_limits<double>::infinity();
    for (int h = 0; h < 40; ++h) {
      cand = theta + scale * step;
      ll_new = eval(cand, nullptr, nullptr);
      if (ll_new > ll - 1e-14 * std::abs(ll)) break;
      scale *= 0.5;
    }
    if (!(ll_new > -std::numeric_limits<double>::infinity())) break;
    theta = cand;
    ll = eval(theta, &grad, &hess);
  }
  if (!converged && grad.lpNorm<Eigen::Infinity>() <= gtol) converged = true;
  if (!converged) {
    std::vector<double> last(theta.data(), theta.data() + theta.size());
    throw ConvergenceError("refill hazard fit did not converge in " +
                               std::to_string(opt.max_iterations) + " iterations",
                           last);
  }

  RefillHazardModel model;
  model.features = features;
  model.gamma = theta.head(q);
  model.cuts = cuts;
  model.rates.resize(static_cast<std::size_t>(n_pieces));
  for (int p = 0; p < n_pieces; ++p)
    model.rates[static_cast<std::size_t>(p)] = std::exp(theta[q + p]);
  model.log_likelihood = ll;
  model.converged = true;
  model.n_records = static_cast<int>(records.size());
  Eigen::MatrixXd neg_h = Eigen::MatrixXd(hess.selfadjointView<Eigen::Lower>()) * -1.0;
  Eigen::MatrixXd cov = neg_h.ldlt().solve(Eigen::MatrixXd::Identity(dim, dim));
  model.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  model.validate();
  return model;
}

}  // namespace ctsftm
