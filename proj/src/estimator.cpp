#include "ctsftm/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ctsftm/exp_integrals.hpp"

namespace ctsftm {

namespace {

// Outcome-feature row [1, terms...] at risk point (s, k, gap u).
void outcome_row(const FeatureSpec& spec, const SubjectTrajectory& s, int k, double u,
                 double* out) {
  const double cal0 = s.dispensations.refill_times[static_cast<std::size_t>(k - 1)] +
                      s.dispensations.coverage_window;
  HistoryView view(s, cal0 + u);
  FeatureContext ctx;
  ctx.history = &view;
  ctx.calendar_time = cal0 + u;
  ctx.gap_time = u;
  ctx.refill_index = k;
  out[0] = 1.0;
  spec.evaluate(ctx, out + 1);
}

Vector c_simple_at(const EstimatorConfig& cfg, const SubjectTrajectory& s, int k, double u) {
  const double cal0 = s.dispensations.refill_times[static_cast<std::size_t>(k - 1)] +
                      s.dispensations.coverage_window;
  const Vector& l = covariate_at(s.covariates, cal0 + u);
  Vector c(cfg.psi_dim());
  c[0] = 1.0;
  if (cfg.effect_modifiers.dim() > 0) cfg.effect_modifiers.fill(l, c.data() + 1);
  return cfg.c_scale * c;
}

}  // namespace

double ipcw_weight(const SubjectTrajectory& s, const CensoringCoxModel& cm,
                   double positivity_floor) {
  if (s.event_indicator == 0) return 0.0;
  return 1.0 / censoring_survival(cm, s, s.followup_time, positivity_floor);
}

double conditional_mean_U(const OutcomeRegressionModel& orm, const SubjectTrajectory& s,
                          int k, double u) {
  if (orm.xi.size() != 1 + orm.features.dim())
    throw Error("outcome regression coefficient/feature dimension mismatch");
  Vector x(orm.xi.size());
  outcome_row(orm.features, s, k, u, x.data());
  return orm.xi.dot(x);
}

Vector c_opt(const GradientRegressionModel& gm, double residual_variance,
             double variance_floor, const SubjectTrajectory& s, int k, double u) {
  Vector x(gm.coef.rows());
  outcome_row(gm.features, s, k, u, x.data());
  const double v = std::max(residual_variance, variance_floor);
  return (gm.coef.transpose() * x) / (v * kJumpCorrectionFactor);
}

// ---------------------------------------------------------------------------
// Engine internals
// ---------------------------------------------------------------------------

struct EstimationEngine::Impl {
  const std::vector<SubjectTrajectory>* cohort = nullptr;
  const EstimatorConfig* cfg = nullptr;

  // geometry fixed at construction
  FeatureSpec refill_features;
  std::vector<double> cuts;
  int refill_gap_slot = -1;
  Eigen::Index qx = 0;  // outcome design dimension incl. intercept
  Eigen::Index p = 0;

  struct Subject {
    int delta = 0;
    double tau = 0.0;
    std::size_t row_begin = 0, row_end = 0;
    int segment_rows = 0;  // R_i
    std::vector<double> treated_len;
    Eigen::MatrixXd treated_g;  // n_treated x dim(g)
    Vector sx;                  // sum of segment-row x
    Eigen::MatrixXd sxx;        // sum of x x' over segment rows
  };
  std::vector<Subject> subjects;

  // flat rows (uncensored subjects only)
  std::vector<int> row_subject;
  std::vector<int> row_k;
  std::vector<double> row_a, row_b;
  std::vector<std::uint8_t> row_jump;
  std::vector<int> row_piece;
  Eigen::MatrixXd row_x;      // qx x n_rows
  Eigen::MatrixXd row_c;      // p x n_rows (scaled simple index)
  Eigen::MatrixXd row_zrest;  // qr x n_rows, gap slot zeroed

  // bound state
  std::vector<double> row_mass;
  std::vector<double> mult;        // subject multiplicity
  std::vector<double> ipcw;        // Delta / S_C
  std::vector<double> row_weight;  // mult * ipcw / R_i (segment rows; 0 for jumps)
  double total_mult = 0.0;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> design_cod;

  // per-psi state
  Vector psi_cache;
  std::vector<double> u_value;        // U_i(psi)
  Eigen::MatrixXd grad_value;         // p x n subjects
  Vector xi;                          // outcome coefficients
  Eigen::MatrixXd gradient_coef;      // qx x p
  double residual_variance = 0.0;
  bool have_psi = false;

  void build();
  void bind(const RefillHazardModel& refill, const CensoringCoxModel& censoring,
            std::span<const double> multiplicity);
  void refit(const Vector& psi);
  Vector ee_subject(std::size_t i) const;
  Vector ee_mean(const Vector& psi);
  Eigen::MatrixXd jacobian(const Vector& psi);
};

void EstimationEngine::Impl::build() {
  const auto& cs = *cohort;
  const auto& c = *cfg;
  p = c.psi_dim();
  qx = 1 + c.outcome_features.dim();
  const Eigen::Index qr = refill_features.dim();
  refill_gap_slot = refill_features.gap_clock_slot();

  subjects.resize(cs.size());
  std::size_t n_rows = 0;

  // first pass: count rows
  for (std::size_t i = 0; i < cs.size(); ++i) {
    subjects[i].delta = cs[i].event_indicator;
    subjects[i].tau = cs[i].followup_time;
    if (cs[i].event_indicator == 0) continue;
    const GapTimeSet gaps = gap_times(cs[i].dispensations);
    for (std::size_t kk = 0; kk < gaps.gaps.size(); ++kk) {
      const double gap = gaps.gaps[kk];
      const double cal0 =
          cs[i].dispensations.refill_times[kk] + cs[i].dispensations.coverage_window;
      std::size_t segs = 1;
      for (double t : cs[i].covariates.change_times)
        if (t - cal0 > 0.0 && t - cal0 < gap) ++segs;
      for (double t : cuts)
        if (t > 0.0 && t < gap) ++segs;
      n_rows += segs + 1;  // + jump row
    }
  }

  row_subject.reserve(n_rows);
  row_k.reserve(n_rows);
  row_a.reserve(n_rows);
  row_b.reserve(n_rows);
  row_jump.reserve(n_rows);
  row_piece.reserve(n_rows);
  row_x.resize(qx, static_cast<Eigen::Index>(n_rows));
  row_c.resize(p, static_cast<Eigen::Index>(n_rows));
  row_zrest.resize(qr, static_cast<Eigen::Index>(n_rows));

  std::vector<double> pts;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    auto& sub = subjects[i];
    sub.row_begin = row_subject.size();
    if (sub.delta == 1) {
      const auto& s = cs[i];
      // exposure geometry for U(psi)
      const auto segs = exposure_segments(s.covariates, s.dispensations, s.followup_time);
      std::size_t n_treated = 0;
      for (const auto& sg : segs)
        if (sg.treated) ++n_treated;
      sub.treated_len.reserve(n_treated);
      sub.treated_g.resize(static_cast<Eigen::Index>(n_treated), c.effect_modifiers.dim());
      Eigen::Index trow = 0;
      for (const auto& sg : segs) {
        if (!sg.treated) continue;
        sub.treated_len.push_back(sg.end - sg.start);
        if (c.effect_modifiers.dim() > 0) {
          const Vector& l = s.covariates.values[static_cast<std::size_t>(sg.covariate_index)];
          std::vector<double> buf(static_cast<std::size_t>(c.effect_modifiers.dim()));
          c.effect_modifiers.fill(l, buf.data());
          for (Eigen::Index j = 0; j < c.effect_modifiers.dim(); ++j)
            sub.treated_g(trow, j) = buf[static_cast<std::size_t>(j)];
        }
        ++trow;
      }

      // risk rows
      const GapTimeSet gaps = gap_times(s.dispensations);
      for (std::size_t kk = 0; kk < gaps.gaps.size(); ++kk) {
        const int k = static_cast<int>(kk) + 1;
        const double gap = gaps.gaps[kk];
        const double cal0 =
            s.dispensations.refill_times[kk] + s.dispensations.coverage_window;
        pts.clear();
        pts.push_back(0.0);
        pts.push_back(gap);
        for (double t : s.covariates.change_times) {
          const double u = t - cal0;
          if (u > 0.0 && u < gap) pts.push_back(u);
        }
        for (double t : cuts)
          if (t > 0.0 && t < gap) pts.push_back(t);
        std::sort(pts.begin(), pts.end());
        pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

        const auto add_row = [&](double a, double b, bool jump) {
          const std::size_t r = row_subject.size();
          row_subject.push_back(static_cast<int>(i));
          row_k.push_back(k);
          row_a.push_back(a);
          row_b.push_back(b);
          row_jump.push_back(jump ? 1 : 0);
          const double eval_u = jump ? a : 0.5 * (a + b);
          auto it = std::upper_bound(cuts.begin(), cuts.end(), a);
          row_piece.push_back(static_cast<int>(it - cuts.begin()) - 1);
          outcome_row(c.outcome_features, s, k, eval_u,
                      row_x.col(static_cast<Eigen::Index>(r)).data());
          row_c.col(static_cast<Eigen::Index>(r)) = c_simple_at(c, s, k, eval_u);
          if (qr > 0 && !jump) {
            HistoryView view(s, cal0 + a);
            FeatureContext ctx;
            ctx.history = &view;
            ctx.calendar_time = cal0 + a;
            ctx.gap_time = a;
            ctx.refill_index = k;
            refill_features.evaluate(ctx, row_zrest.col(static_cast<Eigen::Index>(r)).data());
            if (refill_gap_slot >= 0)
              row_zrest(refill_gap_slot, static_cast<Eigen::Index>(r)) = 0.0;
          } else if (qr > 0) {
            row_zrest.col(static_cast<Eigen::Index>(r)).setZero();
          }
        };
        for (std::size_t j = 0; j + 1 < pts.size(); ++j)
          add_row(pts[j], pts[j + 1], false);
        add_row(gap, gap, true);
      }
    }
    sub.row_end = row_subject.size();
    sub.segment_rows = 0;
    sub.sx = Vector::Zero(qx);
    sub.sxx = Eigen::MatrixXd::Zero(qx, qx);
    for (std::size_t r = sub.row_begin; r < sub.row_end; ++r) {
      if (row_jump[r]) continue;
      ++sub.segment_rows;
      const auto x = row_x.col(static_cast<Eigen::Index>(r));
      sub.sx += x;
      sub.sxx.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0);
    }
    sub.sxx = sub.sxx.selfadjointView<Eigen::Lower>();
  }

  row_mass.assign(row_subject.size(), 0.0);
  u_value.assign(cs.size(), 0.0);
  grad_value.resize(p, static_cast<Eigen::Index>(cs.size()));
}

void EstimationEngine::Impl::bind(const RefillHazardModel& refill,
                                  const CensoringCoxModel& censoring,
                                  std::span<const double> multiplicity) {
  const auto& cs = *cohort;
  if (!multiplicity.empty() && multiplicity.size() != cs.size())
    throw ValidationError("multiplicity vector must match cohort size");
  if (refill.cuts != cuts || refill.features.names() != refill_features.names())
    throw LeakageError("engine bound to a refill model with different geometry");

  mult.assign(cs.size(), 1.0);
  if (!multiplicity.empty()) mult.assign(multiplicity.begin(), multiplicity.end());
  total_mult = std::accumulate(mult.begin(), mult.end(), 0.0);

  ipcw.assign(cs.size(), 0.0);
  double uncensored_mass = 0.0;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (mult[i] <= 0.0) continue;
    if (cs[i].event_indicator == 1) {
      ipcw[i] = ipcw_weight(cs[i], censoring, cfg->positivity_floor);
      uncensored_mass += mult[i];
    }
  }
  if (uncensored_mass <= 0.0) throw ValidationError("no uncensored subjects");

  // compensator masses
  const double c_u = refill_gap_slot >= 0 ? refill.gamma[refill_gap_slot] : 0.0;
  for (std::size_t r = 0; r < row_subject.size(); ++r) {
    if (row_jump[r]) {
      row_mass[r] = 0.0;
      continue;
    }
    const double lin = refill_features.dim() > 0
                           ? refill.gamma.dot(row_zrest.col(static_cast<Eigen::Index>(r)))
                           : 0.0;
    row_mass[r] = refill.rates[static_cast<std::size_t>(row_piece[r])] * std::exp(lin) *
                  exp_int0(row_a[r], row_b[r], c_u);
  }

  // row weights and the psi-free Gram matrix of the Step-3 design
  row_weight.assign(row_subject.size(), 0.0);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(qx, qx);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const auto& sub = subjects[i];
    if (sub.delta != 1 || mult[i] <= 0.0 || sub.segment_rows == 0) continue;
    const double u = mult[i] * ipcw[i] / sub.segment_rows;
    for (std::size_t r = sub.row_begin; r < sub.row_end; ++r)
      if (!row_jump[r]) row_weight[r] = u;
    gram += u * sub.sxx;
  }
  design_cod.compute(gram);
  have_psi = false;
}

void EstimationEngine::Impl::refit(const Vector& psi) {
  const auto& cs = *cohort;
  const auto& c = *cfg;
  if (psi.size() != p) throw Error("psi dimension mismatch");
  const double psi1 = psi[0];

  Vector b = Vector::Zero(qx);
  Eigen::MatrixXd bg;
  const bool optimal = c.index_choice == EstimatorConfig::IndexChoice::optimal;
  if (optimal) bg = Eigen::MatrixXd::Zero(qx, p);

  for (std::size_t i = 0; i < cs.size(); ++i) {
    const auto& sub = subjects[i];
    if (sub.delta != 1) continue;
    // U_i(psi) = tau + sum len * expm1(theta); gradient = len * exp(theta) * (1, g)'
    double extra = 0.0;
    Vector gr = Vector::Zero(p);
    for (std::size_t t = 0; t < sub.treated_len.size(); ++t) {
      double theta = psi1;
      for (Eigen::Index j = 0; j + 1 < p; ++j)
        theta += psi[1 + j] * sub.treated_g(static_cast<Eigen::Index>(t), j);
      if (!(std::abs(theta) <= kMaxExponent))
        throw OverflowError("exponent exceeds clamp during estimation");
      const double em1 = std::expm1(theta);
      extra += sub.treated_len[t] * em1;
      const double coef = sub.treated_len[t] * (1.0 + em1);
      gr[0] += coef;
      for (Eigen::Index j = 0; j + 1 < p; ++j)
        gr[1 + j] += coef * sub.treated_g(static_cast<Eigen::Index>(t), j);
    }
    u_value[i] = sub.tau + extra;
    grad_value.col(static_cast<Eigen::Index>(i)) = gr;
    if (mult[i] <= 0.0 || sub.segment_rows == 0) continue;
    const double u = mult[i] * ipcw[i] / sub.segment_rows;
    b += (u * u_value[i]) * sub.sx;
    if (optimal) bg += u * sub.sx * gr.transpose();
  }

  xi = design_cod.solve(b);
  if (optimal) gradient_coef = design_cod.solve(bg);

  // pooled IPCW-weighted residual variance of the outcome regression
  double rss = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const auto& sub = subjects[i];
    if (sub.delta != 1 || mult[i] <= 0.0 || sub.segment_rows == 0) continue;
    const double u = mult[i] * ipcw[i] / sub.segment_rows;
    const double ui = u_value[i];
    rss += u * (sub.segment_rows * ui * ui - 2.0 * ui * xi.dot(sub.sx) +
                xi.dot(sub.sxx * xi));
    wsum += u * sub.segment_rows;
  }
  residual_variance = wsum > 0.0 ? std::max(rss / wsum, 0.0) : 0.0;

  psi_cache = psi;
  have_psi = true;
}

Vector EstimationEngine::Impl::ee_subject(std::size_t i) const {
  const auto& sub = subjects[i];
  Vector out = Vector::Zero(p);
  if (sub.delta != 1) return out;
  const bool optimal = cfg->index_choice == EstimatorConfig::IndexChoice::optimal;
  const double v = optimal ? std::max(residual_variance, cfg->variance_floor) : 1.0;
  const double ui = u_value[i];
  for (std::size_t r = sub.row_begin; r < sub.row_end; ++r) {
    const auto x = row_x.col(static_cast<Eigen::Index>(r));
    const double resid = ui - xi.dot(x);
    Vector cvec = optimal ? Vector((gradient_coef.transpose() * x) / v)
                          : Vector(row_c.col(static_cast<Eigen::Index>(r)));
    if (row_jump[r])
      out += cvec * resid;
    else
      out -= cvec * (resid * row_mass[r]);
  }
  return ipcw[i] * out;
}

Vector EstimationEngine::Impl::ee_mean(const Vector& psi) {
  const bool cached =
      have_psi && psi_cache.size() == psi.size() && (psi_cache.array() == psi.array()).all();
  if (!cached) refit(psi);
  Vector sum = Vector::Zero(p);
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (mult[i] <= 0.0 || subjects[i].delta != 1) continue;
    sum += mult[i] * ee_subject(i);
  }
  return sum / total_mult;
}

Eigen::MatrixXd EstimationEngine::Impl::jacobian(const Vector& psi) {
  Eigen::MatrixXd J(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = 1e-5 * (1.0 + std::abs(psi[j]));
    Vector hi = psi, lo = psi;
    hi[j] += h;
    lo[j] -= h;
    J.col(j) = (ee_mean(hi) - ee_mean(lo)) / (2.0 * h);
  }
  return J;
}

// ---------------------------------------------------------------------------

EstimationEngine::EstimationEngine(const std::vector<SubjectTrajectory>& cohort,
                                   const EstimatorConfig& cfg,
                                   const RefillHazardModel& refill,
                                   const CensoringCoxModel& censoring)
    : impl_(std::make_unique<Impl>()) {
  impl_->cohort = &cohort;
  impl_->cfg = &cfg;
  impl_->refill_features = refill.features;
  impl_->cuts = refill.cuts;
  if (!cohort.empty()) {
    cfg.effect_modifiers.validate(cohort.front().covariates.dim());
  }
  impl_->build();
  impl_->bind(refill, censoring, {});
}

EstimationEngine::~EstimationEngine() = default;
EstimationEngine::EstimationEngine(EstimationEngine&&) noexcept = default;

void EstimationEngine::bind(const RefillHazardModel& refill, const CensoringCoxModel& censoring,
                            std::span<const double> multiplicity) {
  impl_->bind(refill, censoring, multiplicity);
}

Vector EstimationEngine::ee_mean(const Vector& psi) { return impl_->ee_mean(psi); }

Vector EstimationEngine::ee_subject(std::size_t subject) const {
  if (!impl_->have_psi) throw Error("ee_subject before any ee_mean evaluation");
  return impl_->ee_subject(subject);
}

OutcomeRegressionModel EstimationEngine::outcome_model() const {
  if (!impl_->have_psi) throw Error("outcome_model before any ee_mean evaluation");
  OutcomeRegressionModel m;
  m.features = impl_->cfg->outcome_features;
  m.xi = impl_->xi;
  m.residual_variance = impl_->residual_variance;
  m.fitted_at = impl_->psi_cache;
  return m;
}

std::optional<GradientRegressionModel> EstimationEngine::gradient_model() const {
  if (impl_->cfg->index_choice != EstimatorConfig::IndexChoice::optimal) return std::nullopt;
  if (!impl_->have_psi) throw Error("gradient_model before any ee_mean evaluation");
  GradientRegressionModel m;
  m.features = impl_->cfg->outcome_features;
  m.coef = impl_->gradient_coef;
  m.fitted_at = impl_->psi_cache;
  return m;
}

double EstimationEngine::total_ipcw_weight() const {
  double s = 0.0;
  for (std::size_t i = 0; i < impl_->ipcw.size(); ++i) s += impl_->mult[i] * impl_->ipcw[i];
  return s;
}

SolveOutcome EstimationEngine::solve(const Vector& initial) {
  auto& im = *impl_;
  const auto& c = *im.cfg;
  SolveOutcome out;
  Vector psi = initial;
  Vector f = im.ee_mean(psi);
  double norm = f.norm();
  out.trace.push_back(norm);

  int iter = 0;
  for (; iter < c.max_iterations; ++iter) {
    if (norm <= c.newton_tol) {
      out.converged = true;
      break;
    }
    Eigen::MatrixXd J = im.jacobian(psi);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (lu.rank() < im.p)
      throw NonIdentifiabilityError(
          "estimating-equation Jacobian is singular; the parameter is not identified "
          "(no usable treatment variation or a degenerate effect modifier)");
    Vector step = lu.solve(-f);
    double scale = 1.0;
    bool accepted = false;
    Vector cand, fc;
    double nc = std::numeric_limits<double>::infinity();
    for (int h = 0; h <= c.step_halving_limit; ++h) {
      cand = psi + scale * step;
      try {
        fc = im.ee_mean(cand);
        nc = fc.norm();
      } catch (const OverflowError&) {
        nc = std::numeric_limits<double>::infinity();
      }
      if (nc < norm) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) {
      std::vector<double> last(psi.data(), psi.data() + psi.size());
      throw ConvergenceError(
          "Newton step halving exhausted without decreasing the estimating equation", last);
    }
    psi = cand;
    f = fc;
    norm = nc;
    out.trace.push_back(norm);
  }
  out.psi = psi;
  out.ee_norm = norm;
  out.iterations = iter;
  if (!out.converged && norm <= c.newton_tol) out.converged = true;

  if (out.converged && iter == 0) {
    // Converged without ever forming a Jacobian: verify identifiability so a
    // degenerate cohort (estimating equation flat in psi) is not reported as
    // a solution.
    Eigen::MatrixXd J = im.jacobian(psi);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (lu.rank() < im.p)
      throw NonIdentifiabilityError(
          "estimating equation is flat in psi; the parameter is not identified");
    im.ee_mean(psi);  // restore cached regressions at the solution
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reference implementations (spec-shaped public operations)
// ---------------------------------------------------------------------------

namespace {

EstimatorConfig with_index(const EstimatorConfig& cfg, EstimatorConfig::IndexChoice idx) {
  EstimatorConfig c = cfg;
  c.index_choice = idx;
  return c;
}

}  // namespace

OutcomeRegressionModel fit_outcome_regression(const std::vector<SubjectTrajectory>& cohort,
                                              const PsiVector& psi,
                                              const RefillHazardModel& refill,
                                              const CensoringCoxModel& censoring,
                                              const EstimatorConfig& cfg,
                                              std::span<const double> multiplicity) {
  EstimationEngine engine(cohort, cfg, refill, censoring);
  if (!multiplicity.empty()) engine.bind(refill, censoring, multiplicity);
  engine.ee_mean(psi.as_vector());
  return engine.outcome_model();
}

GradientRegressionModel fit_gradient_regression(const std::vector<SubjectTrajectory>& cohort,
                                                const PsiVector& psi,
                                                const RefillHazardModel& refill,
                                                const CensoringCoxModel& censoring,
                                                const EstimatorConfig& cfg,
                                                std::span<const double> multiplicity) {
  const EstimatorConfig c = with_index(cfg, EstimatorConfig::IndexChoice::optimal);
  EstimationEngine engine(cohort, c, refill, censoring);
  if (!multiplicity.empty()) engine.bind(refill, censoring, multiplicity);
  engine.ee_mean(psi.as_vector());
  return *engine.gradient_model();
}

Vector estimating_function(const PsiVector& psi, const SubjectTrajectory& s,
                           const NuisanceSet& nuis, const EstimatorConfig& cfg) {
  const Eigen::Index p = cfg.psi_dim();
  if (s.event_indicator == 0) return Vector::Zero(p);
  const bool optimal = cfg.index_choice == EstimatorConfig::IndexChoice::optimal;
  if (optimal && !nuis.gradient)
    throw Error("optimal index requires a fitted gradient regression");

  const double w = ipcw_weight(s, nuis.censoring, cfg.positivity_floor);
  const double u_of_psi = mimicking_time(s, psi, cfg.effect_modifiers, s.followup_time);
  const MartingaleIncrements inc = martingale_increments(s, nuis.refill);

  Vector out = Vector::Zero(p);
  for (const auto& g : inc.gaps) {
    const auto point = [&](double u) {
      const double m = conditional_mean_U(nuis.outcome, s, g.k, u);
      const Vector c = optimal
                           ? c_opt(*nuis.gradient, nuis.outcome.residual_variance,
                                   cfg.variance_floor, s, g.k, u)
                           : c_simple_at(cfg, s, g.k, u);
      return std::make_pair(m, c);
    };
    {
      const auto [m, c] = point(g.jump_time);
      out += c * (u_of_psi - m);
    }
    for (const auto& seg : g.segments) {
      const auto [m, c] = point(0.5 * (seg.start + seg.end));
      out -= c * ((u_of_psi - m) * seg.mass);
    }
  }
  return w * out;
}

EstimationResult solve_psi(const std::vector<SubjectTrajectory>& cohort,
                           const RefillHazardModel& refill,
                           const CensoringCoxModel& censoring, const EstimatorConfig& cfg) {
  EstimationEngine engine(cohort, cfg, refill, censoring);
  Vector initial = cfg.initial_psi.value_or(Vector::Zero(cfg.psi_dim()));
  if (initial.size() != cfg.psi_dim())
    throw ConfigError("initial psi dimension does not match 1 + dim(g)");
  SolveOutcome so = engine.solve(initial);
  if (!so.converged) {
    std::ostringstream msg;
    msg << "psi solver did not converge in " << so.iterations
        << " iterations; final |EE| = " << so.ee_norm;
    throw ConvergenceError(msg.str(),
                           std::vector<double>(so.psi.data(), so.psi.data() + so.psi.size()));
  }
  EstimationResult res;
  res.psi_hat = PsiVector::from_vector(so.psi);
  res.ee_norm = so.ee_norm;
  res.iterations = so.iterations;
  res.converged = so.converged;
  return res;
}

BootstrapSummary bootstrap_from_draws(const Eigen::MatrixXd& draws, double level) {
  BootstrapSummary out;
  const Eigen::Index b = draws.rows(), p = draws.cols();
  out.replicates = static_cast<int>(b);
  out.se = Vector::Zero(p);
  out.ci.assign(static_cast<std::size_t>(p), {0.0, 0.0});
  if (b < 2) return out;
  const double alpha = (1.0 - level) / 2.0;
  std::vector<double> col(static_cast<std::size_t>(b));
  for (Eigen::Index j = 0; j < p; ++j) {
    double mean = draws.col(j).mean();
    double ss = (draws.col(j).array() - mean).square().sum();
    out.se[j] = std::sqrt(ss / static_cast<double>(b - 1));
    for (Eigen::Index i = 0; i < b; ++i) col[static_cast<std::size_t>(i)] = draws(i, j);
    std::sort(col.begin(), col.end());
    const auto quantile = [&](double q) {
      const double h = q * static_cast<double>(b - 1);
      const std::size_t lo = static_cast<std::size_t>(h);
      const double frac = h - static_cast<double>(lo);
      return lo + 1 < col.size() ? col[lo] * (1.0 - frac) + col[lo + 1] * frac : col[lo];
    };
    out.ci[static_cast<std::size_t>(j)] = {quantile(alpha), quantile(1.0 - alpha)};
  }
  return out;
}

}  // namespace ctsftm
