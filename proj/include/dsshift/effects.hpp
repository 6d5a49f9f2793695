#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dsshift/estimator.hpp"

namespace dsshift::fx {

inline double labeled_mean_y(const Dataset& ds) {
  auto rows = est::detail::labeled_rows(ds);
  if (rows.empty()) throw std::invalid_argument("effects: dataset has no labeled rows");
  double s = 0;
  for (auto i : rows) s += ds.y_at(i);
  return s / static_cast<double>(rows.size());
}

struct TaskReport {
  est::EffectReport report;
  double transported_mean = 0.0;  // repeated-regression mean over the target
  double source_mean = 0.0;       // plain labeled mean of the source
};

namespace detail {

// estimate = t_sign * transported_mean + s_sign * source_mean, bootstrapped
// over independent resamples of both tables.
inline TaskReport transported_difference(const Dataset& source, const Dataset& target,
                                         const est::PivotSpec& pivot,
                                         const regress::FitConfig& cfg,
                                         const est::BootstrapConfig& boot, double t_sign,
                                         double s_sign, bool allow_extrapolation) {
  // the replicate refits warm-start from the point-estimate coefficients
  auto point = [&](const Dataset& s, const Dataset& t, bool check,
                   const est::RepeatedRegression* warm, TaskReport* out) {
    auto rr = est::repeated_regression(s, t, pivot, cfg, allow_extrapolation || !check, {}, warm);
    double m = 0;
    for (double v : rr.y_tilde) m += v;
    m /= static_cast<double>(rr.y_tilde.size());
    double sm = labeled_mean_y(s);
    if (out) {
      out->transported_mean = m;
      out->source_mean = sm;
      out->report.overlap = rr.overlap;
      out->report.warning = rr.warning;
    }
    return std::make_pair(t_sign * m + s_sign * sm, std::move(rr));
  };
  TaskReport rep;
  auto [est0, rr0] = point(source, target, true, nullptr, &rep);
  rep.report.estimate = est0;
  rep.report.n_source = static_cast<long>(est::detail::labeled_rows(source).size());
  rep.report.n_target = static_cast<long>(est::detail::sampled_rows(target).size());
  auto br = est::bootstrap(
      [&](std::uint64_t s) {
        Dataset sb = est::resample(source, s, 1);
        Dataset tb = est::resample(target, s, 2);
        return point(sb, tb, false, &rr0, nullptr).first;
      },
      boot);
  rep.report.ci_low = br.ci_low;
  rep.report.ci_high = br.ci_high;
  rep.report.replicates = br.used;
  rep.report.dropped = br.dropped;
  return rep;
}

}  // namespace detail

// T1.a, pre-deployment: tau(theta) from idle labeled data plus unlabeled
// covariates of the prospective deployed domain.
inline TaskReport deployment_effect_pre(const Dataset& source_d0, const Dataset& target_d1,
                                        const est::PivotSpec& pivot,
                                        const regress::FitConfig& cfg = {},
                                        const est::BootstrapConfig& boot = {},
                                        bool allow_extrapolation = false) {
  if (source_d0.domain_d != 0)
    throw std::invalid_argument("deployment_effect_pre: source must come from d=0");
  if (target_d1.domain_d != 1)
    throw std::invalid_argument("deployment_effect_pre: target must come from d=1");
  return detail::transported_difference(source_d0, target_d1, pivot, cfg, boot, +1.0, -1.0,
                                        allow_extrapolation);
}

// T1.b, post-deployment: tau(theta) from deployed labeled data plus unlabeled
// idle covariates.
inline TaskReport deployment_effect_post(const Dataset& source_d1, const Dataset& target_d0,
                                         const est::PivotSpec& pivot,
                                         const regress::FitConfig& cfg = {},
                                         const est::BootstrapConfig& boot = {},
                                         bool allow_extrapolation = false) {
  if (source_d1.domain_d != 1)
    throw std::invalid_argument("deployment_effect_post: source must come from d=1");
  if (target_d0.domain_d != 0)
    throw std::invalid_argument("deployment_effect_post: target must come from d=0");
  return detail::transported_difference(source_d1, target_d0, pivot, cfg, boot, -1.0, +1.0,
                                        allow_extrapolation);
}

// T2: rho(theta_next, theta_t) from the currently deployed domain.
inline TaskReport retraining_effect(const Dataset& source_cur, const Dataset& target_next,
                                    const est::PivotSpec& pivot,
                                    const regress::FitConfig& cfg = {},
                                    const est::BootstrapConfig& boot = {},
                                    bool allow_extrapolation = false) {
  if (source_cur.domain_d != 1 || target_next.domain_d != 1)
    throw std::invalid_argument("retraining_effect: both domains must be deployed (d=1)");
  return detail::transported_difference(source_cur, target_next, pivot, cfg, boot, +1.0, -1.0,
                                        allow_extrapolation);
}

// T3: the bias-corrected baseline predictor E[Y|X, do(D=0)].
inline est::RepeatedRegression baseline_predictor(const Dataset& source_d1,
                                                  const Dataset& target_d0,
                                                  const est::PivotSpec& pivot,
                                                  const regress::FitConfig& cfg = {},
                                                  bool allow_extrapolation = false) {
  if (target_d0.domain_d != 0)
    throw std::invalid_argument("baseline_predictor: target must come from d=0");
  return est::repeated_regression(source_d1, target_d0, pivot, cfg, allow_extrapolation);
}

// Direct regression of y on the feature columns, ignoring domains. As a
// retraining rule this is the naive foil exhibiting performative bias.
inline regress::FittedModel naive_retrain(const Dataset& source,
                                          const std::vector<std::string>& x_names = {"x"},
                                          const regress::FitConfig& cfg = {}) {
  auto rows = est::detail::labeled_rows(source);
  return regress::fit(est::detail::label_vector(source, rows),
                      est::detail::column_matrix(source, x_names, rows), x_names, cfg);
}

// Pointwise deployed-minus-baseline difference on a grid.
inline std::vector<std::pair<double, double>> performative_bias(
    const regress::FittedModel& deployed, const regress::FittedModel& baseline,
    const std::vector<double>& grid) {
  if (deployed.fmap.inputs != baseline.fmap.inputs)
    throw std::invalid_argument("performative_bias: models must share x inputs");
  if (deployed.fmap.inputs.size() != 1)
    throw std::invalid_argument("performative_bias: expected single-feature models");
  std::vector<std::pair<double, double>> out;
  for (double x : grid) {
    Eigen::RowVectorXd r(1);
    r[0] = x;
    out.emplace_back(x, deployed.predict(r) - baseline.predict(r));
  }
  return out;
}

}  // namespace dsshift::fx
