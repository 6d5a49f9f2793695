#pragma once

#include <string>
#include <vector>

#include "dsshift/estimator.hpp"
#include "dsshift/scm.hpp"

namespace dsshift::sel {

// The analyst's view of a selectively sampled table: units with s_sample = 0
// never reach the dataset; rows with s_label = 0 stay but keep y masked.
inline Dataset observe(const Dataset& ds) {
  Dataset out = ds;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (ds.s_sample[i]) keep.push_back(i);
  for (auto& col : out.data) {
    std::vector<double> c;
    c.reserve(keep.size());
    for (auto i : keep) c.push_back(col[i]);
    col = std::move(c);
  }
  auto take = [&](auto& v) {
    std::decay_t<decltype(v)> w;
    w.reserve(keep.size());
    for (auto i : keep) w.push_back(v[i]);
    v = std::move(w);
  };
  take(out.s_sample);
  take(out.s_label);
  take(out.y);
  take(out.y_obs);
  return out;
}

// Covariate view of the full population: selection gates the measurement of
// Y, not the scoring of units, so every row is retained and y is masked.
inline Dataset unselected(const Dataset& ds) {
  Dataset out = ds;
  std::fill(out.s_sample.begin(), out.s_sample.end(), std::uint8_t{1});
  std::fill(out.s_label.begin(), out.s_label.end(), std::uint8_t{0});
  std::fill(out.y_obs.begin(), out.y_obs.end(), std::uint8_t{0});
  std::fill(out.y.begin(), out.y.end(), 0.0);
  return out;
}

// Mediators on the selection-to-outcome path, read off the scenario roles.
inline std::vector<std::string> selection_mediators(const Scenario& sc) {
  std::vector<std::string> v;
  for (const auto& n : sc.nodes)
    if (n.role == Role::Mediator) v.push_back(n.name);
  return v;
}

struct CorrectedEstimate {
  est::RepeatedRegression rr;
  std::string warning;  // pivot-coverage warning, if any
};

// Corrected two-stage estimate under selection: the inner model is fit on the
// selected (S = 1) labeled view of the source, the outer stage is the plain
// repeated regression over the full (unselected) target population. With S
// identically 1 this reduces exactly to est::repeated_regression.
inline CorrectedEstimate corrected_estimate(const Dataset& source, const Dataset& target,
                                            const est::PivotSpec& pivot,
                                            const std::vector<std::string>& mediators = {},
                                            const regress::FitConfig& cfg = {},
                                            bool allow_extrapolation = false,
                                            const est::BinningConfig& bins = {}) {
  CorrectedEstimate ce;
  for (const auto& m : mediators) {
    bool covered = false;
    for (const auto& n : pivot.all())
      if (n == m) covered = true;
    if (!covered) {
      if (!ce.warning.empty()) ce.warning += "; ";
      ce.warning += "pivot excludes selection-relevant variable '" + m + "'";
    }
  }
  ce.rr = est::repeated_regression(observe(source), unselected(target), pivot, cfg,
                                   allow_extrapolation, bins);
  return ce;
}

// Mean-effect flavor of the correction, bootstrapped like est::estimate_mean.
inline est::EffectReport corrected_mean(const Dataset& source, const Dataset& target,
                                        const est::PivotSpec& pivot,
                                        const std::vector<std::string>& mediators = {},
                                        const regress::FitConfig& cfg = {},
                                        const est::BootstrapConfig& boot = {},
                                        bool allow_extrapolation = false,
                                        const est::BinningConfig& bins = {}) {
  auto rep = est::estimate_mean(observe(source), unselected(target), pivot, cfg, boot,
                                allow_extrapolation, bins);
  for (const auto& m : mediators) {
    bool covered = false;
    for (const auto& n : pivot.all())
      if (n == m) covered = true;
    if (!covered) {
      if (!rep.warning.empty()) rep.warning += "; ";
      rep.warning += "pivot excludes selection-relevant variable '" + m + "'";
    }
  }
  return rep;
}

}  // namespace dsshift::sel
