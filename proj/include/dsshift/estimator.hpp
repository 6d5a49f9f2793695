#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsshift/dataset.hpp"
#include "dsshift/regress.hpp"
#include "dsshift/rng.hpp"

namespace dsshift::est {

struct PivotSpec {
  std::vector<std::string> x_names;
  std::vector<std::string> z_names;  // may be empty

  void validate_against(const Dataset& ds) const {
    for (const auto& n : x_names)
      if (!ds.has(n)) throw std::invalid_argument("pivot: unknown column '" + n + "'");
    for (const auto& n : z_names) {
      if (!ds.has(n)) throw std::invalid_argument("pivot: unknown column '" + n + "'");
      for (const auto& x : x_names)
        if (x == n) throw std::invalid_argument("pivot: '" + n + "' appears in both X and Z");
    }
  }

  std::vector<std::string> all() const {
    std::vector<std::string> v = x_names;
    v.insert(v.end(), z_names.begin(), z_names.end());
    return v;
  }
};

struct BinningConfig {
  int quantile_bins = 10;
};

struct OverlapViolation {
  std::vector<int> x_bins;
  std::vector<double> z;
  std::string describe(const PivotSpec& pivot) const {
    std::ostringstream os;
    os << "(";
    for (std::size_t j = 0; j < x_bins.size(); ++j)
      os << pivot.x_names[j] << "-bin=" << x_bins[j] << (j + 1 < x_bins.size() ? ", " : "");
    for (std::size_t j = 0; j < z.size(); ++j) os << ", " << pivot.z_names[j] << "=" << z[j];
    os << ")";
    return os.str();
  }
};

struct OverlapReport {
  int strata_checked = 0;
  std::vector<OverlapViolation> violations;
  double worst_ratio = 1.0;  // min source/target mass ratio over target strata
};

struct OverlapError : std::runtime_error {
  OverlapReport report;
  explicit OverlapError(OverlapReport r, const std::string& what)
      : std::runtime_error(what), report(std::move(r)) {}
};

namespace detail {

// Rows usable for fitting: sampled and labeled.
inline std::vector<std::size_t> labeled_rows(const Dataset& ds) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (ds.s_sample[i] && ds.s_label[i]) idx.push_back(i);
  return idx;
}

inline std::vector<std::size_t> sampled_rows(const Dataset& ds) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (ds.s_sample[i]) idx.push_back(i);
  return idx;
}

inline Eigen::MatrixXd column_matrix(const Dataset& ds, const std::vector<std::string>& names,
                                     const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto& c = ds.col(names[j]);
    for (std::size_t i = 0; i < rows.size(); ++i)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c[rows[i]];
  }
  return m;
}

inline Eigen::VectorXd label_vector(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    y[static_cast<Eigen::Index>(i)] = ds.y_at(rows[i]);
  return y;
}

// Source-quantile bin edges; values are clamped into the outer bins.
inline std::vector<double> quantile_edges(std::vector<double> v, int q) {
  std::sort(v.begin(), v.end());
  std::vector<double> edges;
  for (int k = 1; k < q; ++k) {
    double pos = static_cast<double>(k) / q * (static_cast<double>(v.size()) - 1);
    auto lo = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    double e = v[lo] + frac * (v[std::min(lo + 1, v.size() - 1)] - v[lo]);
    edges.push_back(e);
  }
  return edges;
}

inline int bin_of(double x, const std::vector<double>& edges) {
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
}

}  // namespace detail

// Support check for the transport: every (x-bin, z)-stratum occupied by the
// target must carry source mass. x columns are binned by source quantiles
// (clamped at the ends); z columns stratify by exact value.
inline OverlapReport check_overlap(const Dataset& source, const Dataset& target,
                                   const PivotSpec& pivot, const BinningConfig& cfg = {}) {
  pivot.validate_against(source);
  pivot.validate_against(target);
  auto src_rows = detail::labeled_rows(source);
  auto tgt_rows = detail::sampled_rows(target);
  if (src_rows.empty()) throw std::invalid_argument("check_overlap: source has no labeled rows");

  std::vector<std::vector<double>> edges;
  for (const auto& xn : pivot.x_names) {
    std::vector<double> v;
    for (auto i : src_rows) v.push_back(source.col(xn)[i]);
    edges.push_back(detail::quantile_edges(std::move(v), cfg.quantile_bins));
  }

  auto key_of = [&](const Dataset& ds, std::size_t i) {
    std::pair<std::vector<int>, std::vector<double>> key;
    for (std::size_t j = 0; j < pivot.x_names.size(); ++j)
      key.first.push_back(detail::bin_of(ds.col(pivot.x_names[j])[i], edges[j]));
    for (const auto& zn : pivot.z_names) key.second.push_back(ds.col(zn)[i]);
    return key;
  };

  std::map<std::pair<std::vector<int>, std::vector<double>>, double> src_mass, tgt_mass;
  for (auto i : src_rows) src_mass[key_of(source, i)] += 1.0 / static_cast<double>(src_rows.size());
  for (auto i : tgt_rows) tgt_mass[key_of(target, i)] += 1.0 / static_cast<double>(tgt_rows.size());

  OverlapReport rep;
  rep.strata_checked = static_cast<int>(tgt_mass.size());
  for (const auto& [key, tw] : tgt_mass) {
    auto it = src_mass.find(key);
    double sw = it == src_mass.end() ? 0.0 : it->second;
    if (sw <= 0.0) {
      rep.violations.push_back({key.first, key.second});
      rep.worst_ratio = 0.0;
    } else {
      rep.worst_ratio = std::min(rep.worst_ratio, sw / tw);
    }
  }
  return rep;
}

struct RepeatedRegression {
  regress::FittedModel inner;  // E[Y | X, Z] on the source
  regress::FittedModel outer;  // E[Y | X] under the target domain
  std::vector<double> y_tilde;  // pseudo-labels, aligned with target sampled rows
  std::vector<std::size_t> target_rows;
  OverlapReport overlap;
  std::string warning;
};

// Two-stage estimator: fit Y ~ (X, Z) on labeled source rows,
// pseudo-label the target, then fit the pseudo-labels on X over the target.
inline RepeatedRegression repeated_regression(const Dataset& source, const Dataset& target,
                                              const PivotSpec& pivot,
                                              const regress::FitConfig& cfg = {},
                                              bool allow_extrapolation = false,
                                              const BinningConfig& bins = {},
                                              const RepeatedRegression* warm = nullptr) {
  pivot.validate_against(source);
  pivot.validate_against(target);
  RepeatedRegression rr;
  if (pivot.z_names.empty() && source.domain_d == target.domain_d &&
      source.theta_id == target.theta_id)
    rr.warning = "degenerate: reduces to direct regression";

  rr.overlap = check_overlap(source, target, pivot, bins);
  if (!rr.overlap.violations.empty() && !allow_extrapolation) {
    std::ostringstream os;
    os << "overlap violated in " << rr.overlap.violations.size()
       << " target strata, e.g. " << rr.overlap.violations.front().describe(pivot);
    throw OverlapError(rr.overlap, os.str());
  }

  auto src_rows = detail::labeled_rows(source);
  auto inner_x = detail::column_matrix(source, pivot.all(), src_rows);
  auto inner_y = detail::label_vector(source, src_rows);
  rr.inner = regress::fit(inner_y, inner_x, pivot.all(), cfg, warm ? &warm->inner : nullptr);

  rr.target_rows = detail::sampled_rows(target);
  auto tgt_all = detail::column_matrix(target, pivot.all(), rr.target_rows);
  for (Eigen::Index i = 0; i < tgt_all.rows(); ++i)
    rr.y_tilde.push_back(rr.inner.predict(tgt_all.row(i)));

  auto tgt_x = detail::column_matrix(target, pivot.x_names, rr.target_rows);
  Eigen::VectorXd yt =
      Eigen::Map<Eigen::VectorXd>(rr.y_tilde.data(), static_cast<Eigen::Index>(rr.y_tilde.size()));
  rr.outer = regress::fit(yt, tgt_x, pivot.x_names, cfg, warm ? &warm->outer : nullptr);
  return rr;
}

// Generic percentile bootstrap over per-replicate seeds.
struct BootstrapConfig {
  int replicates = 200;
  double level = 0.9;
  std::uint64_t seed = 0;
};

struct BootstrapResult {
  double ci_low = 0.0, ci_high = 0.0;
  int used = 0, dropped = 0;
};

inline BootstrapResult bootstrap(const std::function<double(std::uint64_t)>& thunk,
                                 const BootstrapConfig& cfg) {
  if (cfg.replicates < 50)
    throw std::invalid_argument("bootstrap: need at least 50 replicates");
  std::vector<double> vals;
  int dropped = 0;
  for (int r = 0; r < cfg.replicates; ++r) {
    try {
      vals.push_back(thunk(cfg.seed + static_cast<std::uint64_t>(r)));
    } catch (const std::exception&) {
      ++dropped;
    }
  }
  if (dropped * 10 > cfg.replicates)
    throw std::runtime_error("bootstrap: " + std::to_string(dropped) + " of " +
                             std::to_string(cfg.replicates) + " replicates failed (>10%)");
  std::sort(vals.begin(), vals.end());
  auto quantile = [&](double p) {
    double pos = p * (static_cast<double>(vals.size()) - 1);
    auto lo = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    return vals[lo] + frac * (vals[std::min(lo + 1, vals.size() - 1)] - vals[lo]);
  };
  double alpha = (1.0 - cfg.level) / 2.0;
  return {quantile(alpha), quantile(1.0 - alpha), static_cast<int>(vals.size()), dropped};
}

// Resample rows with replacement (keyed by seed/stream).
inline Dataset resample(const Dataset& ds, std::uint64_t seed, std::uint64_t stream = 0) {
  Dataset out = ds;
  const std::size_t n = ds.rows();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = rng::index(seed, stream, i, n);
    for (std::size_t j = 0; j < ds.data.size(); ++j) out.data[j][i] = ds.data[j][k];
    out.s_sample[i] = ds.s_sample[k];
    out.s_label[i] = ds.s_label[k];
    out.y[i] = ds.y[k];
    out.y_obs[i] = ds.y_obs[k];
  }
  return out;
}

// Concatenate datasets with an identical schema (pooling epochs).
inline Dataset concat(const std::vector<Dataset>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no datasets");
  Dataset out = parts.front();
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const Dataset& p = parts[k];
    if (p.value_cols != out.value_cols)
      throw std::invalid_argument("concat: schema mismatch");
    for (std::size_t j = 0; j < out.data.size(); ++j)
      out.data[j].insert(out.data[j].end(), p.data[j].begin(), p.data[j].end());
    out.s_sample.insert(out.s_sample.end(), p.s_sample.begin(), p.s_sample.end());
    out.s_label.insert(out.s_label.end(), p.s_label.begin(), p.s_label.end());
    out.y.insert(out.y.end(), p.y.begin(), p.y.end());
    out.y_obs.insert(out.y_obs.end(), p.y_obs.begin(), p.y_obs.end());
  }
  return out;
}

struct EffectReport {
  double estimate = 0.0;
  double ci_low = 0.0, ci_high = 0.0;
  long n_source = 0, n_target = 0;
  OverlapReport overlap;
  int replicates = 0, dropped = 0;
  std::string warning;
};

// Repeated-regression estimate of E[Y | do(target domain)]: the mean of the
// inner model's predictions over the target rows, with a two-sample bootstrap.
inline EffectReport estimate_mean(const Dataset& source, const Dataset& target,
                                  const PivotSpec& pivot, const regress::FitConfig& cfg = {},
                                  const BootstrapConfig& boot = {},
                                  bool allow_extrapolation = false,
                                  const BinningConfig& bins = {}) {
  auto point = [&](const Dataset& s, const Dataset& t, bool check) {
    auto rr = repeated_regression(s, t, pivot, cfg, allow_extrapolation || !check, bins);
    double sum = 0.0;
    for (double v : rr.y_tilde) sum += v;
    return std::make_pair(sum / static_cast<double>(rr.y_tilde.size()), rr);
  };
  auto [est, rr] = point(source, target, true);
  EffectReport rep;
  rep.estimate = est;
  rep.overlap = rr.overlap;
  rep.warning = rr.warning;
  rep.n_source = static_cast<long>(detail::labeled_rows(source).size());
  rep.n_target = static_cast<long>(rr.target_rows.size());
  auto br = bootstrap(
      [&](std::uint64_t s) {
        Dataset sb = resample(source, s, 1);
        Dataset tb = resample(target, s, 2);
        return point(sb, tb, false).first;
      },
      boot);
  rep.ci_low = br.ci_low;
  rep.ci_high = br.ci_high;
  rep.replicates = br.used;
  rep.dropped = br.dropped;
  return rep;
}

}  // namespace dsshift::est
