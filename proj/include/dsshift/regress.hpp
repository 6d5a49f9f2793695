#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace dsshift::regress {

enum class Link { Logit, Identity };

inline constexpr double kProbClipLo = 1e-9;
inline constexpr double kProbClipHi = 1.0 - 1e-9;

// Full polynomial basis of the standardized inputs, up to total degree.
struct FeatureMap {
  int degree = 3;
  std::vector<std::string> inputs;
  std::vector<double> means, scales;
  std::vector<std::vector<int>> exponents;  // first entry is the intercept

  static std::vector<std::vector<int>> make_exponents(int n_inputs, int degree) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(n_inputs, 0);
    std::function<void(int, int)> rec = [&](int pos, int budget) {
      if (pos == n_inputs) {
        out.push_back(cur);
        return;
      }
      for (int e = 0; e <= budget; ++e) {
        cur[pos] = e;
        rec(pos + 1, budget - e);
      }
      cur[pos] = 0;
    };
    rec(0, degree);
    // Sort by total degree then lexicographic, so the intercept comes first.
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      int sa = 0, sb = 0;
      for (int v : a) sa += v;
      for (int v : b) sb += v;
      if (sa != sb) return sa < sb;
      return a < b;
    });
    return out;
  }

  static FeatureMap build(std::vector<std::string> inputs, int degree,
                          const Eigen::MatrixXd& raw) {
    FeatureMap fm;
    fm.degree = degree;
    fm.inputs = std::move(inputs);
    const auto n = raw.rows();
    if (static_cast<std::size_t>(raw.cols()) != fm.inputs.size())
      throw std::invalid_argument("FeatureMap: column/input mismatch");
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      double mu = raw.col(j).mean();
      double sd = std::sqrt((raw.col(j).array() - mu).square().sum() / std::max<double>(1, n));
      fm.means.push_back(mu);
      fm.scales.push_back(sd > 0 ? sd : 1.0);  // constant column: centered to zero
    }
    fm.exponents = make_exponents(static_cast<int>(fm.inputs.size()), degree);
    return fm;
  }

  std::size_t basis_size() const { return exponents.size(); }

  Eigen::RowVectorXd transform_row(const Eigen::RowVectorXd& raw) const {
    Eigen::RowVectorXd z(raw.size());
    for (Eigen::Index j = 0; j < raw.size(); ++j) z[j] = (raw[j] - means[j]) / scales[j];
    Eigen::RowVectorXd phi(basis_size());
    for (std::size_t b = 0; b < exponents.size(); ++b) {
      double v = 1.0;
      for (Eigen::Index j = 0; j < raw.size(); ++j)
        for (int e = 0; e < exponents[b][j]; ++e) v *= z[j];
      phi[static_cast<Eigen::Index>(b)] = v;
    }
    return phi;
  }

  Eigen::MatrixXd transform(const Eigen::MatrixXd& raw) const {
    Eigen::MatrixXd phi(raw.rows(), basis_size());
    for (Eigen::Index i = 0; i < raw.rows(); ++i) phi.row(i) = transform_row(raw.row(i));
    return phi;
  }
};

struct FitDiagnostics {
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  long training_rows = 0;
  std::string warning;
};

struct FittedModel {
  FeatureMap fmap;
  Link link = Link::Logit;
  Eigen::VectorXd coef;
  double ridge = 0.0;
  FitDiagnostics diag;

  double predict_basis(const Eigen::RowVectorXd& phi) const {
    double eta = phi.dot(coef);
    if (link == Link::Logit) {
      double p = 1.0 / (1.0 + std::exp(-eta));
      return std::clamp(p, kProbClipLo, kProbClipHi);
    }
    return eta;
  }

  // Raw inputs in fmap.inputs order.
  double predict(const Eigen::RowVectorXd& raw) const {
    return predict_basis(fmap.transform_row(raw));
  }

  // Name-based lookup; throws naming the variable on a miss.
  double predict_named(const std::function<std::optional<double>(const std::string&)>& get) const {
    Eigen::RowVectorXd raw(static_cast<Eigen::Index>(fmap.inputs.size()));
    for (std::size_t j = 0; j < fmap.inputs.size(); ++j) {
      auto v = get(fmap.inputs[j]);
      if (!v) throw std::invalid_argument("predict: missing input '" + fmap.inputs[j] + "'");
      raw[static_cast<Eigen::Index>(j)] = *v;
    }
    return predict(raw);
  }
};

struct FitConfig {
  int degree = 3;
  double ridge = 1e-6;
  double tol = 1e-8;
  int max_iter = 100;
  Link link = Link::Logit;
};

namespace detail {

// Penalized Bernoulli quasi-log-likelihood (fractional targets allowed).
inline double penalized_ll(const Eigen::VectorXd& y, const Eigen::VectorXd& eta,
                           const Eigen::VectorXd& beta, double lambda) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    // y*eta - log(1+exp(eta)), stable form
    double e = eta[i];
    double lse = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    ll += y[i] * e - lse;
  }
  double pen = 0.0;
  for (Eigen::Index j = 1; j < beta.size(); ++j) pen += beta[j] * beta[j];
  return ll - 0.5 * lambda * pen;
}

inline Eigen::VectorXd penalty_mask(Eigen::Index p) {
  Eigen::VectorXd m = Eigen::VectorXd::Ones(p);
  m[0] = 0.0;  // intercept unpenalized
  return m;
}

}  // namespace detail

// Gradient of the penalized objective at beta (exposed for diagnostics/tests).
inline Eigen::VectorXd logit_gradient(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& beta, double lambda) {
  Eigen::VectorXd eta = phi * beta;
  Eigen::VectorXd p = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
  Eigen::VectorXd g = phi.transpose() * (y - p);
  Eigen::VectorXd mask = detail::penalty_mask(beta.size());
  g -= lambda * mask.cwiseProduct(beta);
  return g;
}

inline double penalized_quasi_ll(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& beta, double lambda) {
  return detail::penalized_ll(y, phi * beta, beta, lambda);
}

// Fit on pre-built basis. Inputs/feature map supplied by the caller.
inline FittedModel fit_basis(FeatureMap fmap, const Eigen::MatrixXd& phi,
                             const Eigen::VectorXd& y, const FitConfig& cfg,
                             const Eigen::VectorXd* init = nullptr) {
  const Eigen::Index n = phi.rows(), p = phi.cols();
  if (n < p)
    throw std::invalid_argument("fit: fewer rows (" + std::to_string(n) + ") than basis size (" +
                                std::to_string(p) + ")");
  FittedModel m;
  m.fmap = std::move(fmap);
  m.link = cfg.link;
  m.ridge = cfg.ridge;
  m.diag.training_rows = static_cast<long>(n);
  Eigen::VectorXd mask = detail::penalty_mask(p);

  if (cfg.link == Link::Identity) {
    Eigen::MatrixXd A = phi.transpose() * phi + cfg.ridge * mask.asDiagonal().toDenseMatrix();
    if (cfg.ridge == 0.0) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi);
      qr.setThreshold(1e-10);
      if (qr.rank() < p)
        throw std::runtime_error("fit: singular normal matrix at ridge=0; use ridge > 0");
      m.coef = qr.solve(y);
    } else {
      m.coef = A.ldlt().solve(phi.transpose() * y);
    }
    m.diag.converged = true;
    m.diag.iterations = 1;
    return m;
  }

  // Logit link: IRLS with step-halving on the penalized quasi-likelihood.
  for (Eigen::Index i = 0; i < n; ++i)
    if (y[i] < 0.0 || y[i] > 1.0)
      throw std::invalid_argument("fit: logit link requires targets in [0,1]");

  // Drop basis columns that are linear combinations of earlier ones (binary
  // inputs make their higher powers affine duplicates). Ridge keeps the full
  // problem solvable but leaves Newton crawling along the flat directions.
  std::vector<Eigen::Index> keep;
  {
    Eigen::MatrixXd gram = phi.transpose() * phi;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
    const Eigen::Index r = qr.rank();
    if (r < p) {
      if (cfg.ridge == 0.0)
        throw std::runtime_error("fit: singular normal matrix at ridge=0; use ridge > 0");
      const auto& perm = qr.colsPermutation().indices();
      keep.assign(perm.data(), perm.data() + r);
      std::sort(keep.begin(), keep.end());
    }
  }
  Eigen::MatrixXd reduced;
  const Eigen::MatrixXd* basis = &phi;
  if (!keep.empty()) {
    reduced.resize(n, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) reduced.col(static_cast<Eigen::Index>(j)) = phi.col(keep[j]);
    basis = &reduced;
  }
  const Eigen::MatrixXd& bphi = *basis;
  const Eigen::Index bp = bphi.cols();
  mask = detail::penalty_mask(bp);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(bp);
  if (init && init->size() == p) {
    if (keep.empty())
      beta = *init;
    else
      for (std::size_t j = 0; j < keep.size(); ++j)
        beta[static_cast<Eigen::Index>(j)] = (*init)[keep[j]];
  }
  double ll = detail::penalized_ll(y, bphi * beta, beta, cfg.ridge);
  int it = 0;
  int stall = 0;
  bool converged = false;
  for (; it < cfg.max_iter; ++it) {
    Eigen::VectorXd eta = bphi * beta;
    Eigen::VectorXd prob = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    Eigen::VectorXd w = prob.array() * (1.0 - prob.array()) + 1e-12;
    Eigen::VectorXd g = bphi.transpose() * (y - prob) - cfg.ridge * mask.cwiseProduct(beta);
    Eigen::MatrixXd H = bphi.transpose() * w.asDiagonal() * bphi +
                        cfg.ridge * mask.asDiagonal().toDenseMatrix();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("fit: singular normal matrix at ridge=0; use ridge > 0");
    Eigen::VectorXd step = ldlt.solve(g);
    if (!step.allFinite())
      throw std::runtime_error("fit: singular normal matrix at ridge=0; use ridge > 0");

    double scale = 1.0;
    Eigen::VectorXd cand;
    double cand_ll = -std::numeric_limits<double>::infinity();
    for (int h = 0; h <= 30; ++h) {
      cand = beta + scale * step;
      cand_ll = detail::penalized_ll(y, bphi * cand, cand, cfg.ridge);
      if (cand_ll >= ll - 1e-12) break;
      scale *= 0.5;
    }
    double max_update = (cand - beta).cwiseAbs().maxCoeff();
    // quasi-separation drags coefficients outward forever while the
    // likelihood is already numerically flat; treat two flat steps as done
    stall = std::abs(cand_ll - ll) <= 1e-4 * cfg.tol * (std::abs(cand_ll) + 1.0) ? stall + 1 : 0;
    beta = cand;
    ll = cand_ll;
    Eigen::VectorXd g_new = logit_gradient(bphi, y, beta, cfg.ridge);
    m.diag.grad_norm = g_new.norm();
    if (max_update < cfg.tol || m.diag.grad_norm < cfg.tol || stall >= 2) {
      converged = true;
      ++it;
      break;
    }
  }
  m.diag.iterations = it;
  m.diag.converged = converged;
  if (!converged)
    m.diag.warning = "IRLS did not converge within max_iter=" + std::to_string(cfg.max_iter);
  if (keep.empty()) {
    m.coef = beta;
  } else {
    m.coef = Eigen::VectorXd::Zero(p);
    for (std::size_t j = 0; j < keep.size(); ++j) m.coef[keep[j]] = beta[static_cast<Eigen::Index>(j)];
  }
  return m;
}

// targets: in [0,1] for logit (fractional allowed), unrestricted for identity.
// raw: n x k matrix of raw inputs named by `inputs`.
inline FittedModel fit(const Eigen::VectorXd& targets, const Eigen::MatrixXd& raw,
                       std::vector<std::string> inputs, const FitConfig& cfg,
                       const FittedModel* warm = nullptr) {
  FeatureMap fm = FeatureMap::build(std::move(inputs), cfg.degree, raw);
  Eigen::MatrixXd phi = fm.transform(raw);
  const Eigen::VectorXd* init = warm ? &warm->coef : nullptr;
  return fit_basis(std::move(fm), phi, targets, cfg, init);
}

// ---- JSON ----------------------------------------------------------------

inline nlohmann::json model_to_json(const FittedModel& m) {
  nlohmann::json j;
  j["feature_map"] = {{"degree", m.fmap.degree},
                      {"inputs", m.fmap.inputs},
                      {"means", m.fmap.means},
                      {"scales", m.fmap.scales}};
  j["link"] = m.link == Link::Logit ? "logit" : "identity";
  j["coefficients"] = std::vector<double>(m.coef.data(), m.coef.data() + m.coef.size());
  j["ridge"] = m.ridge;
  j["diagnostics"] = {{"iterations", m.diag.iterations},
                      {"final_gradient_norm", m.diag.grad_norm},
                      {"converged", m.diag.converged},
                      {"training_rows", m.diag.training_rows}};
  return j;
}

inline FittedModel model_from_json(const nlohmann::json& j) {
  FittedModel m;
  const auto& f = j.at("feature_map");
  m.fmap.degree = f.at("degree").get<int>();
  m.fmap.inputs = f.at("inputs").get<std::vector<std::string>>();
  m.fmap.means = f.at("means").get<std::vector<double>>();
  m.fmap.scales = f.at("scales").get<std::vector<double>>();
  m.fmap.exponents =
      FeatureMap::make_exponents(static_cast<int>(m.fmap.inputs.size()), m.fmap.degree);
  m.link = j.at("link").get<std::string>() == "logit" ? Link::Logit : Link::Identity;
  auto c = j.at("coefficients").get<std::vector<double>>();
  m.coef = Eigen::Map<Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  m.ridge = j.at("ridge").get<double>();
  const auto& d = j.at("diagnostics");
  m.diag.iterations = d.at("iterations").get<int>();
  m.diag.grad_norm = d.at("final_gradient_norm").get<double>();
  m.diag.converged = d.at("converged").get<bool>();
  m.diag.training_rows = d.at("training_rows").get<long>();
  return m;
}

}  // namespace dsshift::regress
