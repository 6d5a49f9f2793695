#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsshift/dataset.hpp"
#include "dsshift/expr.hpp"
#include "dsshift/regress.hpp"
#include "dsshift/rng.hpp"

namespace dsshift {

// Names of the two input nodes as they appear in parent lists.
inline const std::string kInputD = "D";
inline const std::string kInputTheta = "Theta";

enum class Role {
  Feature,
  Prediction,
  Action,
  Confounder,
  Mediator,
  Outcome,
  SelectionSample,
  SelectionLabel,
  Aux,
};

inline std::string role_name(Role r) {
  switch (r) {
    case Role::Feature: return "feature";
    case Role::Prediction: return "prediction";
    case Role::Action: return "action";
    case Role::Confounder: return "confounder";
    case Role::Mediator: return "mediator";
    case Role::Outcome: return "outcome";
    case Role::SelectionSample: return "selection_sample";
    case Role::SelectionLabel: return "selection_label";
    case Role::Aux: return "aux";
  }
  return "?";
}

inline Role role_from_name(const std::string& s) {
  if (s == "feature") return Role::Feature;
  if (s == "prediction") return Role::Prediction;
  if (s == "action") return Role::Action;
  if (s == "confounder") return Role::Confounder;
  if (s == "mediator") return Role::Mediator;
  if (s == "outcome") return Role::Outcome;
  if (s == "selection_sample") return Role::SelectionSample;
  if (s == "selection_label") return Role::SelectionLabel;
  if (s == "aux") return Role::Aux;
  throw std::runtime_error("unknown role: " + s);
}

struct StateSpace {
  enum class Kind { Interval, Binary, Finite };
  Kind kind = Kind::Interval;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  std::vector<double> values;

  static StateSpace interval(double lo, double hi) { return {Kind::Interval, lo, hi, {}}; }
  static StateSpace real_line() { return interval(-std::numeric_limits<double>::infinity(),
                                                  std::numeric_limits<double>::infinity()); }
  static StateSpace unit_interval() { return interval(0.0, 1.0); }
  static StateSpace binary() { return {Kind::Binary, 0, 1, {}}; }
  static StateSpace finite(std::vector<double> vs) { return {Kind::Finite, 0, 0, std::move(vs)}; }

  bool contains(double v) const {
    switch (kind) {
      case Kind::Interval: return v >= lo - 1e-12 && v <= hi + 1e-12;
      case Kind::Binary: return v == 0.0 || v == 1.0;
      case Kind::Finite:
        for (double w : values)
          if (std::abs(v - w) < 1e-12) return true;
        return false;
    }
    return false;
  }
};

struct NoiseSpec {
  enum class Kind { Uniform, Gaussian, Bernoulli, PointMass, FiniteUniform };
  Kind kind = Kind::Uniform;
  double a = 0.0, b = 1.0;  // uniform(a,b), gaussian(mu=a, sigma=b), bernoulli(p=a), point(c=a)
  std::vector<double> support;  // FiniteUniform

  static NoiseSpec uniform(double a, double b) { return {Kind::Uniform, a, b, {}}; }
  static NoiseSpec gaussian(double mu, double sigma) { return {Kind::Gaussian, mu, sigma, {}}; }
  static NoiseSpec bernoulli(double p) { return {Kind::Bernoulli, p, 0, {}}; }
  static NoiseSpec point(double c) { return {Kind::PointMass, c, 0, {}}; }
  static NoiseSpec finite_uniform(std::vector<double> vs) {
    return {Kind::FiniteUniform, 0, 0, std::move(vs)};
  }

  bool finite_support() const {
    return kind == Kind::Bernoulli || kind == Kind::PointMass || kind == Kind::FiniteUniform;
  }

  std::vector<std::pair<double, double>> outcomes() const {  // (value, prob)
    switch (kind) {
      case Kind::Bernoulli: return {{1.0, a}, {0.0, 1.0 - a}};
      case Kind::PointMass: return {{a, 1.0}};
      case Kind::FiniteUniform: {
        std::vector<std::pair<double, double>> out;
        for (double v : support) out.emplace_back(v, 1.0 / static_cast<double>(support.size()));
        return out;
      }
      default: throw std::logic_error("outcomes() on continuous noise");
    }
  }

  double draw(double u) const {
    switch (kind) {
      case Kind::Uniform: return a + (b - a) * u;
      case Kind::Gaussian: return a + b * rng::normal_quantile(u);
      case Kind::Bernoulli: return u < a ? 1.0 : 0.0;
      case Kind::PointMass: return a;
      case Kind::FiniteUniform: {
        auto i = static_cast<std::size_t>(u * static_cast<double>(support.size()));
        if (i >= support.size()) i = support.size() - 1;
        return support[i];
      }
    }
    return 0.0;
  }
};

struct Equation {
  enum class Kind {
    Deterministic,  // value = expr
    Bernoulli,      // value ~ Ber(expr), expr must land in [0,1]
    Prediction,     // value = f_theta(x); only for the prediction node
  };
  Kind kind = Kind::Deterministic;
  ExprPtr expr;  // unused for Prediction

  static Equation det(ExprPtr e) { return {Kind::Deterministic, std::move(e)}; }
  static Equation bernoulli(ExprPtr p) { return {Kind::Bernoulli, std::move(p)}; }
  static Equation prediction() { return {Kind::Prediction, nullptr}; }
};

struct NodeSpec {
  std::string name;
  Role role = Role::Aux;
  StateSpace space;
  Equation eq;
  std::vector<std::string> parents;  // endogenous names, possibly "D"/"Theta"
};

// Theta: either a scalar parameter (consumed by ThetaScalar expressions) or a
// predictor f(x) used by Prediction equations, including a fitted model.
struct Theta {
  enum class Kind { None, Scalar, Constant, LogisticLinear, Identity, Model };
  Kind kind = Kind::None;
  double value = 0.0;               // Scalar / Constant
  double slope = 0.0, intercept = 0.0;  // LogisticLinear: sigma(slope*x + intercept)
  std::shared_ptr<const regress::FittedModel> model;
  std::string id;

  static Theta none() { return {Kind::None, 0, 0, 0, nullptr, "none"}; }
  static Theta scalar(double v) {
    return {Kind::Scalar, v, 0, 0, nullptr, "scalar(" + std::to_string(v) + ")"};
  }
  static Theta constant(double c) {
    return {Kind::Constant, c, 0, 0, nullptr, "const(" + std::to_string(c) + ")"};
  }
  static Theta logistic_linear(double slope, double intercept) {
    return {Kind::LogisticLinear, 0, slope, intercept, nullptr,
            "logit(" + std::to_string(slope) + "x+" + std::to_string(intercept) + ")"};
  }
  static Theta identity() { return {Kind::Identity, 0, 0, 0, nullptr, "identity"}; }
  static Theta fitted(std::shared_ptr<const regress::FittedModel> m, std::string id) {
    return {Kind::Model, 0, 0, 0, std::move(m), std::move(id)};
  }

  double scalar_value() const {
    if (kind != Kind::Scalar) throw std::logic_error("theta is not a scalar parameter");
    return value;
  }

  double predict(double x) const {
    switch (kind) {
      case Kind::Constant: return value;
      case Kind::LogisticLinear: return 1.0 / (1.0 + std::exp(-(slope * x + intercept)));
      case Kind::Identity: return x;
      case Kind::Model: {
        Eigen::RowVectorXd r(1);
        r[0] = x;
        return model->predict(r);
      }
      case Kind::Scalar: throw std::logic_error("scalar theta used where a predictor is needed");
      case Kind::None: throw std::logic_error("domain setting has no theta");
    }
    return 0.0;
  }

  bool same_as(const Theta& o) const { return id == o.id; }
};

struct DomainSetting {
  int d = 0;
  Theta theta = Theta::none();
};

struct Scenario {
  std::string name;
  std::vector<NodeSpec> nodes;
  std::vector<std::pair<std::string, NoiseSpec>> exogenous;
  std::vector<std::string> pivot;  // declared Z

  int node_index(const std::string& n) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].name == n) return static_cast<int>(i);
    return -1;
  }
  const NodeSpec* find(const std::string& n) const {
    int i = node_index(n);
    return i < 0 ? nullptr : &nodes[i];
  }
  int noise_index(const std::string& n) const {
    for (std::size_t i = 0; i < exogenous.size(); ++i)
      if (exogenous[i].first == n) return static_cast<int>(i);
    return -1;
  }
  const NodeSpec* by_role(Role r) const {
    for (const auto& n : nodes)
      if (n.role == r) return &n;
    return nullptr;
  }
  const NodeSpec& feature() const {
    const NodeSpec* n = by_role(Role::Feature);
    if (!n) throw std::runtime_error("scenario has no feature node");
    return *n;
  }
  const NodeSpec& prediction() const {
    const NodeSpec* n = by_role(Role::Prediction);
    if (!n) throw std::runtime_error("scenario has no prediction node");
    return *n;
  }
  const NodeSpec& outcome() const {
    const NodeSpec* n = by_role(Role::Outcome);
    if (!n) throw std::runtime_error("scenario has no outcome node");
    return *n;
  }

  // Topological order of endogenous nodes; throws on a cycle.
  std::vector<int> topo_order() const {
    const std::size_t n = nodes.size();
    std::vector<int> indeg(n, 0);
    std::vector<std::vector<int>> children(n);
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& p : nodes[i].parents) {
        if (p == kInputD || p == kInputTheta) continue;
        int pi = node_index(p);
        if (pi < 0) throw std::runtime_error("unknown parent '" + p + "' of '" + nodes[i].name + "'");
        children[pi].push_back(static_cast<int>(i));
        ++indeg[i];
      }
    std::vector<int> order, stack;
    for (std::size_t i = 0; i < n; ++i)
      if (indeg[i] == 0) stack.push_back(static_cast<int>(i));
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      order.push_back(v);
      for (int c : children[v])
        if (--indeg[c] == 0) stack.push_back(c);
    }
    if (order.size() != n) throw std::runtime_error("cyclic graph in scenario '" + name + "'");
    return order;
  }
};

using ValidationReport = std::vector<std::string>;

namespace detail {

// Latent projection of the scenario graph onto {X..., Yhat, Y, D, Theta}.
// Marginalized vertices are the remaining endogenous nodes plus shared
// exogenous noises (a noise referenced by >= 2 equations acts as a latent
// confounder).
struct Projection {
  std::set<std::pair<std::string, std::string>> directed;
  std::set<std::pair<std::string, std::string>> bidirected;  // unordered, stored sorted
};

inline std::vector<std::string> equation_noise_refs(const NodeSpec& node) {
  std::vector<std::string> out;
  if (node.eq.expr)
    node.eq.expr->visit([&](const Expr& e) {
      if (e.kind == Expr::Kind::Noise) out.push_back(e.name);
    });
  return out;
}

inline Projection latent_projection(const Scenario& sc) {
  // Vertices: endogenous names, "D", "Theta", and shared noises "~noise".
  std::map<std::string, std::vector<std::string>> children;
  for (const auto& node : sc.nodes)
    for (const auto& p : node.parents) children[p].push_back(node.name);
  std::map<std::string, int> noise_users;
  for (const auto& node : sc.nodes)
    for (const auto& nm : equation_noise_refs(node)) {
      // count distinct user nodes
      static_cast<void>(nm);
    }
  std::map<std::string, std::set<std::string>> noise_user_set;
  for (const auto& node : sc.nodes)
    for (const auto& nm : equation_noise_refs(node)) noise_user_set[nm].insert(node.name);
  std::vector<std::string> latent_noises;
  for (const auto& [nm, users] : noise_user_set)
    if (users.size() >= 2) {
      std::string v = "~" + nm;
      for (const auto& u : users) children[v].push_back(u);
      latent_noises.push_back(v);
    }

  std::set<std::string> subset = {kInputD, kInputTheta};
  for (const auto& node : sc.nodes)
    if (node.role == Role::Feature || node.role == Role::Prediction || node.role == Role::Outcome)
      subset.insert(node.name);

  // Reachable targets in `subset` via paths whose intermediates avoid `subset`.
  auto reach = [&](const std::string& start) {
    std::set<std::string> hit;
    std::vector<std::string> stack;
    auto push_children = [&](const std::string& v) {
      auto it = children.find(v);
      if (it == children.end()) return;
      for (const auto& c : it->second) stack.push_back(c);
    };
    push_children(start);
    std::set<std::string> seen;
    while (!stack.empty()) {
      std::string v = stack.back();
      stack.pop_back();
      if (subset.count(v)) {
        hit.insert(v);
        continue;  // do not pass through subset vertices
      }
      if (!seen.insert(v).second) continue;
      push_children(v);
    }
    return hit;
  };

  Projection pr;
  for (const auto& u : subset)
    for (const auto& v : reach(u)) pr.directed.insert({u, v});
  // Latent common causes: marginalized endogenous roots and shared noises.
  std::vector<std::string> latents = latent_noises;
  for (const auto& node : sc.nodes)
    if (!subset.count(node.name)) latents.push_back(node.name);
  for (const auto& l : latents) {
    auto hit = reach(l);
    for (const auto& u : hit)
      for (const auto& v : hit)
        if (u < v) pr.bidirected.insert({u, v});
  }
  return pr;
}

}  // namespace detail

// Lists every Assumption-style violation; a scenario is usable iff the report
// is empty. A cyclic graph or unparsable structure throws instead.
inline ValidationReport validate(const Scenario& sc) {
  ValidationReport report;
  sc.topo_order();  // throws on cycles / unknown parents

  const NodeSpec* feat = sc.by_role(Role::Feature);
  const NodeSpec* pred = sc.by_role(Role::Prediction);
  const NodeSpec* outc = sc.by_role(Role::Outcome);
  if (!feat) report.push_back("scenario must declare a feature node");
  if (!pred) report.push_back("scenario must declare a prediction node");
  if (!outc) report.push_back("scenario must declare an outcome node");
  if (!feat || !pred || !outc) return report;

  // Pa(Yhat) = {X, Theta}
  {
    std::set<std::string> pa(pred->parents.begin(), pred->parents.end());
    std::set<std::string> want;
    for (const auto& n : sc.nodes)
      if (n.role == Role::Feature) want.insert(n.name);
    want.insert(kInputTheta);
    if (pa != want) report.push_back("Pa(Yhat) must be {X, Theta}");
  }

  // Ch(D) = Ch(Yhat)
  {
    std::set<std::string> chd, chy;
    for (const auto& n : sc.nodes)
      for (const auto& p : n.parents) {
        if (p == kInputD) chd.insert(n.name);
        if (p == pred->name) chy.insert(n.name);
      }
    if (chd != chy) report.push_back("Ch(D) = Ch(Yhat) violated");
  }

  // Latent projection onto {X, Yhat, Y, D, Theta} must be a subgraph of the
  // deployment graph: X->Yhat, X->Y, Yhat->Y, Theta->Yhat, D->Y, X<->Y.
  {
    auto pr = detail::latent_projection(sc);
    std::set<std::pair<std::string, std::string>> allowed_dir, allowed_bi;
    for (const auto& n : sc.nodes)
      if (n.role == Role::Feature) {
        allowed_dir.insert({n.name, pred->name});
        allowed_dir.insert({n.name, outc->name});
        auto key = n.name < outc->name ? std::make_pair(n.name, outc->name)
                                       : std::make_pair(outc->name, n.name);
        allowed_bi.insert(key);
      }
    allowed_dir.insert({pred->name, outc->name});
    allowed_dir.insert({kInputTheta, pred->name});
    allowed_dir.insert({kInputD, outc->name});
    for (const auto& e : pr.directed)
      if (!allowed_dir.count(e))
        report.push_back("latent projection has disallowed edge " + e.first + " -> " + e.second);
    for (const auto& e : pr.bidirected)
      if (!allowed_bi.count(e))
        report.push_back("latent projection has disallowed edge " + e.first + " <-> " + e.second);
  }

  // Equations reference only declared parents / noises; theta expressions only
  // in the prediction equation.
  for (const auto& node : sc.nodes) {
    std::set<std::string> pa(node.parents.begin(), node.parents.end());
    if (node.eq.kind == Equation::Kind::Prediction) {
      if (node.name != pred->name)
        report.push_back("prediction equation on non-prediction node '" + node.name + "'");
      continue;
    }
    if (!node.eq.expr) {
      report.push_back("node '" + node.name + "' has no equation");
      continue;
    }
    node.eq.expr->visit([&](const Expr& e) {
      switch (e.kind) {
        case Expr::Kind::Parent:
          if (!pa.count(e.name))
            report.push_back("equation of '" + node.name + "' references undeclared parent '" +
                             e.name + "'");
          break;
        case Expr::Kind::Noise:
          if (sc.noise_index(e.name) < 0)
            report.push_back("equation of '" + node.name + "' references unknown noise '" +
                             e.name + "'");
          break;
        case Expr::Kind::DomainD:
          if (!pa.count(kInputD))
            report.push_back("equation of '" + node.name + "' uses D without declaring it");
          break;
        case Expr::Kind::ThetaScalar:
        case Expr::Kind::ThetaDiffers:
          if (node.name != pred->name)
            report.push_back("theta expression outside the prediction equation ('" + node.name +
                             "')");
          break;
        default: break;
      }
    });
  }

  // Pivot names must exist.
  for (const auto& z : sc.pivot)
    if (sc.node_index(z) < 0) report.push_back("pivot references unknown node '" + z + "'");

  return report;
}

namespace detail {

struct UnitEvaluator {
  const Scenario& sc;
  const DomainSetting& setting;
  std::unordered_map<std::string, double> node_vals, noise_vals;

  EvalContext ctx() {
    EvalContext c;
    c.node = [this](const std::string& n) -> double {
      auto it = node_vals.find(n);
      if (it == node_vals.end()) throw std::logic_error("node value not yet computed: " + n);
      return it->second;
    };
    c.noise = [this](const std::string& n) -> double {
      auto it = noise_vals.find(n);
      if (it == noise_vals.end()) throw std::logic_error("noise value missing: " + n);
      return it->second;
    };
    c.d = setting.d;
    c.theta_scalar = [this]() { return setting.theta.scalar_value(); };
    return c;
  }
};

}  // namespace detail

// The engine-level check from the domain-setting contract: under d=0, the
// outcome side of the model must ignore the prediction. Probed numerically on
// random parent/noise assignments.
inline bool d0_ignores_prediction(const Scenario& sc, std::uint64_t probe_seed = 0xD0) {
  const NodeSpec& pred = sc.prediction();
  for (const auto& node : sc.nodes) {
    bool child_of_pred = false;
    for (const auto& p : node.parents) child_of_pred |= (p == pred.name);
    if (!child_of_pred || !node.eq.expr) continue;
    for (int probe = 0; probe < 32; ++probe) {
      detail::UnitEvaluator ev{sc, DomainSetting{0, Theta::none()}, {}, {}};
      std::uint64_t c = 0;
      for (const auto& p : node.parents) {
        if (p == kInputD || p == kInputTheta) continue;
        ev.node_vals[p] = rng::uniform01(probe_seed, probe, c++);
      }
      for (const auto& [nm, spec] : sc.exogenous) {
        static_cast<void>(spec);
        ev.noise_vals[nm] = rng::uniform01(probe_seed, probe + 1000, c++);
      }
      auto ctx = ev.ctx();
      ev.node_vals[pred.name] = 0.25;
      double v1 = node.eq.expr->eval(ctx);
      ev.node_vals[pred.name] = 0.75;
      double v2 = node.eq.expr->eval(ctx);
      if (std::abs(v1 - v2) > 1e-12) return false;
    }
  }
  return true;
}

// Draw n i.i.d. units from the pushforward at (d, theta). Deterministic in
// (scenario, setting, n, seed); noise streams are keyed per node so domains
// sharing equations see identical exogenous draws.
inline Dataset sample(const Scenario& sc, const DomainSetting& setting, std::size_t n,
                      std::uint64_t seed) {
  {
    auto rep = validate(sc);
    if (!rep.empty())
      throw std::invalid_argument("sample: scenario '" + sc.name + "' invalid: " + rep.front());
  }
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  if (setting.d == 0 && !d0_ignores_prediction(sc))
    throw std::invalid_argument("sample: outcome side depends on Yhat under d=0");

  auto order = sc.topo_order();
  const std::size_t n_noise = sc.exogenous.size();

  Dataset ds;
  ds.domain_d = setting.d;
  ds.theta_id = setting.theta.id;
  ds.seed = seed;
  // Column layout: features, prediction, then everything else except
  // selection flags and the outcome.
  std::vector<int> value_nodes;
  for (std::size_t i = 0; i < sc.nodes.size(); ++i)
    if (sc.nodes[i].role == Role::Feature) value_nodes.push_back(static_cast<int>(i));
  for (std::size_t i = 0; i < sc.nodes.size(); ++i)
    if (sc.nodes[i].role == Role::Prediction) value_nodes.push_back(static_cast<int>(i));
  for (std::size_t i = 0; i < sc.nodes.size(); ++i) {
    Role r = sc.nodes[i].role;
    if (r == Role::Feature || r == Role::Prediction || r == Role::Outcome ||
        r == Role::SelectionSample || r == Role::SelectionLabel)
      continue;
    value_nodes.push_back(static_cast<int>(i));
  }
  for (int vi : value_nodes) ds.value_cols.push_back(sc.nodes[vi].name);
  ds.data.assign(ds.value_cols.size(), std::vector<double>(n));
  ds.s_sample.assign(n, 1);
  ds.s_label.assign(n, 1);
  ds.y.assign(n, 0.0);
  ds.y_obs.assign(n, 1);

  detail::UnitEvaluator ev{sc, setting, {}, {}};
  auto ctx = ev.ctx();
  std::vector<double> vals(sc.nodes.size());
  for (std::size_t i = 0; i < n; ++i) {
    ev.noise_vals.clear();
    ev.node_vals.clear();
    for (std::size_t k = 0; k < n_noise; ++k)
      ev.noise_vals[sc.exogenous[k].first] =
          sc.exogenous[k].second.draw(rng::uniform01(seed, k, i));
    for (int vi : order) {
      const NodeSpec& node = sc.nodes[static_cast<std::size_t>(vi)];
      double v = 0.0;
      switch (node.eq.kind) {
        case Equation::Kind::Deterministic: v = node.eq.expr->eval(ctx); break;
        case Equation::Kind::Bernoulli: {
          double p = node.eq.expr->eval(ctx);
          if (p < -1e-12 || p > 1 + 1e-12)
            throw std::runtime_error("sample: Bernoulli probability of node '" + node.name +
                                     "' outside [0,1] at row " + std::to_string(i));
          double u = rng::uniform01(seed, n_noise + static_cast<std::size_t>(vi), i);
          v = u < p ? 1.0 : 0.0;
          break;
        }
        case Equation::Kind::Prediction: {
          double x = ev.node_vals.at(sc.feature().name);
          v = setting.theta.predict(x);
          break;
        }
      }
      if (!node.space.contains(v))
        throw std::runtime_error("sample: node '" + node.name + "' value " + std::to_string(v) +
                                 " outside declared state space at row " + std::to_string(i));
      ev.node_vals[node.name] = v;
      vals[static_cast<std::size_t>(vi)] = v;
    }
    for (std::size_t j = 0; j < value_nodes.size(); ++j)
      ds.data[j][i] = vals[static_cast<std::size_t>(value_nodes[j])];
    if (const NodeSpec* ss = sc.by_role(Role::SelectionSample))
      ds.s_sample[i] = static_cast<std::uint8_t>(vals[static_cast<std::size_t>(sc.node_index(ss->name))]);
    if (const NodeSpec* sl = sc.by_role(Role::SelectionLabel))
      ds.s_label[i] = static_cast<std::uint8_t>(vals[static_cast<std::size_t>(sc.node_index(sl->name))]);
    ds.y_obs[i] = ds.s_label[i];
    ds.y[i] = ds.y_obs[i] ? vals[static_cast<std::size_t>(sc.node_index(sc.outcome().name))] : 0.0;
  }
  return ds;
}

}  // namespace dsshift
