#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsshift/quadrature.hpp"
#include "dsshift/scenarios.hpp"
#include "dsshift/scm.hpp"

namespace dsshift::oracle {

// Exact ground truth by enumeration over the finite exogenous variables plus
// Bernoulli-equation branching, and adaptive quadrature over a continuous X.
// The only continuous randomness allowed is the feature's own noise.

struct OracleValue {
  double value = 0.0;
  double abs_err = 0.0;  // 0 for pure enumeration, quadrature bound otherwise
};

namespace detail {

struct FeatureLaw {
  bool finite = false;
  std::vector<std::pair<double, double>> atoms;  // finite case
  double lo = 0.0, hi = 0.0;                     // continuous integration range
  std::function<double(double)> pdf;
};

inline FeatureLaw feature_law(const Scenario& sc) {
  const NodeSpec& x = sc.feature();
  if (x.eq.kind != Equation::Kind::Deterministic || !x.eq.expr ||
      x.eq.expr->kind != Expr::Kind::Noise)
    throw std::runtime_error("oracle: feature equation must be a direct noise reference");
  int ni = sc.noise_index(x.eq.expr->name);
  if (ni < 0) throw std::runtime_error("oracle: unknown feature noise");
  const NoiseSpec& ns = sc.exogenous[static_cast<std::size_t>(ni)].second;
  FeatureLaw law;
  if (ns.finite_support()) {
    law.finite = true;
    law.atoms = ns.outcomes();
    return law;
  }
  if (ns.kind == NoiseSpec::Kind::Uniform) {
    law.lo = ns.a;
    law.hi = ns.b;
    double dens = 1.0 / (ns.b - ns.a);
    law.pdf = [dens](double) { return dens; };
  } else if (ns.kind == NoiseSpec::Kind::Gaussian) {
    law.lo = ns.a - 8.0 * ns.b;
    law.hi = ns.a + 8.0 * ns.b;
    double mu = ns.a, sg = ns.b;
    law.pdf = [mu, sg](double x) {
      double z = (x - mu) / sg;
      return std::exp(-0.5 * z * z) / (sg * std::sqrt(2.0 * M_PI));
    };
  } else {
    throw std::runtime_error("oracle: unsupported feature noise kind");
  }
  return law;
}

// Enumerate all joint outcomes of the endogenous nodes at a fixed feature
// value x; fn receives (values keyed by node index, weight).
inline void enumerate_at_x(const Scenario& sc, const DomainSetting& setting, double x,
                           const std::function<void(const std::vector<double>&, double)>& fn) {
  const auto order = sc.topo_order();
  const std::string xname = sc.feature().name;
  const std::string xnoise = sc.feature().eq.expr->name;

  std::vector<std::pair<std::string, NoiseSpec>> fin;
  for (const auto& [nm, ns] : sc.exogenous) {
    if (nm == xnoise) continue;
    if (!ns.finite_support())
      throw std::runtime_error(
          "oracle: continuous noise allowed only as the feature equation (" + nm + ")");
    fin.push_back({nm, ns});
  }

  std::map<std::string, double> noise_vals;
  noise_vals[xnoise] = x;  // only read back by the feature equation
  std::vector<double> vals(sc.nodes.size(), 0.0);

  EvalContext ctx;
  ctx.node = [&](const std::string& n) -> double {
    int i = sc.node_index(n);
    if (i < 0) throw std::logic_error("oracle: unknown node " + n);
    return vals[static_cast<std::size_t>(i)];
  };
  ctx.noise = [&](const std::string& n) -> double { return noise_vals.at(n); };
  ctx.d = setting.d;
  ctx.theta_scalar = [&]() { return setting.theta.scalar_value(); };

  std::function<void(std::size_t, double)> walk = [&](std::size_t pos, double w) {
    if (pos == order.size()) {
      fn(vals, w);
      return;
    }
    const int vi = order[pos];
    const NodeSpec& node = sc.nodes[static_cast<std::size_t>(vi)];
    switch (node.eq.kind) {
      case Equation::Kind::Deterministic:
        vals[static_cast<std::size_t>(vi)] = node.eq.expr->eval(ctx);
        walk(pos + 1, w);
        break;
      case Equation::Kind::Prediction:
        vals[static_cast<std::size_t>(vi)] = setting.theta.predict(ctx.node(xname));
        walk(pos + 1, w);
        break;
      case Equation::Kind::Bernoulli: {
        double p = node.eq.expr->eval(ctx);
        if (p < -1e-12 || p > 1 + 1e-12)
          throw std::runtime_error("oracle: Bernoulli probability of '" + node.name +
                                   "' outside [0,1]");
        p = std::min(1.0, std::max(0.0, p));
        if (p > 0) {
          vals[static_cast<std::size_t>(vi)] = 1.0;
          walk(pos + 1, w * p);
        }
        if (p < 1) {
          vals[static_cast<std::size_t>(vi)] = 0.0;
          walk(pos + 1, w * (1.0 - p));
        }
        break;
      }
    }
  };

  std::function<void(std::size_t, double)> pick_noise = [&](std::size_t k, double w) {
    if (k == fin.size()) {
      walk(0, w);
      return;
    }
    for (const auto& [v, p] : fin[k].second.outcomes()) {
      if (p <= 0) continue;
      noise_vals[fin[k].first] = v;
      pick_noise(k + 1, w * p);
    }
  };
  pick_noise(0, 1.0);
}

struct NumDen {
  double num = 0.0, den = 0.0;
};

// E[y * 1{cond}] and P(cond) at fixed x. cond matches node values to 1e-9;
// given_selected additionally requires s_sample = s_label = 1.
inline NumDen accumulate_at_x(const Scenario& sc, const DomainSetting& setting, double x,
                              const std::map<std::string, double>& cond, bool given_selected) {
  std::vector<std::pair<int, double>> want;
  for (const auto& [n, v] : cond) {
    if (n == sc.feature().name) continue;  // x already fixed
    int i = sc.node_index(n);
    if (i < 0) throw std::invalid_argument("oracle: conditioning on unknown node '" + n + "'");
    want.push_back({i, v});
  }
  int yi = sc.node_index(sc.outcome().name);
  int ssi = -1, sli = -1;
  if (given_selected) {
    const NodeSpec* ss = sc.by_role(Role::SelectionSample);
    const NodeSpec* sl = sc.by_role(Role::SelectionLabel);
    if (!ss || !sl)
      throw std::invalid_argument("oracle: scenario has no selection nodes");
    ssi = sc.node_index(ss->name);
    sli = sc.node_index(sl->name);
  }
  NumDen nd;
  enumerate_at_x(sc, setting, x, [&](const std::vector<double>& vals, double w) {
    for (const auto& [i, v] : want)
      if (std::abs(vals[static_cast<std::size_t>(i)] - v) > 1e-9) return;
    if (given_selected &&
        (vals[static_cast<std::size_t>(ssi)] != 1.0 || vals[static_cast<std::size_t>(sli)] != 1.0))
      return;
    nd.den += w;
    nd.num += w * vals[static_cast<std::size_t>(yi)];
  });
  return nd;
}

}  // namespace detail

// Equispaced probe values over the feature support (the states themselves for
// a finite feature).
inline std::vector<double> probe_grid(const Scenario& sc, int n = 101) {
  auto law = detail::feature_law(sc);
  std::vector<double> xs;
  if (law.finite) {
    for (const auto& [v, p] : law.atoms) xs.push_back(v);
    return xs;
  }
  double lo = law.lo, hi = law.hi;
  if (sc.feature().space.kind == StateSpace::Kind::Interval &&
      std::isfinite(sc.feature().space.lo) && std::isfinite(sc.feature().space.hi)) {
    lo = sc.feature().space.lo;
    hi = sc.feature().space.hi;
  } else {
    // avoid the extreme tails for an unbounded feature
    lo = law.lo + 0.25 * (law.hi - law.lo);
    hi = law.hi - 0.25 * (law.hi - law.lo);
  }
  for (int i = 0; i < n; ++i)
    xs.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  return xs;
}

// E[Y | cond, do(D=d, Theta=theta)], optionally also given S=1. cond may fix
// the feature and/or discrete nodes; anything unfixed is integrated out.
inline OracleValue cond_expectation(const Scenario& sc, const DomainSetting& setting,
                                    const std::map<std::string, double>& cond = {},
                                    bool given_selected = false) {
  {
    auto rep = validate(sc);
    if (!rep.empty())
      throw std::invalid_argument("oracle: scenario invalid: " + rep.front());
  }
  auto law = detail::feature_law(sc);
  const std::string xname = sc.feature().name;
  auto it = cond.find(xname);

  auto at_x = [&](double x) {
    return detail::accumulate_at_x(sc, setting, x, cond, given_selected);
  };

  if (it != cond.end()) {
    auto nd = at_x(it->second);
    if (nd.den <= 0)
      throw std::runtime_error("oracle: conditioning event has probability zero at x=" +
                               std::to_string(it->second));
    return {nd.num / nd.den, 0.0};
  }
  if (law.finite) {
    detail::NumDen tot;
    for (const auto& [v, p] : law.atoms) {
      auto nd = at_x(v);
      tot.num += p * nd.num;
      tot.den += p * nd.den;
    }
    if (tot.den <= 0) throw std::runtime_error("oracle: conditioning event has probability zero");
    return {tot.num / tot.den, 0.0};
  }
  double num = quad::integrate([&](double x) { return law.pdf(x) * at_x(x).num; }, law.lo,
                               law.hi, 1e-9);
  double den = quad::integrate([&](double x) { return law.pdf(x) * at_x(x).den; }, law.lo,
                               law.hi, 1e-9);
  if (den <= 0) throw std::runtime_error("oracle: conditioning event has probability zero");
  return {num / den, 1e-8};
}

// E[Y | do(D=d, Theta=theta)].
inline OracleValue exact_mean(const Scenario& sc, const DomainSetting& setting) {
  return cond_expectation(sc, setting, {}, false);
}

// E[node | do(D=d, Theta=theta)] for any endogenous node.
inline OracleValue node_mean(const Scenario& sc, const DomainSetting& setting,
                             const std::string& node) {
  int ni = sc.node_index(node);
  if (ni < 0) throw std::invalid_argument("oracle: unknown node '" + node + "'");
  auto law = detail::feature_law(sc);
  auto at_x = [&](double x) {
    double m = 0.0;
    detail::enumerate_at_x(sc, setting, x, [&](const std::vector<double>& vals, double w) {
      m += w * vals[static_cast<std::size_t>(ni)];
    });
    return m;
  };
  if (law.finite) {
    double m = 0.0;
    for (const auto& [v, p] : law.atoms) m += p * at_x(v);
    return {m, 0.0};
  }
  double m = quad::integrate([&](double x) { return law.pdf(x) * at_x(x); }, law.lo, law.hi,
                             1e-9);
  return {m, 1e-8};
}

// tau(theta) and rho(theta, theta_prev).
struct EffectsValue {
  OracleValue tau, rho;
};

inline EffectsValue exact_effects(const Scenario& sc, const Theta& theta,
                                  const Theta& theta_prev) {
  OracleValue on = exact_mean(sc, {1, theta});
  OracleValue off = exact_mean(sc, {0, theta});
  OracleValue prev = exact_mean(sc, {1, theta_prev});
  return {{on.value - off.value, on.abs_err + off.abs_err},
          {on.value - prev.value, on.abs_err + prev.abs_err}};
}

// ---- identification check ------------------------------------------------

struct IdentProbe {
  double x = 0.0, lhs = 0.0, rhs = 0.0;
};

struct IdentReport {
  double max_abs_gap = 0.0;
  std::vector<IdentProbe> probes;
};

// Evaluate both sides of the transport formula at each probe x: lhs is the
// target-domain E[Y|x]; rhs standardizes the source-domain E[Y|x,z]
// (optionally conditioned on S=1) over the target law of Z given x. Throws
// when the target puts mass on a (x, z) stratum the source cannot label.
inline IdentReport verify_identification(const Scenario& sc, const DomainSetting& source,
                                         const DomainSetting& target,
                                         std::vector<std::string> z_names = {},
                                         bool with_selection = false) {
  if (z_names.empty()) z_names = sc.pivot;
  std::vector<int> zi;
  for (const auto& z : z_names) {
    int i = sc.node_index(z);
    if (i < 0) throw std::invalid_argument("oracle: unknown pivot node '" + z + "'");
    zi.push_back(i);
  }
  IdentReport rep;
  for (double x : probe_grid(sc)) {
    // target joint over z strata and E[Y|x] in one pass
    std::map<std::vector<double>, double> zmass;
    double lhs_num = 0.0, mass = 0.0;
    int yi = sc.node_index(sc.outcome().name);
    detail::enumerate_at_x(sc, target, x, [&](const std::vector<double>& vals, double w) {
      std::vector<double> key;
      for (int i : zi) key.push_back(vals[static_cast<std::size_t>(i)]);
      zmass[key] += w;
      lhs_num += w * vals[static_cast<std::size_t>(yi)];
      mass += w;
    });
    double lhs = lhs_num / mass;
    double rhs = 0.0;
    for (const auto& [key, wz] : zmass) {
      std::map<std::string, double> cond;
      for (std::size_t k = 0; k < z_names.size(); ++k) cond[z_names[k]] = key[k];
      auto nd = detail::accumulate_at_x(sc, source, x, cond, with_selection);
      if (nd.den <= 1e-14) {
        std::ostringstream os;
        os << "absolute continuity violated: target stratum (x=" << x;
        for (std::size_t k = 0; k < z_names.size(); ++k)
          os << ", " << z_names[k] << "=" << key[k];
        os << ") has zero source mass";
        throw std::runtime_error(os.str());
      }
      rhs += (wz / mass) * (nd.num / nd.den);
    }
    rep.probes.push_back({x, lhs, rhs});
    rep.max_abs_gap = std::max(rep.max_abs_gap, std::abs(lhs - rhs));
  }
  return rep;
}

// ---- non-identifiability demo -------------------------------------------

struct NonidProbe {
  double x = 0.0, ce_a = 0.0, ce_b = 0.0;
};

struct NonidReport {
  bool source_equal = false;
  double max_source_discrepancy = 0.0;
  std::vector<NonidProbe> probes;  // target-domain conditional expectations
};

// Compare two scenarios: do their source-domain observables agree while the
// target-domain E[Y|X] differs? Source equality is checked over a moment
// basis at each probe x: E[Y|x], E[Y^2|x], and for every shared observable
// column its mean and covariation with Y.
inline NonidReport nonid_demo(const Scenario& a, const Scenario& b, const DomainSetting& source,
                              const DomainSetting& target) {
  std::vector<std::string> shared;
  for (const auto& n : a.nodes)
    if (n.role != Role::Outcome && n.role != Role::Feature && b.node_index(n.name) >= 0)
      shared.push_back(n.name);

  auto moments = [&](const Scenario& sc, double x) {
    std::vector<double> m;
    int yi = sc.node_index(sc.outcome().name);
    double ey = 0, eyy = 0;
    std::vector<double> ez(shared.size(), 0.0), ezy(shared.size(), 0.0);
    detail::enumerate_at_x(sc, source, x, [&](const std::vector<double>& vals, double w) {
      double y = vals[static_cast<std::size_t>(yi)];
      ey += w * y;
      eyy += w * y * y;
      for (std::size_t k = 0; k < shared.size(); ++k) {
        double z = vals[static_cast<std::size_t>(sc.node_index(shared[k]))];
        ez[k] += w * z;
        ezy[k] += w * z * y;
      }
    });
    m.push_back(ey);
    m.push_back(eyy);
    for (std::size_t k = 0; k < shared.size(); ++k) {
      m.push_back(ez[k]);
      m.push_back(ezy[k]);
    }
    return m;
  };

  NonidReport rep;
  auto grid = probe_grid(a, 21);
  for (double x : grid) {
    auto ma = moments(a, x), mb = moments(b, x);
    for (std::size_t k = 0; k < ma.size(); ++k)
      rep.max_source_discrepancy = std::max(rep.max_source_discrepancy, std::abs(ma[k] - mb[k]));
    auto ca = cond_expectation(a, target, {{a.feature().name, x}});
    auto cb = cond_expectation(b, target, {{b.feature().name, x}});
    rep.probes.push_back({x, ca.value, cb.value});
  }
  rep.source_equal = rep.max_source_discrepancy <= 1e-9;
  return rep;
}

// ---- baseline optimality -------------------------------------------------

struct OptimalityReport {
  bool pass = false;
  bool crit_optimal = false;    // (i) achieves the minimal risk everywhere
  bool crit_necessary = false;  // (ii) acts only where acting strictly helps
  std::vector<std::string> failures;
};

// For a finite-X threshold-action scenario (A = D * 1{Yhat > c}) check that
// the candidate predictor's induced policy 1{cand(x) > c} is the optimal one:
// it attains min(risk0(x), eps(x)) at every state and only acts when
// risk0(x) > eps(x), where risk0 is the idle risk and eps the acting risk.
inline OptimalityReport verify_baseline_optimality(const Scenario& sc, const Theta& candidate) {
  auto law = detail::feature_law(sc);
  const NodeSpec* act = sc.by_role(Role::Action);
  if (!law.finite || !act || !act->eq.expr)
    throw std::invalid_argument("not a threshold-action scenario");
  // recognize A = Product(D, 1{yhat > c})
  const Expr& e = *act->eq.expr;
  double c = 0.0;
  bool shape_ok = false;
  if (e.kind == Expr::Kind::Product && e.args.size() == 2 &&
      e.args[0]->kind == Expr::Kind::DomainD && e.args[1]->kind == Expr::Kind::IndicatorGt &&
      e.args[1]->args[0]->kind == Expr::Kind::Parent &&
      e.args[1]->args[0]->name == sc.prediction().name) {
    c = e.args[1]->value;
    shape_ok = true;
  }
  if (!shape_ok) throw std::invalid_argument("not a threshold-action scenario");

  OptimalityReport rep;
  rep.crit_optimal = true;
  rep.crit_necessary = true;
  const std::string xn = sc.feature().name;
  for (const auto& [x, p] : law.atoms) {
    double risk0 = cond_expectation(sc, {0, Theta::constant(0.0)}, {{xn, x}}).value;
    double eps = cond_expectation(sc, {1, Theta::constant(c + 1.0)}, {{xn, x}}).value;
    if (std::abs(eps - c) > 1e-9)
      throw std::invalid_argument("not a threshold-action scenario");
    bool acts = candidate.predict(x) > c;
    double achieved = acts ? eps : risk0;
    double best = std::min(risk0, eps);
    if (achieved > best + 1e-12) {
      rep.crit_optimal = false;
      std::ostringstream os;
      os << "x=" << x << ": achieved risk " << achieved << " > optimal " << best;
      rep.failures.push_back(os.str());
    }
    if (acts && !(risk0 > eps + 1e-12)) {
      rep.crit_necessary = false;
      std::ostringstream os;
      os << "x=" << x << ": action used where unnecessary (risk0=" << risk0 << ", eps=" << eps
         << ")";
      rep.failures.push_back(os.str());
    }
  }
  rep.pass = rep.crit_optimal && rep.crit_necessary;
  return rep;
}

}  // namespace dsshift::oracle
