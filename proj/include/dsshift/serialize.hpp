#pragma once

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dsshift/estimator.hpp"
#include "dsshift/oracle.hpp"
#include "dsshift/pivot_test.hpp"
#include "dsshift/scm.hpp"

namespace dsshift {

// ---- scenario files -------------------------------------------------------

inline nlohmann::json space_to_json(const StateSpace& s) {
  nlohmann::json j;
  switch (s.kind) {
    case StateSpace::Kind::Interval:
      j["kind"] = "interval";
      j["lo"] = std::isfinite(s.lo) ? nlohmann::json(s.lo) : nlohmann::json();
      j["hi"] = std::isfinite(s.hi) ? nlohmann::json(s.hi) : nlohmann::json();
      break;
    case StateSpace::Kind::Binary: j["kind"] = "binary"; break;
    case StateSpace::Kind::Finite:
      j["kind"] = "finite";
      j["states"] = s.values;
      break;
  }
  return j;
}

inline StateSpace space_from_json(const nlohmann::json& j) {
  const std::string k = j.at("kind");
  if (k == "interval") {
    double lo = j.at("lo").is_null() ? -std::numeric_limits<double>::infinity()
                                     : j.at("lo").get<double>();
    double hi = j.at("hi").is_null() ? std::numeric_limits<double>::infinity()
                                     : j.at("hi").get<double>();
    return StateSpace::interval(lo, hi);
  }
  if (k == "binary") return StateSpace::binary();
  if (k == "finite") return StateSpace::finite(j.at("states").get<std::vector<double>>());
  throw std::runtime_error("scenario json: unknown state space kind '" + k + "'");
}

inline nlohmann::json noise_to_json(const NoiseSpec& n) {
  nlohmann::json j;
  switch (n.kind) {
    case NoiseSpec::Kind::Uniform: j = {{"kind", "uniform"}, {"a", n.a}, {"b", n.b}}; break;
    case NoiseSpec::Kind::Gaussian:
      j = {{"kind", "gaussian"}, {"mu", n.a}, {"sigma", n.b}};
      break;
    case NoiseSpec::Kind::Bernoulli: j = {{"kind", "bernoulli"}, {"p", n.a}}; break;
    case NoiseSpec::Kind::PointMass: j = {{"kind", "point"}, {"c", n.a}}; break;
    case NoiseSpec::Kind::FiniteUniform:
      j = {{"kind", "finite_uniform"}, {"support", n.support}};
      break;
  }
  return j;
}

inline NoiseSpec noise_from_json(const nlohmann::json& j) {
  const std::string k = j.at("kind");
  if (k == "uniform") return NoiseSpec::uniform(j.at("a"), j.at("b"));
  if (k == "gaussian") return NoiseSpec::gaussian(j.at("mu"), j.at("sigma"));
  if (k == "bernoulli") return NoiseSpec::bernoulli(j.at("p"));
  if (k == "point") return NoiseSpec::point(j.at("c"));
  if (k == "finite_uniform")
    return NoiseSpec::finite_uniform(j.at("support").get<std::vector<double>>());
  throw std::runtime_error("scenario json: unknown noise kind '" + k + "'");
}

inline nlohmann::json equation_to_json(const Equation& e) {
  nlohmann::json j;
  switch (e.kind) {
    case Equation::Kind::Deterministic: j["kind"] = "det"; break;
    case Equation::Kind::Bernoulli: j["kind"] = "bernoulli"; break;
    case Equation::Kind::Prediction: j["kind"] = "prediction"; break;
  }
  if (e.expr) j["expr"] = expr_to_json(*e.expr);
  return j;
}

inline Equation equation_from_json(const nlohmann::json& j) {
  const std::string k = j.at("kind");
  if (k == "prediction") return Equation::prediction();
  ExprPtr e = expr_from_json(j.at("expr"));
  if (k == "det") return Equation::det(std::move(e));
  if (k == "bernoulli") return Equation::bernoulli(std::move(e));
  throw std::runtime_error("scenario json: unknown equation kind '" + k + "'");
}

inline nlohmann::json scenario_to_json(const Scenario& sc) {
  nlohmann::json j;
  j["name"] = sc.name;
  j["nodes"] = nlohmann::json::array();
  j["equations"] = nlohmann::json::object();
  j["graph"] = nlohmann::json::object();
  for (const auto& n : sc.nodes) {
    j["nodes"].push_back(
        {{"name", n.name}, {"role", role_name(n.role)}, {"space", space_to_json(n.space)}});
    j["equations"][n.name] = equation_to_json(n.eq);
    j["graph"][n.name] = n.parents;
  }
  j["exogenous"] = nlohmann::json::array();
  for (const auto& [nm, ns] : sc.exogenous) {
    auto e = noise_to_json(ns);
    e["name"] = nm;
    j["exogenous"].push_back(e);
  }
  j["pivot"] = sc.pivot;
  return j;
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario sc;
  sc.name = j.at("name");
  for (const auto& n : j.at("nodes")) {
    NodeSpec spec;
    spec.name = n.at("name");
    spec.role = role_from_name(n.at("role"));
    spec.space = space_from_json(n.at("space"));
    spec.eq = equation_from_json(j.at("equations").at(spec.name));
    spec.parents = j.at("graph").at(spec.name).get<std::vector<std::string>>();
    sc.nodes.push_back(std::move(spec));
  }
  for (const auto& e : j.at("exogenous"))
    sc.exogenous.emplace_back(e.at("name"), noise_from_json(e));
  sc.pivot = j.at("pivot").get<std::vector<std::string>>();
  return sc;
}

inline Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  nlohmann::json j;
  in >> j;
  return scenario_from_json(j);
}

// ---- report helpers -------------------------------------------------------

inline nlohmann::json overlap_to_json(const est::OverlapReport& rep,
                                      const est::PivotSpec& pivot) {
  nlohmann::json j;
  j["strata_checked"] = rep.strata_checked;
  j["worst_ratio"] = rep.worst_ratio;
  j["violations"] = nlohmann::json::array();
  for (const auto& v : rep.violations) j["violations"].push_back(v.describe(pivot));
  return j;
}

inline nlohmann::json effect_report_to_json(const est::EffectReport& rep,
                                            const est::PivotSpec& pivot) {
  nlohmann::json j;
  j["estimate"] = rep.estimate;
  j["ci_low"] = rep.ci_low;
  j["ci_high"] = rep.ci_high;
  j["n_source"] = rep.n_source;
  j["n_target"] = rep.n_target;
  j["replicates"] = rep.replicates;
  j["dropped"] = rep.dropped;
  j["overlap"] = overlap_to_json(rep.overlap, pivot);
  if (!rep.warning.empty()) j["warning"] = rep.warning;
  return j;
}

inline nlohmann::json ident_report_to_json(const oracle::IdentReport& rep) {
  nlohmann::json j;
  j["max_abs_gap"] = rep.max_abs_gap;
  j["probes"] = nlohmann::json::array();
  for (const auto& p : rep.probes)
    j["probes"].push_back({{"x", p.x}, {"lhs", p.lhs}, {"rhs", p.rhs}});
  return j;
}

inline nlohmann::json nonid_report_to_json(const oracle::NonidReport& rep) {
  nlohmann::json j;
  j["source_equal"] = rep.source_equal;
  j["max_source_discrepancy"] = rep.max_source_discrepancy;
  j["probes"] = nlohmann::json::array();
  for (const auto& p : rep.probes)
    j["probes"].push_back({{"x", p.x}, {"ce_m1", p.ce_a}, {"ce_m2", p.ce_b}});
  return j;
}

inline nlohmann::json diagnostic_to_json(const pivot::DiagnosticReport& rep) {
  nlohmann::json j;
  j["statistic"] = rep.statistic;
  j["df"] = rep.df;
  j["p_value"] = rep.p_value;
  j["alpha"] = rep.alpha;
  j["reject"] = rep.reject;
  j["strata_used"] = rep.strata_used;
  j["strata_dropped"] = rep.strata_dropped;
  return j;
}

}  // namespace dsshift
