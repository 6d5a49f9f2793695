#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace dsshift {

// Closed library of structural-equation expressions. Equations are built from
// these forms only (no user code), which keeps them serializable and lets the
// oracle evaluate them exactly.

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

// Values available while evaluating one unit.
struct EvalContext {
  // Endogenous node values already computed, by name.
  std::function<double(const std::string&)> node;
  // Exogenous noise values, by name.
  std::function<double(const std::string&)> noise;
  int d = 0;
  // Scalar theta, when the domain setting carries one (prop3-style equations).
  std::function<double()> theta_scalar;
};

struct Expr {
  enum class Kind {
    Constant,      // v
    Parent,        // node value by name
    Noise,         // exogenous value by name
    DomainD,       // the input D
    ThetaScalar,   // scalar theta value
    ThetaDiffers,  // 1{theta != v}
    Affine,        // c0 + sum_i w_i * e_i
    Product,       // prod_i e_i
    Sigmoid,       // 1/(1+exp(-e))
    IndicatorGt,   // 1{e > v}
    IndicatorEq,   // 1{e == v}  (exact compare on small integers)
    Xor,           // XOR of two {0,1} operands
  };

  Kind kind;
  double value = 0.0;                 // Constant / indicator thresholds / ThetaDiffers ref
  std::string name;                   // Parent / Noise
  double c0 = 0.0;                    // Affine offset
  std::vector<double> weights;        // Affine
  std::vector<ExprPtr> args;

  double eval(const EvalContext& ctx) const {
    switch (kind) {
      case Kind::Constant: return value;
      case Kind::Parent: return ctx.node(name);
      case Kind::Noise: return ctx.noise(name);
      case Kind::DomainD: return static_cast<double>(ctx.d);
      case Kind::ThetaScalar: return ctx.theta_scalar();
      case Kind::ThetaDiffers: return ctx.theta_scalar() != value ? 1.0 : 0.0;
      case Kind::Affine: {
        double s = c0;
        for (std::size_t i = 0; i < args.size(); ++i) s += weights[i] * args[i]->eval(ctx);
        return s;
      }
      case Kind::Product: {
        double s = 1.0;
        for (const auto& a : args) s *= a->eval(ctx);
        return s;
      }
      case Kind::Sigmoid: return 1.0 / (1.0 + std::exp(-args[0]->eval(ctx)));
      case Kind::IndicatorGt: return args[0]->eval(ctx) > value ? 1.0 : 0.0;
      case Kind::IndicatorEq: return args[0]->eval(ctx) == value ? 1.0 : 0.0;
      case Kind::Xor: {
        int a = static_cast<int>(std::lround(args[0]->eval(ctx)));
        int b = static_cast<int>(std::lround(args[1]->eval(ctx)));
        return static_cast<double>(a ^ b);
      }
    }
    throw std::logic_error("unreachable expr kind");
  }

  // Collect referenced names.
  void visit(const std::function<void(const Expr&)>& fn) const {
    fn(*this);
    for (const auto& a : args) a->visit(fn);
  }
};

// ---- builders ------------------------------------------------------------

namespace ex {

inline ExprPtr constant(double v) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Constant;
  e->value = v;
  return e;
}
inline ExprPtr parent(std::string name) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Parent;
  e->name = std::move(name);
  return e;
}
inline ExprPtr noise(std::string name) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Noise;
  e->name = std::move(name);
  return e;
}
inline ExprPtr domain_d() {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::DomainD;
  return e;
}
inline ExprPtr theta_scalar() {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::ThetaScalar;
  return e;
}
inline ExprPtr theta_differs(double ref) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::ThetaDiffers;
  e->value = ref;
  return e;
}
inline ExprPtr affine(double c0, std::vector<std::pair<double, ExprPtr>> terms) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Affine;
  e->c0 = c0;
  for (auto& [w, t] : terms) {
    e->weights.push_back(w);
    e->args.push_back(std::move(t));
  }
  return e;
}
inline ExprPtr product(std::vector<ExprPtr> fs) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Product;
  e->args = std::move(fs);
  return e;
}
inline ExprPtr sigmoid(ExprPtr a) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Sigmoid;
  e->args = {std::move(a)};
  return e;
}
inline ExprPtr gt(ExprPtr a, double threshold) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::IndicatorGt;
  e->value = threshold;
  e->args = {std::move(a)};
  return e;
}
inline ExprPtr eq(ExprPtr a, double v) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::IndicatorEq;
  e->value = v;
  e->args = {std::move(a)};
  return e;
}
inline ExprPtr xor_(ExprPtr a, ExprPtr b) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Xor;
  e->args = {std::move(a), std::move(b)};
  return e;
}

}  // namespace ex

// ---- JSON ----------------------------------------------------------------

inline nlohmann::json expr_to_json(const Expr& e) {
  using nlohmann::json;
  json j;
  switch (e.kind) {
    case Expr::Kind::Constant: j = {{"k", "const"}, {"v", e.value}}; break;
    case Expr::Kind::Parent: j = {{"k", "parent"}, {"name", e.name}}; break;
    case Expr::Kind::Noise: j = {{"k", "noise"}, {"name", e.name}}; break;
    case Expr::Kind::DomainD: j = {{"k", "d"}}; break;
    case Expr::Kind::ThetaScalar: j = {{"k", "theta"}}; break;
    case Expr::Kind::ThetaDiffers: j = {{"k", "theta_ne"}, {"v", e.value}}; break;
    case Expr::Kind::Affine: {
      j = {{"k", "affine"}, {"c0", e.c0}};
      json terms = json::array();
      for (std::size_t i = 0; i < e.args.size(); ++i)
        terms.push_back({{"w", e.weights[i]}, {"e", expr_to_json(*e.args[i])}});
      j["terms"] = terms;
      break;
    }
    case Expr::Kind::Product: {
      j = {{"k", "prod"}};
      json fs = json::array();
      for (const auto& a : e.args) fs.push_back(expr_to_json(*a));
      j["fs"] = fs;
      break;
    }
    case Expr::Kind::Sigmoid: j = {{"k", "sigmoid"}, {"e", expr_to_json(*e.args[0])}}; break;
    case Expr::Kind::IndicatorGt:
      j = {{"k", "gt"}, {"e", expr_to_json(*e.args[0])}, {"c", e.value}};
      break;
    case Expr::Kind::IndicatorEq:
      j = {{"k", "eq"}, {"e", expr_to_json(*e.args[0])}, {"v", e.value}};
      break;
    case Expr::Kind::Xor:
      j = {{"k", "xor"}, {"a", expr_to_json(*e.args[0])}, {"b", expr_to_json(*e.args[1])}};
      break;
  }
  return j;
}

inline ExprPtr expr_from_json(const nlohmann::json& j) {
  const std::string k = j.at("k").get<std::string>();
  if (k == "const") return ex::constant(j.at("v").get<double>());
  if (k == "parent") return ex::parent(j.at("name").get<std::string>());
  if (k == "noise") return ex::noise(j.at("name").get<std::string>());
  if (k == "d") return ex::domain_d();
  if (k == "theta") return ex::theta_scalar();
  if (k == "theta_ne") return ex::theta_differs(j.at("v").get<double>());
  if (k == "affine") {
    std::vector<std::pair<double, ExprPtr>> terms;
    for (const auto& t : j.at("terms"))
      terms.emplace_back(t.at("w").get<double>(), expr_from_json(t.at("e")));
    return ex::affine(j.at("c0").get<double>(), std::move(terms));
  }
  if (k == "prod") {
    std::vector<ExprPtr> fs;
    for (const auto& f : j.at("fs")) fs.push_back(expr_from_json(f));
    return ex::product(std::move(fs));
  }
  if (k == "sigmoid") return ex::sigmoid(expr_from_json(j.at("e")));
  if (k == "gt") return ex::gt(expr_from_json(j.at("e")), j.at("c").get<double>());
  if (k == "eq") return ex::eq(expr_from_json(j.at("e")), j.at("v").get<double>());
  if (k == "xor") return ex::xor_(expr_from_json(j.at("a")), expr_from_json(j.at("b")));
  throw std::runtime_error("unknown expression kind: " + k);
}

}  // namespace dsshift
