#pragma once

#include <map>
#include <string>
#include <vector>

#include "dsshift/scm.hpp"

namespace dsshift {

// Built-in scenarios. All equations come from the closed expression library so
// the oracle can evaluate them exactly.

// X in [0,1]; alert A = D * 1{Yhat > 1/2}; Y ~ Ber(sigma(x-1/2) * (1-A)).
inline Scenario make_example1() {
  using namespace ex;
  Scenario sc;
  sc.name = "example1";
  sc.exogenous = {{"Ux", NoiseSpec::uniform(0, 1)}};
  sc.nodes = {
      {"x", Role::Feature, StateSpace::unit_interval(), Equation::det(noise("Ux")), {}},
      {"yhat", Role::Prediction, StateSpace::unit_interval(), Equation::prediction(),
       {"x", kInputTheta}},
      {"a", Role::Action, StateSpace::binary(),
       Equation::det(product({domain_d(), gt(parent("yhat"), 0.5)})), {kInputD, "yhat"}},
      {"y", Role::Outcome, StateSpace::binary(),
       Equation::bernoulli(product({sigmoid(affine(-0.5, {{1.0, parent("x")}})),
                                    affine(1.0, {{-1.0, parent("a")}})})),
       {"x", "a"}},
  };
  sc.pivot = {"a"};
  return sc;
}

// Example 1 with epsilon-exploration: the action is flipped with probability
// eps independently of everything else, in both domains. This keeps {X, A} a
// valid pivot while restoring overlap between deployed and idle domains.
inline Scenario make_example1_explore(double eps = 0.02) {
  using namespace ex;
  Scenario sc = make_example1();
  sc.name = "example1_explore";
  sc.exogenous.push_back({"flip", NoiseSpec::bernoulli(eps)});
  sc.nodes[2].eq =
      Equation::det(xor_(product({domain_d(), gt(parent("yhat"), 0.5)}), noise("flip")));
  return sc;
}

// Mediated deployment with a binary confounder C of A and Y. The declared
// pivot is {A, C}; dropping C breaks it.
inline Scenario make_mediator_confounded() {
  using namespace ex;
  Scenario sc;
  sc.name = "mediator_confounded";
  sc.exogenous = {{"Ux", NoiseSpec::uniform(0, 1)}};
  auto xc = affine(-0.5, {{1.0, parent("x")}});
  auto yc = affine(-0.5, {{1.0, parent("yhat")}});
  sc.nodes = {
      {"x", Role::Feature, StateSpace::unit_interval(), Equation::det(noise("Ux")), {}},
      {"c", Role::Confounder, StateSpace::binary(), Equation::bernoulli(constant(0.5)), {}},
      {"yhat", Role::Prediction, StateSpace::unit_interval(), Equation::prediction(),
       {"x", kInputTheta}},
      {"a", Role::Action, StateSpace::binary(),
       Equation::bernoulli(sigmoid(affine(-1.0, {{2.0, domain_d()},
                                                 {4.0, product({domain_d(), yc})},
                                                 {2.5, parent("c")},
                                                 {-0.8, xc}}))),
       {kInputD, "yhat", "c", "x"}},
      {"y", Role::Outcome, StateSpace::binary(),
       Equation::bernoulli(sigmoid(affine(-0.5, {{1.5, affine(-0.5, {{1.0, parent("x")}})},
                                                 {2.4, parent("c")},
                                                 {-2.0, parent("a")}}))),
       {"x", "c", "a"}},
  };
  sc.pivot = {"a", "c"};
  return sc;
}

// Selective sampling and selective labelling downstream of the action, with a
// mediator M on the selection-to-outcome path. Pivot {A, C, M}.
inline Scenario make_selection() {
  using namespace ex;
  Scenario sc;
  sc.name = "selection";
  sc.exogenous = {{"Ux", NoiseSpec::uniform(0, 1)}, {"flip", NoiseSpec::bernoulli(0.05)}};
  auto xc = [] { return affine(-0.5, {{1.0, parent("x")}}); };
  sc.nodes = {
      {"x", Role::Feature, StateSpace::unit_interval(), Equation::det(noise("Ux")), {}},
      {"c", Role::Confounder, StateSpace::binary(), Equation::bernoulli(constant(0.5)), {}},
      {"yhat", Role::Prediction, StateSpace::unit_interval(), Equation::prediction(),
       {"x", kInputTheta}},
      {"a", Role::Action, StateSpace::binary(),
       Equation::det(xor_(product({domain_d(), gt(parent("yhat"), 0.5)}), noise("flip"))),
       {kInputD, "yhat"}},
      {"s_s", Role::SelectionSample, StateSpace::binary(),
       Equation::bernoulli(sigmoid(affine(
           0.8, {{0.6, xc()}, {-2.0, parent("c")}, {1.0, parent("a")}}))),
       {"x", "c", "a"}},
      {"s_l", Role::SelectionLabel, StateSpace::binary(),
       Equation::bernoulli(sigmoid(affine(1.5, {{-1.0, parent("a")}}))), {"a"}},
      {"s", Role::Aux, StateSpace::binary(),
       Equation::det(product({parent("s_s"), parent("s_l")})), {"s_s", "s_l"}},
      {"m", Role::Mediator, StateSpace::binary(),
       Equation::bernoulli(affine(0.25, {{0.5, parent("s")}})), {"s"}},
      {"y", Role::Outcome, StateSpace::binary(),
       Equation::bernoulli(sigmoid(affine(-0.6, {{1.6, xc()},
                                                 {1.4, parent("c")},
                                                 {-1.6, parent("a")},
                                                 {0.8, parent("m")}}))),
       {"x", "c", "a", "m"}},
  };
  sc.pivot = {"a", "c", "m"};
  return sc;
}

// Linear-Gaussian pair: X ~ N(0,1), Yhat = theta*X + i*1{theta != theta'},
// Y = X + 1{D=1}*Yhat + i*1{D != d'}. Source (d', theta') laws coincide for
// i=1,2; target (d=0) conditional expectations are 1+x vs 2+x.
inline Scenario make_prop3(int i, int d_src = 1, double theta_src = 0.5) {
  using namespace ex;
  Scenario sc;
  sc.name = "prop3_m" + std::to_string(i);
  sc.exogenous = {{"Ex", NoiseSpec::gaussian(0, 1)}};
  auto d_ne_src = affine(1.0, {{-1.0, eq(domain_d(), static_cast<double>(d_src))}});
  sc.nodes = {
      {"x", Role::Feature, StateSpace::real_line(), Equation::det(noise("Ex")), {}},
      {"yhat", Role::Prediction, StateSpace::real_line(),
       Equation::det(affine(0.0, {{1.0, product({theta_scalar(), parent("x")})},
                                  {static_cast<double>(i), theta_differs(theta_src)}})),
       {"x", kInputTheta}},
      {"y", Role::Outcome, StateSpace::real_line(),
       Equation::det(affine(0.0, {{1.0, parent("x")},
                                  {1.0, product({eq(domain_d(), 1.0), parent("yhat")})},
                                  {static_cast<double>(i), d_ne_src}})),
       {"x", "yhat", kInputD}},
  };
  sc.pivot = {};
  return sc;
}

// Binary XOR pair sharing the source law of (X, Z1, Y) while disagreeing on
// the target. m1: Z1 = XOR(D, E_z1y), so target E[Y|X] = d. m2 gates the
// shared noise out of Z1 on the target domain, so target E[Y|X] = 1/2.
inline Scenario make_prop4(int which, int d_target = 1) {
  using namespace ex;
  Scenario sc;
  sc.name = "prop4_m" + std::to_string(which);
  sc.exogenous = {{"Ex", NoiseSpec::bernoulli(0.5)},
                  {"Ez1", NoiseSpec::bernoulli(0.5)},
                  {"Ez1y", NoiseSpec::bernoulli(0.5)}};
  const double d = static_cast<double>(d_target);
  ExprPtr z1;
  if (which == 1) {
    z1 = xor_(domain_d(), noise("Ez1y"));
  } else {
    auto at_target = product({eq(domain_d(), d), xor_(domain_d(), noise("Ez1"))});
    auto off_target = product({affine(1.0, {{-1.0, eq(domain_d(), d)}}),
                               xor_(domain_d(), noise("Ez1y"))});
    z1 = affine(0.0, {{1.0, at_target}, {1.0, off_target}});
  }
  sc.nodes = {
      {"x", Role::Feature, StateSpace::binary(), Equation::det(noise("Ex")), {}},
      {"yhat", Role::Prediction, StateSpace::binary(), Equation::prediction(),
       {"x", kInputTheta}},
      // yhat is a declared parent so the deployment graph holds (Ch(D) =
      // Ch(Yhat)); the equations do not react to it.
      {"z1", Role::Aux, StateSpace::binary(), Equation::det(z1), {kInputD, "yhat"}},
      {"y", Role::Outcome, StateSpace::binary(),
       Equation::det(xor_(parent("z1"), noise("Ez1y"))), {"z1"}},
  };
  sc.pivot = {"z1"};
  return sc;
}

// Discretized Example 1: X uniform on ten states, epsilon(x) = 0 (the action
// removes all risk). Used by the baseline-optimality checker.
inline Scenario make_example1_disc10() {
  using namespace ex;
  Scenario sc;
  sc.name = "example1_disc10";
  std::vector<double> xs;
  for (int k = 0; k < 10; ++k) xs.push_back(0.05 + 0.1 * k);
  sc.exogenous = {{"Ux", NoiseSpec::finite_uniform(xs)}};
  sc.nodes = {
      {"x", Role::Feature, StateSpace::finite(xs), Equation::det(noise("Ux")), {}},
      {"yhat", Role::Prediction, StateSpace::unit_interval(), Equation::prediction(),
       {"x", kInputTheta}},
      {"a", Role::Action, StateSpace::binary(),
       Equation::det(product({domain_d(), gt(parent("yhat"), 0.0)})), {kInputD, "yhat"}},
      {"y", Role::Outcome, StateSpace::binary(),
       Equation::bernoulli(product({sigmoid(affine(-0.5, {{1.0, parent("x")}})),
                                    affine(1.0, {{-1.0, parent("a")}})})),
       {"x", "a"}},
  };
  sc.pivot = {"a"};
  return sc;
}

// Variant where acting leaves residual risk 1/2: Y ~ Ber(sigma(x-1/2)(1-A) +
// A/2), so the action only pays where sigma(x-1/2) > 1/2.
inline Scenario make_threshold_eps05() {
  using namespace ex;
  Scenario sc = make_example1_disc10();
  sc.name = "threshold_eps05";
  sc.nodes[2].eq = Equation::det(product({domain_d(), gt(parent("yhat"), 0.5)}));
  auto residual = product({sigmoid(affine(-0.5, {{1.0, parent("x")}})),
                           affine(1.0, {{-1.0, parent("a")}})});
  sc.nodes[3].eq =
      Equation::bernoulli(affine(0.0, {{1.0, residual}, {0.5, parent("a")}}));
  return sc;
}

inline std::map<std::string, Scenario> scenario_library() {
  std::map<std::string, Scenario> lib;
  for (Scenario sc : {make_example1(), make_example1_explore(), make_mediator_confounded(),
                      make_selection(), make_prop3(1), make_prop3(2), make_prop4(1),
                      make_prop4(2), make_example1_disc10(), make_threshold_eps05()})
    lib.emplace(sc.name, std::move(sc));
  return lib;
}

// The ideal epoch-2 predictor of Example 1: Yhat(x) = sigma(x - 1/2).
inline Theta ideal_theta2() { return Theta::logistic_linear(1.0, -0.5); }

}  // namespace dsshift
