#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dsshift/oracle.hpp"
#include "dsshift/scenarios.hpp"

using namespace dsshift;

// Frozen reference values (high-precision quadrature, computed independently):
//   int_0^1 sigma(x-1/2) dx / 2-split:
//     E[Y | do(D=1, theta2)] = int_0^{1/2} sigma(x-1/2) dx = 0.21907019637983863
//     tau(theta2)            = -0.28092980362016137
//   sigma(0.25) = 0.5621765008857981
static constexpr double kDeployedMean = 0.21907019637983863;
static constexpr double kTau = -0.28092980362016137;

TEST_CASE("quadrature engine") {
  CHECK(quad::integrate([](double x) { return x * x; }, 0, 1) == Catch::Approx(1.0 / 3).margin(1e-12));
  CHECK(quad::integrate([](double x) { return std::sin(x); }, 0, M_PI) ==
        Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("example1 exact means") {
  Scenario sc = make_example1();
  auto off = oracle::exact_mean(sc, {0, Theta::constant(0.0)});
  CHECK(off.value == Catch::Approx(0.5).margin(1e-8));
  auto on = oracle::exact_mean(sc, {1, ideal_theta2()});
  CHECK(on.value == Catch::Approx(kDeployedMean).margin(1e-8));
  auto fx = oracle::exact_effects(sc, ideal_theta2(), ideal_theta2());
  CHECK(fx.tau.value == Catch::Approx(kTau).margin(1e-8));
  CHECK(fx.rho.value == Catch::Approx(0.0).margin(1e-8));
}

TEST_CASE("example1 conditional expectations") {
  Scenario sc = make_example1();
  auto bp = oracle::cond_expectation(sc, {0, Theta::constant(0.0)}, {{"x", 0.75}});
  CHECK(bp.value == Catch::Approx(0.5621765008857981).margin(1e-12));
  auto dep = oracle::cond_expectation(sc, {1, ideal_theta2()}, {{"x", 0.75}});
  CHECK(dep.value == Catch::Approx(0.0).margin(1e-12));
  auto strat = oracle::cond_expectation(sc, {1, ideal_theta2()}, {{"x", 0.25}, {"a", 0.0}});
  CHECK(strat.value == Catch::Approx(1.0 / (1.0 + std::exp(0.25))).margin(1e-12));
}

TEST_CASE("explore variant shifts tau as computed in closed form") {
  const double eps = 0.02;
  Scenario sc = make_example1_explore(eps);
  auto fx = oracle::exact_effects(sc, ideal_theta2(), ideal_theta2());
  double expect = (1 - eps) * kDeployedMean + eps * (0.5 - kDeployedMean) - (1 - eps) * 0.5;
  CHECK(fx.tau.value == Catch::Approx(expect).margin(1e-8));
  CHECK(std::abs(fx.tau.value - kTau) < 0.02);  // stays inside the acceptance window
}

TEST_CASE("prop3 oracle conditionals") {
  for (int i : {1, 2}) {
    Scenario sc = make_prop3(i);
    auto tgt = oracle::cond_expectation(sc, {0, Theta::scalar(0.7)}, {{"x", 0.3}});
    CHECK(tgt.value == Catch::Approx(0.3 + i).margin(1e-12));
  }
}

TEST_CASE("prop4 oracle values") {
  Scenario m1 = make_prop4(1), m2 = make_prop4(2);
  DomainSetting tgt{1, Theta::identity()};
  CHECK(oracle::cond_expectation(m1, tgt, {{"x", 1.0}}).value == Catch::Approx(1.0).margin(1e-12));
  CHECK(oracle::cond_expectation(m1, tgt, {{"x", 0.0}}).value == Catch::Approx(1.0).margin(1e-12));
  CHECK(oracle::exact_mean(m1, tgt).value == Catch::Approx(1.0).margin(1e-12));
  CHECK(oracle::exact_mean(m2, tgt).value == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("identification check passes on the declared pivots") {
  SECTION("mediator_confounded, enumeration x quadrature probes") {
    Scenario sc = make_mediator_confounded();
    auto rep = oracle::verify_identification(sc, {1, ideal_theta2()}, {0, Theta::constant(0.0)});
    CHECK(rep.max_abs_gap <= 1e-6);
  }
  SECTION("selection scenario with S=1 conditioning") {
    Scenario sc = make_selection();
    auto rep = oracle::verify_identification(sc, {1, ideal_theta2()}, {0, Theta::constant(0.0)},
                                             {}, true);
    CHECK(rep.max_abs_gap <= 1e-6);
  }
  SECTION("example1_explore with pivot {a}") {
    Scenario sc = make_example1_explore();
    auto rep = oracle::verify_identification(sc, {0, Theta::constant(0.0)}, {1, ideal_theta2()});
    CHECK(rep.max_abs_gap <= 1e-6);
  }
}

TEST_CASE("identification check exposes the broken pivot") {
  Scenario sc = make_mediator_confounded();
  auto rep = oracle::verify_identification(sc, {1, ideal_theta2()}, {0, Theta::constant(0.0)},
                                           {"a"});
  CHECK(rep.max_abs_gap >= 0.01);
}

TEST_CASE("absolute continuity violation is reported") {
  Scenario sc = make_example1();  // no exploration: source d=0 has a == 0 only
  CHECK_THROWS_WITH(
      oracle::verify_identification(sc, {0, Theta::constant(0.0)}, {1, ideal_theta2()}),
      Catch::Matchers::ContainsSubstring("absolute continuity violated"));
}

TEST_CASE("nonid demos") {
  SECTION("prop3 pair") {
    auto rep = oracle::nonid_demo(make_prop3(1), make_prop3(2), {1, Theta::scalar(0.5)},
                                  {0, Theta::scalar(0.5)});
    CHECK(rep.source_equal);
    for (const auto& p : rep.probes) {
      CHECK(p.ce_a == Catch::Approx(1.0 + p.x).margin(1e-9));
      CHECK(p.ce_b == Catch::Approx(2.0 + p.x).margin(1e-9));
    }
  }
  SECTION("prop4 pair") {
    auto rep = oracle::nonid_demo(make_prop4(1), make_prop4(2), {0, Theta::identity()},
                                  {1, Theta::identity()});
    CHECK(rep.source_equal);
    for (const auto& p : rep.probes) {
      CHECK(p.ce_a == Catch::Approx(1.0).margin(1e-12));
      CHECK(p.ce_b == Catch::Approx(0.5).margin(1e-12));
    }
  }
  SECTION("identical scenarios agree everywhere") {
    auto rep = oracle::nonid_demo(make_example1(), make_example1(), {1, ideal_theta2()},
                                  {0, Theta::constant(0.0)});
    CHECK(rep.source_equal);
    for (const auto& p : rep.probes) CHECK(p.ce_a == Catch::Approx(p.ce_b).margin(1e-12));
  }
}

TEST_CASE("baseline optimality checker") {
  SECTION("ideal predictor passes on the discretized scenario") {
    auto rep = oracle::verify_baseline_optimality(make_example1_disc10(), ideal_theta2());
    CHECK(rep.pass);
  }
  SECTION("never-alarm fails optimality") {
    auto rep = oracle::verify_baseline_optimality(make_example1_disc10(), Theta::constant(0.0));
    CHECK_FALSE(rep.pass);
    CHECK_FALSE(rep.crit_optimal);
  }
  SECTION("always-alarm fails necessity on the residual-risk variant") {
    auto rep = oracle::verify_baseline_optimality(make_threshold_eps05(), Theta::constant(1.0));
    CHECK_FALSE(rep.pass);
    CHECK_FALSE(rep.crit_necessary);
  }
  SECTION("ideal predictor passes on the residual-risk variant") {
    auto rep = oracle::verify_baseline_optimality(make_threshold_eps05(), ideal_theta2());
    CHECK(rep.pass);
  }
  SECTION("non-threshold scenario is rejected") {
    CHECK_THROWS_WITH(oracle::verify_baseline_optimality(make_mediator_confounded(),
                                                         ideal_theta2()),
                      Catch::Matchers::ContainsSubstring("not a threshold-action scenario"));
  }
}

TEST_CASE("selection probabilities from the oracle") {
  // P(S_s = 1) under the deployed source, used by the selection demo test
  Scenario sc = make_selection();
  auto law = oracle::probe_grid(sc, 101);
  // sanity: the selected-view naive curve differs from the baseline at some x
  auto naive = oracle::cond_expectation(sc, {1, ideal_theta2()}, {{"x", 0.75}}, true);
  auto base = oracle::cond_expectation(sc, {0, Theta::constant(0.0)}, {{"x", 0.75}});
  CHECK(std::abs(naive.value - base.value) > 0.05);
  CHECK(law.size() == 101);
}
