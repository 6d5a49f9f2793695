#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dsshift/estimator.hpp"
#include "dsshift/oracle.hpp"
#include "dsshift/scenarios.hpp"

using namespace dsshift;
using est::PivotSpec;

static double sigma(double t) { return 1.0 / (1.0 + std::exp(-t)); }

TEST_CASE("degenerate case reduces to direct regression") {
  Scenario sc = make_example1_explore();
  Dataset src = sample(sc, {0, Theta::constant(0.0)}, 5000, 1);
  PivotSpec pv{{"x"}, {}};
  auto rr = est::repeated_regression(src, src, pv);
  CHECK(rr.warning.find("degenerate") != std::string::npos);
  // direct regression of y on x over the same rows
  auto rows = est::detail::labeled_rows(src);
  auto x = est::detail::column_matrix(src, {"x"}, rows);
  auto y = est::detail::label_vector(src, rows);
  auto direct = regress::fit(y, x, {"x"}, regress::FitConfig{});
  for (std::size_t i = 0; i < rows.size(); i += 97) {
    Eigen::RowVectorXd r(1);
    r[0] = src.col("x")[rows[i]];
    CHECK(std::abs(rr.outer.predict(r) - direct.predict(r)) < 1e-6);
  }
}

TEST_CASE("baseline recovery from the deployed exploration domain") {
  Scenario sc = make_example1_explore();
  Dataset src = sample(sc, {1, ideal_theta2()}, 100000, 11);
  Dataset tgt = sample(sc, {0, Theta::constant(0.0)}, 100000, 12);
  PivotSpec pv{{"x"}, {"a"}};
  // degree 2: the default cubic basis extrapolates poorly into the sparse
  // exploration strata at the feature boundary
  regress::FitConfig cfg;
  cfg.degree = 2;
  auto rr = est::repeated_regression(src, tgt, pv, cfg);
  double sup = 0.0;
  for (int k = 0; k <= 100; ++k) {
    double xv = k / 100.0;
    Eigen::RowVectorXd r(1);
    r[0] = xv;
    sup = std::max(sup, std::abs(rr.outer.predict(r) - sigma(xv - 0.5)));
  }
  CHECK(sup <= 0.03);
}

TEST_CASE("finite-SCM recovery on prop4_m1's target domain") {
  Scenario sc = make_prop4(1);
  DomainSetting tgt{1, Theta::identity()};
  Dataset src = sample(sc, tgt, 100000, 3);
  Dataset dst = sample(sc, tgt, 100000, 4);
  PivotSpec pv{{"x"}, {"z1"}};
  regress::FitConfig cfg;
  cfg.degree = 1;
  auto rr = est::repeated_regression(src, dst, pv, cfg);
  for (double xv : {0.0, 1.0}) {
    Eigen::RowVectorXd r(1);
    r[0] = xv;
    CHECK(std::abs(rr.outer.predict(r) - 1.0) < 0.02);
  }
  auto rep = est::estimate_mean(src, dst, pv, cfg, {50, 0.9, 77});
  CHECK(std::abs(rep.estimate - 1.0) < 0.02);
}

TEST_CASE("T1.a mean transport on the exploration variant") {
  Scenario sc = make_example1_explore();
  Dataset src = sample(sc, {0, Theta::constant(0.0)}, 100000, 21);
  Dataset tgt = sample(sc, {1, ideal_theta2()}, 100000, 22);
  PivotSpec pv{{"x"}, {"a"}};
  auto rep = est::estimate_mean(src, tgt, pv, regress::FitConfig{}, {50, 0.9, 5});
  CHECK(std::abs(rep.estimate - 0.21907019637983863) < 0.02);
  CHECK(rep.ci_low <= rep.estimate);
  CHECK(rep.estimate <= rep.ci_high);
  CHECK(rep.n_source == 100000);
}

TEST_CASE("target equal to source reproduces the sample mean") {
  Scenario sc = make_example1_explore();
  Dataset src = sample(sc, {0, Theta::constant(0.0)}, 20000, 31);
  double ybar = 0;
  for (std::size_t i = 0; i < src.rows(); ++i) ybar += src.y_at(i);
  ybar /= static_cast<double>(src.rows());
  double se = std::sqrt(ybar * (1 - ybar) / static_cast<double>(src.rows()));
  auto rep = est::estimate_mean(src, src, {{"x"}, {"a"}}, regress::FitConfig{}, {50, 0.9, 3});
  CHECK(std::abs(rep.estimate - ybar) < 2 * se);
}

TEST_CASE("pseudo-labels stay in (0,1) under the logit inner model") {
  Scenario sc = make_example1_explore();
  Dataset src = sample(sc, {1, ideal_theta2()}, 20000, 41);
  Dataset tgt = sample(sc, {0, Theta::constant(0.0)}, 20000, 42);
  auto rr = est::repeated_regression(src, tgt, {{"x"}, {"a"}});
  for (double v : rr.y_tilde) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("overlap diagnostics") {
  Scenario sc = make_example1();
  SECTION("identical source and target") {
    Dataset a = sample(sc, {0, Theta::constant(0.0)}, 5000, 51);
    auto rep = est::check_overlap(a, a, {{"x"}, {"a"}});
    CHECK(rep.violations.empty());
    CHECK(rep.worst_ratio > 0.5);
  }
  SECTION("target action stratum missing from the source") {
    Dataset src = sample(sc, {0, Theta::constant(0.0)}, 5000, 52);  // a == 0 always
    Dataset tgt = sample(sc, {1, ideal_theta2()}, 5000, 53);
    auto rep = est::check_overlap(src, tgt, {{"x"}, {"a"}});
    CHECK_FALSE(rep.violations.empty());
    for (const auto& v : rep.violations) CHECK(v.z == std::vector<double>{1.0});
  }
  SECTION("deployed source lacks idle strata above the threshold") {
    Dataset src = sample(sc, {1, ideal_theta2()}, 5000, 54);  // a = 1{x > 1/2}
    Dataset tgt = sample(sc, {0, Theta::constant(0.0)}, 5000, 55);
    auto rep = est::check_overlap(src, tgt, {{"x"}, {"a"}});
    bool high_bin_a0 = false;
    for (const auto& v : rep.violations)
      if (v.z == std::vector<double>{0.0} && v.x_bins[0] >= 5) high_bin_a0 = true;
    CHECK(high_bin_a0);
  }
  SECTION("estimator refuses to extrapolate") {
    Dataset src = sample(sc, {0, Theta::constant(0.0)}, 5000, 56);
    Dataset tgt = sample(sc, {1, ideal_theta2()}, 5000, 57);
    CHECK_THROWS_AS(est::repeated_regression(src, tgt, {{"x"}, {"a"}}), est::OverlapError);
    CHECK_NOTHROW(est::repeated_regression(src, tgt, {{"x"}, {"a"}}, regress::FitConfig{}, true));
  }
}

TEST_CASE("bootstrap mechanics") {
  SECTION("constant estimator collapses the interval") {
    auto br = est::bootstrap([](std::uint64_t) { return 3.25; }, {60, 0.9, 1});
    CHECK(br.ci_low == 3.25);
    CHECK(br.ci_high == 3.25);
  }
  SECTION("too few replicates") {
    CHECK_THROWS_WITH(est::bootstrap([](std::uint64_t) { return 0.0; }, {49, 0.9, 1}),
                      Catch::Matchers::ContainsSubstring("50"));
  }
  SECTION("excessive failures") {
    CHECK_THROWS_WITH(est::bootstrap(
                          [](std::uint64_t s) -> double {
                            if (s % 2 == 0) throw std::runtime_error("boom");
                            return 1.0;
                          },
                          {100, 0.9, 0}),
                      Catch::Matchers::ContainsSubstring(">10%"));
  }
  SECTION("deterministic in the seed") {
    auto thunk = [](std::uint64_t s) { return rng::uniform01(s, 0, 0); };
    auto a = est::bootstrap(thunk, {80, 0.9, 9});
    auto b = est::bootstrap(thunk, {80, 0.9, 9});
    CHECK(a.ci_low == b.ci_low);
    CHECK(a.ci_high == b.ci_high);
  }
}

TEST_CASE("pooled epochs fit equals the concatenated fit") {
  Scenario sc = make_example1_explore();
  Dataset e1 = sample(sc, {1, ideal_theta2()}, 4000, 61);
  Dataset e2 = sample(sc, {1, ideal_theta2()}, 4000, 62);
  Dataset ab = est::concat({e1, e2});
  Dataset ba = est::concat({e2, e1});
  auto rows_ab = est::detail::labeled_rows(ab);
  auto rows_ba = est::detail::labeled_rows(ba);
  auto fit = [&](const Dataset& ds, const std::vector<std::size_t>& rows, int degree) {
    regress::FitConfig cfg;
    cfg.tol = 1e-12;  // drive both optimizations to the same point
    cfg.degree = degree;
    return regress::fit(est::detail::label_vector(ds, rows),
                        est::detail::column_matrix(ds, {"x", "a"}, rows), {"x", "a"}, cfg);
  };
  // coefficients identified at degree 1 (binary a makes a^2, a^3 collinear at
  // higher degree, leaving coefficients ridge-determined up to float noise)
  auto ma = fit(ab, rows_ab, 1);
  auto mb = fit(ba, rows_ba, 1);
  CHECK((ma.coef - mb.coef).cwiseAbs().maxCoeff() < 1e-8);
  auto pa = fit(ab, rows_ab, 3);
  auto pb = fit(ba, rows_ba, 3);
  for (double xv : {0.1, 0.5, 0.9})
    for (double av : {0.0, 1.0}) {
      Eigen::RowVectorXd r(2);
      r << xv, av;
      CHECK(std::abs(pa.predict(r) - pb.predict(r)) < 1e-8);
    }
}
