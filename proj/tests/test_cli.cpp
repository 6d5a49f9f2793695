#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "dsshift/epochs.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli() {
  const char* p = std::getenv("DSSHIFT_CLI");
  return p ? p : "./dsshift_cli";
}

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  RunResult r;
  FILE* p = popen((cli() + " " + args + " 2>/dev/null").c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::size_t k;
  while ((k = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), k);
  int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

json parse_no_ts(const std::string& s) {
  json j = json::parse(s);
  j.erase("timestamp");
  return j;
}

fs::path scratch(const std::string& leaf) {
  fs::path d = fs::temp_directory_path() / "dsshift_cli_test" / leaf;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("effect reruns are identical once the timestamp is stripped") {
  auto a = run("effect t1a --n 5000 --seed 9 --replicates 50");
  auto b = run("effect t1a --n 5000 --seed 9 --replicates 50");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  json ja = parse_no_ts(a.out), jb = parse_no_ts(b.out);
  CHECK(ja == jb);
  CHECK(ja["scenario_used"] == "example1_explore");
  CHECK(std::abs(ja["report"]["estimate"].get<double>() - ja["oracle"].get<double>()) < 0.05);
  CHECK(ja["report"]["ci_high"].get<double>() < 0.0);
}

TEST_CASE("effect accepts example1 by routing to its exploration variant") {
  auto r = run("effect t1a --scenario example1 --n 5000 --seed 3 --replicates 50");
  REQUIRE(r.code == 0);
  json j = parse_no_ts(r.out);
  CHECK(j["scenario"] == "example1");
  CHECK(j["scenario_used"] == "example1_explore");
}

TEST_CASE("errors are machine-readable JSON with nonzero exit") {
  auto bad_sc = run("effect t1a --scenario nope");
  CHECK(bad_sc.code != 0);
  CHECK(json::parse(bad_sc.out).contains("error"));

  auto bad_flag = run("effect t1a --no-such-flag");
  CHECK(bad_flag.code != 0);
  CHECK(json::parse(bad_flag.out)["error"]["type"] == "usage");

  auto bad_task = run("effect t9");
  CHECK(bad_task.code != 0);
  CHECK(json::parse(bad_task.out).contains("error"));

  auto no_sub = run("");
  CHECK(no_sub.code != 0);
}

TEST_CASE("simulate writes the dataset CSV") {
  fs::path d = scratch("sim");
  auto r = run("simulate --scenario example1_explore --d 1 --theta ideal --n 500 --seed 2 --out " +
               d.string());
  REQUIRE(r.code == 0);
  json j = parse_no_ts(r.out);
  CHECK(j["n"] == 500);
  std::ifstream in(d / "dataset.csv");
  REQUIRE(in.good());
  std::string hdr;
  std::getline(in, hdr);
  CHECK(hdr.rfind("domain_d,domain_theta_id,x,", 0) == 0);
  CHECK(run("simulate --n 10").code != 0);  // --out is required
}

TEST_CASE("baseline and pivot-check produce their plot files") {
  fs::path d = scratch("base");
  auto r = run("baseline --n 5000 --seed 5 --out " + d.string());
  REQUIRE(r.code == 0);
  CHECK(parse_no_ts(r.out)["sup_error"].get<double>() < 0.1);
  std::ifstream in(d / "baseline_curve.csv");
  REQUIRE(in.good());
  std::string hdr;
  std::getline(in, hdr);
  CHECK(hdr == "x,y_true,y_fitted");

  fs::path p = scratch("piv");
  auto pc = run("pivot-check --n 5000 --seed 11 --out " + p.string());
  REQUIRE(pc.code == 0);
  json pj = parse_no_ts(pc.out);
  CHECK(pj["scenario"] == "mediator_confounded");
  CHECK(pj["diagnostic"].contains("p_value"));
  CHECK(fs::exists(p / "strata.csv"));
}

TEST_CASE("epochs subcommand runs a config end to end") {
  fs::path d = scratch("ep");
  fs::create_directories(d);
  json cfg{{"scenario", "example1_explore"},
           {"pivot", {{"x", {"x"}}, {"z", {"a"}}}},
           {"bootstrap", {{"replicates", 50}, {"level", 0.9}, {"seed", 99}}},
           {"epochs",
            {{{"rule", "off"}, {"n", 4000}, {"seed", 1}},
             {{"rule", "deploy-trained"}, {"n", 4000}, {"seed", 2}},
             {{"rule", "deploy-naive"}, {"n", 4000}, {"seed", 3}, {"force", true}}}},
           {"out", (d / "out").string()}};
  std::ofstream(d / "cfg.json") << cfg.dump();
  auto r = run("epochs --config " + (d / "cfg.json").string());
  REQUIRE(r.code == 0);
  json j = parse_no_ts(r.out);
  REQUIRE(j["epochs"].size() == 3);
  CHECK(j["epochs"][0]["deployed"] == false);
  CHECK(j["epochs"][1]["deployed"] == true);
  CHECK(j["epochs"][1]["mean_y"].get<double>() < j["epochs"][0]["mean_y"].get<double>());
  CHECK(j["epochs"][2]["effect_kind"] == "rho");
  for (const char* f : {"epoch_1_data.csv", "epoch_2_report.json", "effect_report.json",
                        "epoch_means.csv"})
    CHECK(fs::exists(d / "out" / f));
}

TEST_CASE("epoch config validation") {
  using namespace dsshift;
  ep::ExperimentConfig cfg;
  cfg.epochs = {{"deploy-naive", 1000, 1, false, ""}};
  CHECK_THROWS_WITH(ep::run_epochs(cfg),
                    Catch::Matchers::ContainsSubstring("requires a preceding epoch"));
  cfg.epochs = {{"off", 1000, 1, false, ""}, {"off", 1000, 1, false, ""}};
  CHECK_THROWS_WITH(ep::run_epochs(cfg), Catch::Matchers::ContainsSubstring("distinct"));
  cfg.epochs = {{"off", 1000, 1, false, ""}, {"sideways", 1000, 2, false, ""}};
  CHECK_THROWS_WITH(ep::run_epochs(cfg), Catch::Matchers::ContainsSubstring("unknown rule"));
  cfg.epochs = {{"off", 1000, 1, false, ""}, {"deploy-naive", 1000, 2, false, ""}};
  CHECK_THROWS_WITH(ep::run_epochs(cfg),
                    Catch::Matchers::ContainsSubstring("previous epoch to be deployed"));
}
