#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsshift/effects.hpp"
#include "dsshift/oracle.hpp"
#include "dsshift/scenarios.hpp"
#include "dsshift/selection.hpp"
#include "dsshift/serialize.hpp"

namespace dsshift::ep {

struct EpochSpec {
  std::string rule;  // off | deploy-trained | deploy-naive | deploy-corrected | deploy-model-file
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  bool force = false;       // override the deploy decision rule
  std::string model_file;   // deploy-model-file only
};

struct ExperimentConfig {
  std::string scenario = "example1_explore";  // library name or path to a scenario file
  std::vector<EpochSpec> epochs;
  est::PivotSpec pivot{{"x"}, {"a"}};
  regress::FitConfig regression;
  int baseline_degree = 2;  // quadratic basis for the corrected predictor; the
                            // cubic extrapolates poorly into thin exploration strata
  est::BootstrapConfig bootstrap;
  std::string out;  // output directory; empty disables file output
};

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.scenario = j.value("scenario", cfg.scenario);
  for (const auto& e : j.at("epochs")) {
    EpochSpec es;
    es.rule = e.at("rule");
    es.n = e.value("n", es.n);
    es.seed = e.at("seed").get<std::uint64_t>();
    es.force = e.value("force", false);
    es.model_file = e.value("model_file", std::string{});
    cfg.epochs.push_back(std::move(es));
  }
  if (j.contains("pivot")) {
    cfg.pivot.x_names = j["pivot"].value("x", cfg.pivot.x_names);
    cfg.pivot.z_names = j["pivot"].value("z", cfg.pivot.z_names);
  }
  if (j.contains("regression")) {
    const auto& r = j["regression"];
    cfg.regression.degree = r.value("degree", cfg.regression.degree);
    cfg.regression.ridge = r.value("ridge", cfg.regression.ridge);
    cfg.regression.tol = r.value("tol", cfg.regression.tol);
    cfg.regression.max_iter = r.value("max_iter", cfg.regression.max_iter);
  }
  cfg.baseline_degree = j.value("baseline_degree", cfg.baseline_degree);
  if (j.contains("bootstrap")) {
    const auto& b = j["bootstrap"];
    cfg.bootstrap.replicates = b.value("replicates", cfg.bootstrap.replicates);
    cfg.bootstrap.level = b.value("level", cfg.bootstrap.level);
    cfg.bootstrap.seed = b.value("seed", cfg.bootstrap.seed);
  }
  cfg.out = j.value("out", std::string{});
  return cfg;
}

struct EpochReport {
  int t = 0;
  std::string rule;
  bool deployed = false;
  std::string theta_id;
  std::size_t n = 0;
  double mean_y = 0.0, mean_ci_low = 0.0, mean_ci_high = 0.0;
  std::string effect_kind;  // "tau" or "rho" when an estimate was made
  est::EffectReport effect;
  std::vector<std::string> files;
};

inline nlohmann::json epoch_report_to_json(const EpochReport& r, const est::PivotSpec& pivot) {
  nlohmann::json j;
  j["epoch"] = r.t;
  j["rule"] = r.rule;
  j["deployed"] = r.deployed;
  j["theta_id"] = r.theta_id;
  j["n"] = r.n;
  j["mean_y"] = r.mean_y;
  j["mean_ci_low"] = r.mean_ci_low;
  j["mean_ci_high"] = r.mean_ci_high;
  if (!r.effect_kind.empty()) {
    j["effect_kind"] = r.effect_kind;
    j["effect"] = effect_report_to_json(r.effect, pivot);
  }
  j["files"] = r.files;
  return j;
}

namespace detail {

inline void mean_with_ci(const Dataset& ds, double level, EpochReport& rep) {
  auto rows = est::detail::labeled_rows(ds);
  double m = 0.0;
  for (auto i : rows) m += ds.y_at(i);
  m /= static_cast<double>(rows.size());
  double se = std::sqrt(std::max(m * (1.0 - m), 1e-12) / static_cast<double>(rows.size()));
  double z = rng::normal_quantile(0.5 + level / 2.0);
  rep.mean_y = m;
  rep.mean_ci_low = m - z * se;
  rep.mean_ci_high = m + z * se;
}

inline Theta train_on(const Dataset& ds, const std::vector<std::string>& x_names,
                      const regress::FitConfig& cfg, const std::string& id) {
  auto m = fx::naive_retrain(ds, x_names, cfg);
  return Theta::fitted(std::make_shared<regress::FittedModel>(std::move(m)), id);
}

}  // namespace detail

// The epoch loop: sample, train on the previous epoch per the rule, estimate
// the relevant effect from past data before changing the domain, and deploy
// only when the estimate favors it (or the epoch is forced).
inline std::vector<EpochReport> run_epochs(const ExperimentConfig& cfg) {
  if (cfg.epochs.empty()) throw std::invalid_argument("epochs: config has no epochs");
  {
    std::set<std::uint64_t> seeds;
    for (const auto& e : cfg.epochs)
      if (!seeds.insert(e.seed).second)
        throw std::invalid_argument("epochs: seeds must be distinct per epoch");
  }
  Scenario sc;
  {
    auto lib = scenario_library();
    auto it = lib.find(cfg.scenario);
    sc = it != lib.end() ? it->second : load_scenario_file(cfg.scenario);
  }

  namespace fs = std::filesystem;
  if (!cfg.out.empty()) fs::create_directories(cfg.out);

  std::vector<EpochReport> reports;
  std::vector<Dataset> data;
  std::vector<DomainSetting> settings;
  const DomainSetting off{0, Theta::constant(0.0)};
  nlohmann::json effect_log = nlohmann::json::array();

  for (std::size_t t = 0; t < cfg.epochs.size(); ++t) {
    const EpochSpec& spec = cfg.epochs[t];
    EpochReport rep;
    rep.t = static_cast<int>(t + 1);
    rep.rule = spec.rule;
    rep.n = spec.n;
    DomainSetting setting = off;
    // covariate-only draws for pre-deployment transport use an offset seed so
    // they never collide with the epoch samples
    const std::uint64_t aux_seed = spec.seed + 0x5851f42d4c957f2dULL;

    if (spec.rule == "off") {
      setting = off;
    } else if (t == 0) {
      throw std::invalid_argument("epochs: rule '" + spec.rule +
                                  "' requires a preceding epoch");
    } else if (spec.rule == "deploy-trained") {
      Theta th = detail::train_on(data.back(), cfg.pivot.x_names, cfg.regression,
                                  "trained-epoch" + std::to_string(t + 1));
      Dataset probe = sample(sc, {1, th}, spec.n, aux_seed);
      auto task = fx::deployment_effect_pre(data.back(), probe, cfg.pivot, cfg.regression,
                                            cfg.bootstrap);
      rep.effect_kind = "tau";
      rep.effect = task.report;
      bool deploy = spec.force || task.report.ci_high < 0.0;
      setting = deploy ? DomainSetting{1, th} : settings.back();
      rep.deployed = deploy;
    } else if (spec.rule == "deploy-naive") {
      if (settings.back().d != 1)
        throw std::invalid_argument(
            "epochs: deploy-naive requires the previous epoch to be deployed");
      Theta th = detail::train_on(data.back(), cfg.pivot.x_names, cfg.regression,
                                  "naive-epoch" + std::to_string(t + 1));
      Dataset probe = sample(sc, {1, th}, spec.n, aux_seed);
      auto task = fx::retraining_effect(data.back(), probe, cfg.pivot, cfg.regression,
                                        cfg.bootstrap);
      rep.effect_kind = "rho";
      rep.effect = task.report;
      bool deploy = spec.force || task.report.ci_high < 0.0;
      setting = deploy ? DomainSetting{1, th} : settings.back();
      rep.deployed = deploy;
    } else if (spec.rule == "deploy-corrected") {
      if (settings.back().d != 1)
        throw std::invalid_argument(
            "epochs: deploy-corrected requires the previous epoch to be deployed");
      Dataset probe = sample(sc, {0, settings.back().theta}, spec.n, aux_seed);
      regress::FitConfig bcfg = cfg.regression;
      bcfg.degree = cfg.baseline_degree;
      // pool every past epoch: the pivot makes E[Y | X, Z] domain-invariant,
      // and the idle epochs carry the action-free strata the deployed epoch
      // only visits through exploration
      auto rr = fx::baseline_predictor(est::concat(data), probe, cfg.pivot, bcfg);
      Theta th = Theta::fitted(std::make_shared<regress::FittedModel>(rr.outer),
                               "corrected-epoch" + std::to_string(t + 1));
      setting = {1, th};
      rep.deployed = true;
      if (!cfg.out.empty()) {
        // plot data: fitted baseline against the scenario oracle
        std::ofstream os(cfg.out + "/baseline_curve.csv");
        os.precision(17);
        os << "x,y_true,y_fitted\n";
        for (double x : oracle::probe_grid(sc, 21)) {
          Eigen::RowVectorXd r(1);
          r[0] = x;
          os << x << ',' << oracle::cond_expectation(sc, off, {{sc.feature().name, x}}).value
             << ',' << rr.outer.predict(r) << '\n';
        }
        rep.files.push_back("baseline_curve.csv");
        auto naive = fx::naive_retrain(data.back(), cfg.pivot.x_names, cfg.regression);
        std::ofstream bs(cfg.out + "/bias_curve.csv");
        bs.precision(17);
        bs << "x,bias\n";
        for (const auto& [x, b] :
             fx::performative_bias(naive, rr.outer, oracle::probe_grid(sc, 21)))
          bs << x << ',' << b << '\n';
        rep.files.push_back("bias_curve.csv");
      }
    } else if (spec.rule == "deploy-model-file") {
      if (spec.model_file.empty())
        throw std::invalid_argument("epochs: deploy-model-file needs model_file");
      std::ifstream in(spec.model_file);
      if (!in) throw std::invalid_argument("epochs: cannot open " + spec.model_file);
      nlohmann::json mj;
      in >> mj;
      Theta th = Theta::fitted(
          std::make_shared<regress::FittedModel>(regress::model_from_json(mj)),
          "file:" + spec.model_file);
      setting = {1, th};
      rep.deployed = true;
    } else {
      throw std::invalid_argument("epochs: unknown rule '" + spec.rule + "'");
    }

    Dataset ds = sample(sc, setting, spec.n, spec.seed);
    rep.theta_id = setting.theta.id;
    if (spec.rule == "off") rep.deployed = setting.d == 1;
    detail::mean_with_ci(ds, cfg.bootstrap.level, rep);

    if (!cfg.out.empty()) {
      std::string dname = "epoch_" + std::to_string(rep.t) + "_data.csv";
      std::ofstream os(cfg.out + "/" + dname);
      write_csv(ds, os);
      rep.files.push_back(dname);
      std::string rname = "epoch_" + std::to_string(rep.t) + "_report.json";
      std::ofstream rs(cfg.out + "/" + rname);
      rs << epoch_report_to_json(rep, cfg.pivot).dump(2) << '\n';
      rep.files.push_back(rname);
    }
    if (!rep.effect_kind.empty()) {
      nlohmann::json e = effect_report_to_json(rep.effect, cfg.pivot);
      e["epoch"] = rep.t;
      e["kind"] = rep.effect_kind;
      effect_log.push_back(std::move(e));
    }

    data.push_back(std::move(ds));
    settings.push_back(std::move(setting));
    reports.push_back(std::move(rep));
  }

  if (!cfg.out.empty()) {
    std::ofstream es(cfg.out + "/effect_report.json");
    es << nlohmann::json{{"effects", effect_log}}.dump(2) << '\n';
  }
  return reports;
}

}  // namespace dsshift::ep
