// Copyright 2026 The fdasim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fdasim/config.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

namespace fdasim {
namespace {

namespace fs = std::filesystem;

nlohmann::json run_doc() {
  return nlohmann::json::parse(R"({
    "experiment": "single_run",
    "seed": 9,
    "federation": {"rounds": 2, "hidden_dim": 4, "batch_s": 8, "batch_t": 4,
                   "rule": {"kind": "fed_da", "betas": [0.25]}},
    "data": {
      "sources": [{"name": "s", "synthetic": {"input_dim": 3, "output_dim": 2, "n_samples": 40, "n_basis": 4,
                                             "shift_level": 0.5, "seed": 1}}],
      "target_train": {"name": "t", "synthetic": {"input_dim": 3, "output_dim": 2, "n_samples": 60, "n_basis": 4,
                                                  "seed": 1},
                       "split": {"n_first": 20, "seed": 2, "part": "second"}, "subsample": {"n": 12, "seed": 3}},
      "target_test": {"name": "e", "synthetic": {"input_dim": 3, "output_dim": 2, "n_samples": 60, "n_basis": 4,
                                                 "seed": 1},
                      "split": {"n_first": 20, "seed": 2, "part": "first"}}
    }
  })");
}

std::string config_error(const nlohmann::json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, ParsesRunConfig) {
  const auto c = parse_config(run_doc());
  EXPECT_EQ(c.kind, ExperimentKind::single_run);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.federation.seed, 9u);
  EXPECT_EQ(c.federation.rounds, 2u);
  EXPECT_EQ(c.federation.rule.kind, RuleKind::fed_da);
  EXPECT_EQ(c.federation.rule.betas, std::vector<double>{0.25});
  EXPECT_EQ(c.federation.lr_s, FederationConfig{}.lr_s);
  ASSERT_EQ(c.sources.size(), 1u);
  EXPECT_EQ(c.sources[0].synthetic->shift_level, 0.5);
  const Dataset train = materialize(*c.target_train, {});
  const Dataset test = materialize(*c.target_test, {});
  EXPECT_EQ(train.size(), 12u);
  EXPECT_EQ(test.size(), 20u);
  EXPECT_EQ(train.name, "t");
}

TEST(ConfigTest, DiagnosticsNameTheField) {
  auto j = run_doc();
  j["federation"]["rule"]["kind"] = "fedprox";
  EXPECT_NE(config_error(j).find("fedprox"), std::string::npos);

  j = run_doc();
  j["federation"]["lr_s"] = "fast";
  EXPECT_NE(config_error(j).find("federation.lr_s"), std::string::npos);

  j = run_doc();
  j["federation"]["rounds"] = 0;
  EXPECT_NE(config_error(j).find("federation.rounds"), std::string::npos);

  j = run_doc();
  j["federation"]["roundz"] = 3;
  EXPECT_NE(config_error(j).find("federation.roundz"), std::string::npos);

  j = run_doc();
  j["data"]["sources"][0]["synthetic"]["input_dim"] = 0;
  EXPECT_NE(config_error(j).find("input_dim"), std::string::npos);

  j = run_doc();
  j["data"].erase("target_test");
  EXPECT_NE(config_error(j).find("data.target_test"), std::string::npos);

  j = run_doc();
  j["federation"]["rule"]["betas"] = {1.2};
  EXPECT_NE(config_error(j).find("federation.rule.betas"), std::string::npos);

  j = run_doc();
  j["federation"]["batch_t"] = -4;
  EXPECT_NE(config_error(j).find("federation.batch_t"), std::string::npos);

  j = run_doc();
  j["experiment"] = "benchmark";
  EXPECT_NE(config_error(j).find("experiment"), std::string::npos);

  j = run_doc();
  j["federation"]["rule"]["auto"] = 1;
  EXPECT_NE(config_error(j).find("federation.rule.auto"), std::string::npos);
}

TEST(ConfigTest, EstimatorValidationRejectsSingleBatch) {
  auto j = nlohmann::json::parse(R"({"experiment": "estimator_validation", "estimators": {"batches": 1}})");
  EXPECT_NE(config_error(j).find("estimators.batches"), std::string::npos);
  j["estimators"]["batches"] = 3;
  EXPECT_EQ(parse_config(j).estimators.batches, 3u);
}

TEST(ConfigTest, GridConfig) {
  auto j = nlohmann::json::parse(R"({
    "experiment": "synthetic_grid", "seed": 4,
    "federation": {"rounds": 2},
    "grid": {"base": {"input_dim": 5, "n_samples": 300}, "shift_levels": [0, 0.5], "target_sizes": [100, 10],
             "rules": [{"kind": "source_only"}, {"kind": "target_only"}],
             "auto_rule": {"kind": "fed_da", "auto": true}, "trials": 2}
  })");
  const auto c = parse_config(j);
  EXPECT_EQ(c.grid.rules.size(), 2u);
  EXPECT_TRUE(c.grid.auto_rule.has_value());
  EXPECT_EQ(c.grid.federation.rounds, 2u);
  EXPECT_EQ(c.grid.federation.seed, 4u);
  j["grid"]["rules"] = {{{"kind", "source_only"}}};
  EXPECT_NE(config_error(j).find("grid.rules"), std::string::npos);
}

TEST(ConfigTest, FileSourcesResolveAgainstConfigDirectory) {
  const fs::path dir = fs::temp_directory_path() / "fdasim_config_test";
  fs::remove_all(dir);
  SyntheticSpec s;
  s.input_dim = 3;
  s.output_dim = 2;
  s.n_samples = 10;
  s.n_basis = 3;
  const Dataset d = gen_synthetic(s);
  save_dataset(d, dir / "data" / "d.json");
  auto j = run_doc();
  j["data"]["sources"][0] = "data/d.json";
  write_text_file(dir / "cfg.json", j.dump());
  const auto c = load_config(dir / "cfg.json");
  Dataset loaded = materialize(c.sources[0], c.base_dir);
  EXPECT_EQ(loaded.inputs, d.inputs);
  EXPECT_EQ(loaded.name, "d");

  write_text_file(dir / "broken.json", "{\"experiment\": \"single_run\",\n \"seed\": 1,,\n}");
  try {
    load_config(dir / "broken.json");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.json:2"), std::string::npos) << e.what();
  }
}

TEST(ConfigTest, RoundsCsvColumns) {
  FederationConfig cfg;
  cfg.rule = AggregationRule::fixed(RuleKind::fed_gp, {0.5});
  RoundReport r;
  r.round = 1;
  r.betas_used = {0.5, 0.5};
  r.target_test_loss = 0.25;
  std::string csv = rounds_csv(cfg, 2, {r});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "round,rule,beta_1,beta_2,test_loss,test_acc");
  EXPECT_NE(csv.find("1,fed_gp(0.5),0.5,0.5,0.25,\n"), std::string::npos);

  cfg.rule.auto_betas = true;
  r.delta_stats = compute_betas(1.0, std::vector<double>{2.0, 3.0}, std::vector<double>{0.5, 0.0});
  r.target_test_accuracy = 0.75;
  csv = rounds_csv(cfg, 2, {r});
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "round,rule,beta_1,beta_2,sigma2_hat,d2_hat_1,d2_hat_2,tau2d2_hat_1,tau2d2_hat_2,test_loss,test_acc");
  EXPECT_NE(csv.find(",1,2,3,0.5,0,0.25,0.75\n"), std::string::npos) << csv;
}

TEST(ConfigTest, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300}) EXPECT_EQ(std::strtod(format_number(v).c_str(), nullptr), v);
}

}  // namespace
}  // namespace fdasim
