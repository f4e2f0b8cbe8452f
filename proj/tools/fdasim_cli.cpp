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

// fdasim command line: generate | run | grid | validate-estimators.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fdasim/config.hpp"
#include "fdasim/validation.hpp"

namespace {

namespace fs = std::filesystem;
using namespace fdasim;

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitCheckFailed = 4;

struct Options {
  std::string config;
  std::string out;
  std::size_t threads = 1;
  std::optional<std::uint64_t> seed;
};

// --out beats FDA_OUT_DIR, which beats the config's output_dir.
fs::path output_dir(const Options& opt, const ExperimentConfig& cfg) {
  if (!opt.out.empty()) return opt.out;
  if (const char* env = std::getenv("FDA_OUT_DIR"); env != nullptr && *env != '\0') return env;
  if (cfg.output_dir) return cfg.output_dir->is_absolute() ? *cfg.output_dir : cfg.base_dir / *cfg.output_dir;
  return "fdasim_out";
}

ExperimentConfig load(const Options& opt, std::initializer_list<ExperimentKind> accepted) {
  ExperimentConfig cfg = load_config(opt.config);
  bool ok = false;
  for (auto k : accepted) ok = ok || cfg.kind == k;
  if (!ok) throw ConfigError(opt.config + ": experiment '" + to_string(cfg.kind) + "' does not fit this command");
  if (opt.seed) {
    cfg.seed = *opt.seed;
    cfg.federation.seed = *opt.seed;
    cfg.grid.federation.seed = *opt.seed;
  }
  if (opt.threads == 0) throw ConfigError("--threads must be >= 1");
  cfg.federation.threads = opt.threads;
  cfg.grid.federation.threads = opt.threads;
  cfg.grid.threads = opt.threads;
  return cfg;
}

int cmd_generate(const Options& opt) {
  const auto cfg = load(opt, {ExperimentKind::generate});
  const fs::path dir = output_dir(opt, cfg);
  for (const auto& src : cfg.datasets) {
    const fs::path path = dir / (src.name + ".json");
    save_dataset(materialize(src, cfg.base_dir), path);
    std::cout << path.string() << '\n';
  }
  return 0;
}

int cmd_run(const Options& opt) {
  const auto cfg = load(opt, {ExperimentKind::single_run, ExperimentKind::semi_synthetic});
  std::vector<Dataset> sources;
  for (const auto& s : cfg.sources) sources.push_back(materialize(s, cfg.base_dir));
  const Dataset train = materialize(*cfg.target_train, cfg.base_dir);
  const Dataset test = materialize(*cfg.target_test, cfg.base_dir);
  validate(cfg.federation, sources, train);
  const auto result = run_experiment(cfg.federation, sources, train, test);

  const fs::path dir = output_dir(opt, cfg);
  write_text_file(dir / "rounds.csv", rounds_csv(cfg.federation, sources.size(), result.reports));
  const auto summary = run_summary(cfg.federation, sources.size(), result.reports);
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << "rule=" << cfg.federation.rule.label() << " rounds=" << result.reports.size()
            << " final_test_loss=" << format_number(result.reports.back().target_test_loss);
  if (const auto& acc = result.reports.back().target_test_accuracy) std::cout << " final_test_acc=" << *acc;
  std::cout << '\n';
  return 0;
}

int cmd_grid(const Options& opt) {
  const auto cfg = load(opt, {ExperimentKind::synthetic_grid});
  const auto result = predicted_vs_actual_grid(cfg.grid);
  const fs::path dir = output_dir(opt, cfg);
  write_text_file(dir / "grid.csv", grid_csv(result));

  std::size_t agree = 0;
  for (const auto& c : result.cells) agree += c.agree() ? 1 : 0;
  nlohmann::json summary;
  summary["cells"] = result.cells.size();
  summary["agreeing_cells"] = agree;
  summary["agreement_rate"] = result.agreement_rate();
  summary["rules"] = result.rule_names;
  std::optional<double> auto_win;
  for (std::size_t q = 0; q < cfg.grid.rules.size(); ++q)
    if (cfg.grid.rules[q].kind == RuleKind::fed_da) auto_win = result.auto_win_rate(q);
  if (auto_win) summary["auto_win_rate_high_shift"] = *auto_win;
  write_text_file(dir / "grid_summary.json", summary.dump(2) + "\n");

  std::cout << "agreement_rate=" << result.agreement_rate() << " (" << agree << "/" << result.cells.size() << ")";
  if (auto_win) std::cout << " auto_win_rate_high_shift=" << *auto_win;
  std::cout << '\n';
  return 0;
}

int cmd_validate_estimators(const Options& opt) {
  const auto cfg = load(opt, {ExperimentKind::estimator_validation});
  const auto& e = cfg.estimators;
  const auto checks = validate_estimators(e.dim, e.batches, e.trials, e.z_threshold, cfg.seed);
  std::string csv = "estimator,mean,truth,std_error,z,degenerate_flagged,result\n";
  bool all = true;
  for (const auto& c : checks) {
    all = all && c.pass;
    csv += c.name + "," + format_number(c.mean) + "," + format_number(c.truth) + "," + format_number(c.std_error) +
           "," + format_number(c.z) + "," + (c.degenerate_flagged ? "1" : "0") + "," + (c.pass ? "pass" : "fail") + "\n";
    char line[200];
    std::snprintf(line, sizeof line, "%-20s %s  z=%+.3f  mean=%.6g  truth=%.6g%s", c.name.c_str(),
                  c.pass ? "PASS" : "FAIL", c.z, c.mean, c.truth, c.degenerate_flagged ? "  (degenerate source flagged)" : "");
    std::cout << line << '\n';
  }
  write_text_file(output_dir(opt, cfg) / "estimators.csv", csv);
  return all ? 0 : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated domain adaptation simulator"};
  app.require_subcommand(1);
  Options opt;
  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "JSON experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory (overrides FDA_OUT_DIR and output_dir)");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { opt.seed = s; }, "overrides the config seed");
    return sub;
  };
  auto* gen = add("generate", "write the configured datasets as JSON files");
  auto* run = add("run", "run one federated experiment and write per-round reports");
  auto* grid = add("grid", "predicted-vs-actual winner grid on synthetic domains");
  auto* val = add("validate-estimators", "Monte-Carlo check of the auto-weighting estimators");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_generate(opt);
    if (run->parsed()) return cmd_run(opt);
    if (grid->parsed()) return cmd_grid(opt);
    if (val->parsed()) return cmd_validate_estimators(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitConfig;
}
