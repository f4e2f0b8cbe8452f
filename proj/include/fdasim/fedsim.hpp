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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdasim/aggregate.hpp"
#include "fdasim/autoweight.hpp"
#include "fdasim/errors.hpp"
#include "fdasim/model.hpp"
#include "fdasim/parallel.hpp"
#include "fdasim/random.hpp"

namespace fdasim {

// Where the auto-weighting estimators evaluate the target batch gradients.
enum class EstimatorMeasure {
  // The B per-batch updates of the target's local pass, each taken at its own
  // pre-batch parameters.
  path,
  // B disjoint target batches evaluated at the round-start global parameters.
  round_start,
};

struct FederationConfig {
  std::size_t rounds = 50;
  // Local epochs of every source client per round. The target client makes
  // one pass over its data per round.
  std::size_t local_epochs = 1;
  double lr_s = 0.05;
  double lr_t = 0.01;
  std::size_t batch_s = 64;
  std::size_t batch_t = 16;
  AggregationRule rule;
  // Source-only warm-up rounds before the first reported round.
  std::size_t init_epochs = 0;
  std::size_t hidden_dim = 32;
  EstimatorMeasure estimator = EstimatorMeasure::path;
  // Batch count for EstimatorMeasure::round_start.
  std::size_t estimator_batches = 8;
  // Multiply source updates by the alignment factor before aggregation.
  bool align_updates = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  [[nodiscard]] bool auto_weight() const { return rule.auto_betas; }
};

struct RoundReport {
  std::size_t round = 0;
  std::vector<double> betas_used;
  std::optional<DeltaStats> delta_stats;
  double target_test_loss = 0.0;
  std::optional<double> target_test_accuracy;
  double update_norm = 0.0;
  double global_param_norm = 0.0;
};

inline std::size_t batch_count(std::size_t n, std::size_t batch) { return batch == 0 ? 0 : (n + batch - 1) / batch; }

inline void validate(const FederationConfig& cfg, std::span<const Dataset> sources, const Dataset& target_train) {
  if (cfg.rounds < 1) throw ConfigError("federation.rounds must be >= 1");
  if (!(cfg.lr_s > 0.0)) throw ConfigError("federation.lr_s must be positive");
  if (!(cfg.lr_t > 0.0)) throw ConfigError("federation.lr_t must be positive");
  if (cfg.batch_s == 0) throw ConfigError("federation.batch_s must be positive");
  if (cfg.batch_t == 0) throw ConfigError("federation.batch_t must be positive");
  const auto& rule = cfg.rule;
  if (rule.uses_sources() && sources.empty())
    throw ConfigError(std::string("rule ") + to_string(rule.kind) + " needs at least one source");
  if (rule.uses_target() && target_train.size() == 0) throw ConfigError("target dataset is empty");
  if (rule.uses_betas() && !rule.auto_betas) {
    if (rule.betas.size() != sources.size() && rule.betas.size() != 1)
      throw ConfigError("rule.betas must hold one value or one per source");
    for (double b : rule.betas)
      if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("rule.betas must lie in [0, 1]");
  }
  if (rule.auto_betas) {
    if (!rule.uses_betas()) throw ConfigError("auto weighting applies to fed_da and fed_gp only");
    const std::size_t b = cfg.estimator == EstimatorMeasure::path ? batch_count(target_train.size(), cfg.batch_t)
                                                                   : cfg.estimator_batches;
    if (b < 2) throw ConfigError("auto weighting needs at least 2 target batches");
    if (cfg.estimator == EstimatorMeasure::round_start && b > target_train.size())
      throw ConfigError("federation.estimator_batches exceeds the target sample count");
  }
  for (const auto& s : sources)
    if (s.size() == 0) throw ConfigError("source dataset '" + s.name + "' is empty");
}

inline std::vector<double> fixed_betas(const AggregationRule& rule, std::size_t n_sources) {
  if (rule.betas.empty()) return std::vector<double>(n_sources, 0.5);
  if (rule.betas.size() == 1) return std::vector<double>(n_sources, rule.betas.front());
  return rule.betas;
}

namespace detail {

// Stream keys: (seed, role, client, round), so scheduling never changes draws.
inline StreamKey client_key(std::uint64_t seed, const char* role, std::size_t client, std::size_t round) {
  return StreamKey(seed).with(role).with(client).with(round);
}

inline std::vector<ParamVector> source_updates(const Model& global, std::span<const Dataset> sources,
                                               const FederationConfig& cfg, const char* role, std::size_t round) {
  return parallel_map(sources.size(), cfg.threads, [&](std::size_t i) {
    if (cfg.local_epochs == 0) return ParamVector::zeros_like(global.params);
    auto run = local_sgd(global, sources[i], cfg.lr_s, cfg.batch_s, cfg.local_epochs,
                         client_key(cfg.seed, role, i, round));
    return run.model.params - global.params;
  });
}

}  // namespace detail

// One round of the federated loop: local training on every client starting
// from the global model, optional auto-weighting, then the global update
// global <- global + Aggr({g_S_i}, g_T, betas).
inline std::pair<Model, RoundReport> run_round(const Model& global, std::span<const Dataset> sources,
                                               const Dataset& target_train, const FederationConfig& cfg,
                                               std::size_t round_index) {
  const auto& rule = cfg.rule;
  if (rule.uses_target() && target_train.size() == 0) throw ConfigError("target dataset is empty");
  RoundReport report;
  report.round = round_index;

  std::vector<ParamVector> g_s;
  std::vector<std::size_t> sizes;
  for (const auto& s : sources) sizes.push_back(s.size());
  if (rule.uses_sources()) g_s = detail::source_updates(global, sources, cfg, "source", round_index);

  ParamVector g_t = ParamVector::zeros_like(global.params);
  std::vector<ParamVector> target_steps;
  const bool have_target = target_train.size() > 0;
  if (have_target && (rule.uses_target() || rule.auto_betas)) {
    auto run = local_sgd(global, target_train, cfg.lr_t, cfg.batch_t, 1,
                         detail::client_key(cfg.seed, "target", 0, round_index), true);
    g_t = run.model.params - global.params;
    target_steps = std::move(run.step_updates);
  }

  // Source-only has no target update to align with. A batch larger than the
  // dataset counts as one full batch.
  if (have_target && cfg.align_updates && cfg.local_epochs > 0 && rule.kind != RuleKind::source_only) {
    for (std::size_t i = 0; i < g_s.size(); ++i) {
      const AlignmentParams p{sizes[i],
                              target_train.size(),
                              std::min(cfg.batch_s, sizes[i]),
                              std::min(cfg.batch_t, target_train.size()),
                              cfg.lr_s,
                              cfg.lr_t,
                              cfg.local_epochs};
      g_s[i] = align_source_update(g_s[i], p);
    }
  }

  std::vector<double> betas;
  if (rule.uses_betas()) {
    if (rule.auto_betas) {
      const double steps = static_cast<double>(batch_count(target_train.size(), cfg.batch_t));
      std::vector<GradField> fields;
      for (const auto& g : g_s) fields.push_back(GradField{(1.0 / steps) * g});
      DeltaStats stats;
      if (cfg.estimator == EstimatorMeasure::path) {
        stats = estimate_delta_stats(BatchGradients::from_updates(target_steps), fields);
      } else {
        const std::size_t per_batch = batch_count(target_train.size(), cfg.estimator_batches);
        std::vector<GradField> grads;
        for (const auto& rows : shuffled_batches(target_train.size(), per_batch,
                                                 detail::client_key(cfg.seed, "estimator", 0, round_index))) {
          grads.push_back(GradField{-cfg.lr_t * gradient_rows(global, target_train, rows)});
        }
        stats = estimate_delta_stats(BatchGradients(std::move(grads)), fields);
      }
      betas = rule.kind == RuleKind::fed_da ? stats.beta_da : stats.beta_gp;
      report.delta_stats = std::move(stats);
    } else {
      betas = fixed_betas(rule, sources.size());
    }
  }
  report.betas_used = betas;

  ParamVector update = aggregate(rule, g_s, sizes, g_t, betas);
  if (!update.all_finite()) throw NumericError("round " + std::to_string(round_index) + ": non-finite update");
  Model next = global;
  next.params += update;
  report.update_norm = norm(update);
  report.global_param_norm = norm(next.params);
  return {std::move(next), std::move(report)};
}

struct ExperimentResult {
  std::vector<RoundReport> reports;
  Model final_model;
};

inline Arch arch_for(const Dataset& d) {
  return d.kind == TaskKind::regression ? Arch::mlp_regression : Arch::mlp_classifier;
}

inline Model initial_model(const FederationConfig& cfg, const Dataset& like) {
  return Model::init(arch_for(like), like.input_dim, cfg.hidden_dim, like.output_dim, StreamKey(cfg.seed));
}

// Source-only warm-up (init_epochs rounds of plain sample-size-weighted
// averaging of raw source updates) followed by cfg.rounds rounds of
// run_round, evaluating on target_test after every round.
inline ExperimentResult run_experiment(const FederationConfig& cfg, std::span<const Dataset> sources,
                                       const Dataset& target_train, const Dataset& target_test, Model start) {
  validate(cfg, sources, target_train);
  start.check_data(target_test);
  Model global = std::move(start);
  if (!sources.empty()) {
    const AggregationRule warm{RuleKind::source_only, {}, false, Projection::whole_vector,
                               SourceWeighting::sample_size};
    std::vector<std::size_t> sizes;
    for (const auto& s : sources) sizes.push_back(s.size());
    for (std::size_t e = 0; e < cfg.init_epochs; ++e) {
      auto g_s = detail::source_updates(global, sources, cfg, "warmup", e);
      global.params += aggregate(warm, g_s, sizes, ParamVector::zeros_like(global.params), {});
    }
  }
  ExperimentResult result;
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    auto [next, report] = run_round(global, sources, target_train, cfg, r);
    global = std::move(next);
    const Metrics m = evaluate(global, target_test);
    if (!std::isfinite(m.loss)) throw NumericError("round " + std::to_string(r) + ": non-finite test loss");
    report.target_test_loss = m.loss;
    report.target_test_accuracy = m.accuracy;
    result.reports.push_back(std::move(report));
  }
  result.final_model = std::move(global);
  return result;
}

inline ExperimentResult run_experiment(const FederationConfig& cfg, std::span<const Dataset> sources,
                                       const Dataset& target_train, const Dataset& target_test) {
  const Dataset& like = target_train.size() > 0 ? target_train : target_test;
  return run_experiment(cfg, sources, target_train, target_test, initial_model(cfg, like));
}

}  // namespace fdasim
