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
#include <vector>

#include "fdasim/aggregate.hpp"
#include "fdasim/datagen.hpp"
#include "fdasim/errors.hpp"
#include "fdasim/fedsim.hpp"
#include "fdasim/linalg.hpp"
#include "fdasim/model.hpp"
#include "fdasim/parallel.hpp"
#include "fdasim/random.hpp"

namespace fdasim {

// Gradient of the full-data loss at every atom of pi.
inline GradField gradient_field(const Model& model_template, const Dataset& data, const PiMeasure& pi) {
  GradField f;
  f.reserve(pi.size());
  for (const auto& theta : pi.points()) f.push_back(gradient(model_template.with_params(theta), data));
  return f;
}

// d_pi(S, T) = ||g_T - g_S||_pi, datasets standing in for their populations.
inline double exact_distance(const Dataset& d_source, const Dataset& d_target, const Model& model_template,
                             const PiMeasure& pi) {
  return std::sqrt(pi_norm_sq(field_sub(gradient_field(model_template, d_target, pi),
                                        gradient_field(model_template, d_source, pi))));
}

// sigma_pi^2(z) / n, with sigma_pi^2(z) the mean over rows z of
// ||g_T - grad loss(., z)||_pi^2.
inline double exact_sigma2(const Dataset& d_target, std::size_t n, const Model& model_template, const PiMeasure& pi) {
  if (n < 1) throw ConfigError("exact_sigma2: n must be >= 1");
  if (d_target.size() == 0) throw ShapeError("exact_sigma2: empty dataset");
  double per_sample = 0.0;
  for (const auto& theta : pi.points()) {
    const Model m = model_template.with_params(theta);
    const ParamVector mean = gradient(m, d_target);
    double acc = 0.0;
    for_each_sample_gradient(m, d_target, [&](std::size_t, const ParamVector& g) { acc += norm_sq(g - mean); });
    per_sample += acc / static_cast<double>(d_target.size());
  }
  per_sample /= static_cast<double>(pi.size());
  return per_sample / static_cast<double>(n);
}

struct DeltaErrorResult {
  std::string rule_name;
  double delta2 = 0.0;
  std::size_t n_resamples = 0;
  double std_error = 0.0;
};

enum class Resampling { with_replacement, without_replacement };

// Everything monte_carlo_delta2 needs about the populations, evaluated once.
struct DeltaProblem {
  Model model_template;
  PiMeasure pi;
  std::vector<GradField> source_fields;  // g_{D_S_i} on the atoms
  std::vector<std::size_t> source_sizes;
  GradField target_field;                // g_{D_T} on the atoms
  const Dataset* target = nullptr;

  static DeltaProblem make(std::span<const Dataset> sources, const Dataset& target, const Model& model_template,
                           PiMeasure pi) {
    DeltaProblem p{model_template, std::move(pi), {}, {}, {}, &target};
    for (const auto& s : sources) {
      p.source_fields.push_back(gradient_field(model_template, s, p.pi));
      p.source_sizes.push_back(s.size());
    }
    p.target_field = gradient_field(model_template, target, p.pi);
    return p;
  }
};

// Delta errors of several rules estimated on shared resamples. Each entry of
// `betas` pairs with the rule at the same index.
inline std::vector<DeltaErrorResult> monte_carlo_delta2(std::span<const AggregationRule> rules,
                                                        std::span<const std::vector<double>> betas,
                                                        const DeltaProblem& problem, std::size_t n,
                                                        std::size_t resamples, std::uint64_t seed,
                                                        Resampling mode = Resampling::with_replacement) {
  if (resamples < 2) throw ConfigError("monte_carlo_delta2: resamples must be >= 2");
  if (n < 1) throw ConfigError("monte_carlo_delta2: n must be >= 1");
  if (betas.size() != rules.size()) throw ConfigError("monte_carlo_delta2: one beta list per rule required");
  for (const auto& r : rules)
    if (r.auto_betas) throw ConfigError("monte_carlo_delta2: auto-weighted rules need explicit betas");
  const Dataset& target = *problem.target;
  if (mode == Resampling::without_replacement && n > target.size())
    throw ConfigError("monte_carlo_delta2: n exceeds the target size without replacement");
  const std::size_t atoms = problem.pi.size();

  std::vector<std::vector<double>> samples(rules.size(), std::vector<double>(resamples));
  const StreamKey key = StreamKey(seed).with("delta-resample");
  for (std::size_t r = 0; r < resamples; ++r) {
    const Dataset d_hat = mode == Resampling::with_replacement
                              ? resample(target, n, key.with(r))
                              : subsample(target, n, key.with(r).value());
    std::vector<double> err(rules.size(), 0.0);
    for (std::size_t k = 0; k < atoms; ++k) {
      const ParamVector g_hat = gradient(problem.model_template.with_params(problem.pi[k]), d_hat);
      std::vector<ParamVector> src;
      src.reserve(problem.source_fields.size());
      for (const auto& f : problem.source_fields) src.push_back(f[k]);
      for (std::size_t q = 0; q < rules.size(); ++q) {
        const ParamVector agg = aggregate(rules[q], src, problem.source_sizes, g_hat, betas[q]);
        err[q] += norm_sq(problem.target_field[k] - agg);
      }
    }
    for (std::size_t q = 0; q < rules.size(); ++q) samples[q][r] = err[q] / static_cast<double>(atoms);
  }

  std::vector<DeltaErrorResult> out;
  for (std::size_t q = 0; q < rules.size(); ++q) {
    const auto& s = samples[q];
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(resamples);
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    var /= static_cast<double>(resamples - 1);
    out.push_back({rules[q].label(), mean, resamples, std::sqrt(var / static_cast<double>(resamples))});
  }
  return out;
}

// Delta error E ||g_T - g_hat_Aggr||_pi^2 of one rule over i.i.d. size-n
// draws of the target dataset.
inline DeltaErrorResult monte_carlo_delta2(const AggregationRule& rule, std::span<const double> betas,
                                           std::span<const Dataset> sources, const Dataset& target, std::size_t n,
                                           const Model& model_template, const PiMeasure& pi, std::size_t resamples,
                                           std::uint64_t seed, Resampling mode = Resampling::with_replacement) {
  const auto problem = DeltaProblem::make(sources, target, model_template, pi);
  const std::vector<double> b(betas.begin(), betas.end());
  return monte_carlo_delta2(std::span(&rule, 1), std::span(&b, 1), problem, n, resamples, seed, mode).front();
}

// Synthetic study: source domains at increasing shift levels
// against a ladder of target subsamples of the reference domain.
struct GridConfig {
  SyntheticSpec base;                      // reference domain (its shift_level is ignored)
  std::vector<double> shift_levels;        // one source domain per level
  std::vector<std::size_t> target_sizes;   // target subsample ladder
  std::size_t test_size = 1000;            // held-out reference rows for evaluation
  std::vector<AggregationRule> rules;      // candidates, declaration order breaks ties
  std::optional<AggregationRule> auto_rule;  // trained alongside, not a candidate
  FederationConfig federation;             // training settings; rule is replaced per run
  std::size_t trials = 3;
  std::size_t resamples = 20;
  // Cells whose source index is >= this value count as high-shift.
  std::size_t high_shift_from = 6;
  std::size_t threads = 1;
};

struct GridCell {
  std::size_t source_idx = 0;
  std::size_t target_idx = 0;
  double d_pi = 0.0;
  double sigma_pi = 0.0;
  std::vector<double> delta2;      // per rule, mean over trials
  std::vector<double> final_loss;  // per rule, mean over trials
  std::optional<double> auto_loss;
  std::size_t predicted = 0;
  std::size_t actual = 0;
  [[nodiscard]] bool agree() const { return predicted == actual; }
};

struct GridResult {
  std::vector<std::string> rule_names;
  std::vector<GridCell> cells;  // row-major in (source_idx, target_idx)
  std::size_t high_shift_from = 0;

  [[nodiscard]] double agreement_rate() const {
    if (cells.empty()) return 0.0;
    std::size_t a = 0;
    for (const auto& c : cells) a += c.agree() ? 1 : 0;
    return static_cast<double>(a) / static_cast<double>(cells.size());
  }

  // Fraction of high-shift cells where the auto rule's loss is <= the loss of
  // rule `baseline`. Empty when no auto rule ran.
  [[nodiscard]] std::optional<double> auto_win_rate(std::size_t baseline) const {
    std::size_t n = 0, wins = 0;
    for (const auto& c : cells) {
      if (c.source_idx < high_shift_from || !c.auto_loss) continue;
      ++n;
      if (*c.auto_loss <= c.final_loss.at(baseline)) ++wins;
    }
    if (n == 0) return std::nullopt;
    return static_cast<double>(wins) / static_cast<double>(n);
  }
};

namespace detail {
inline std::size_t argmin_first(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] < v[best]) best = i;
  return best;
}
}  // namespace detail

inline GridResult predicted_vs_actual_grid(const GridConfig& cfg) {
  if (cfg.rules.size() < 2) throw ConfigError("grid: at least 2 rules required");
  if (cfg.shift_levels.empty() || cfg.target_sizes.empty()) throw ConfigError("grid: empty ladder");
  if (cfg.trials < 1) throw ConfigError("grid: trials must be >= 1");
  for (const auto& r : cfg.rules)
    if (r.auto_betas) throw ConfigError("grid: candidate rules must use fixed betas");

  // Domains are fixed across trials; trials vary init, subsamples and training.
  std::vector<Dataset> domains;
  for (double level : cfg.shift_levels) {
    SyntheticSpec s = cfg.base;
    s.shift_level = level;
    domains.push_back(gen_synthetic(s));
    domains.back().name = "D(shift=" + std::to_string(level) + ")";
  }
  SyntheticSpec ref_spec = cfg.base;
  ref_spec.shift_level = 0.0;
  const Dataset reference = gen_synthetic(ref_spec);
  if (cfg.test_size >= reference.size()) throw ConfigError("grid: test_size leaves no target pool");
  auto [test, pool] = split(reference, cfg.test_size, cfg.base.seed);
  for (std::size_t n : cfg.target_sizes)
    if (n < 1 || n > pool.size()) throw ConfigError("grid: target size outside [1, pool size]");

  const std::size_t S = domains.size(), T = cfg.target_sizes.size(), Q = cfg.rules.size();
  GridResult result;
  result.high_shift_from = cfg.high_shift_from;
  for (const auto& r : cfg.rules) result.rule_names.push_back(r.label());
  result.cells.resize(S * T);
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < T; ++j) {
      auto& c = result.cells[i * T + j];
      c.source_idx = i;
      c.target_idx = j;
      c.delta2.assign(Q, 0.0);
      c.final_loss.assign(Q, 0.0);
      if (cfg.auto_rule) c.auto_loss = 0.0;
    }

  std::vector<std::vector<double>> betas;
  for (const auto& r : cfg.rules) betas.push_back(fixed_betas(r, 1));

  const double inv_trials = 1.0 / static_cast<double>(cfg.trials);
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const std::uint64_t trial_seed = StreamKey(cfg.federation.seed).with("grid-trial").with(t).value();
    FederationConfig fed = cfg.federation;
    fed.seed = trial_seed;
    fed.threads = 1;
    const Model init = initial_model(fed, pool);
    const PiMeasure pi = PiMeasure::point_mass(init.params);

    std::vector<Dataset> targets;
    for (std::size_t j = 0; j < T; ++j)
      targets.push_back(subsample(pool, cfg.target_sizes[j], StreamKey(trial_seed).with("ladder").with(j).value()));

    // Population gradients at the initialization, once per domain.
    std::vector<DeltaProblem> problems;
    for (std::size_t i = 0; i < S; ++i)
      problems.push_back(DeltaProblem::make(std::span(&domains[i], 1), pool, init, pi));
    const double pool_sigma2_z = exact_sigma2(pool, 1, init, pi);

    // Source-only ignores the target subsample and target-only ignores the
    // source domain, so those runs are shared along a row or a column.
    auto final_loss = [&](const AggregationRule& rule, std::size_t i, std::size_t j) {
      FederationConfig f = fed;
      f.rule = rule;
      const std::span<const Dataset> src(&domains[i], 1);
      return run_experiment(f, src, targets[j], test, init).reports.back().target_test_loss;
    };
    std::vector<std::vector<double>> shared(Q);
    for (std::size_t q = 0; q < Q; ++q) {
      if (cfg.rules[q].kind == RuleKind::source_only) {
        shared[q] = parallel_map(S, cfg.threads, [&](std::size_t i) { return final_loss(cfg.rules[q], i, 0); });
      } else if (cfg.rules[q].kind == RuleKind::target_only) {
        shared[q] = parallel_map(T, cfg.threads, [&](std::size_t j) { return final_loss(cfg.rules[q], 0, j); });
      }
    }

    const auto cell_results = parallel_map(S * T, cfg.threads, [&](std::size_t idx) {
      const std::size_t i = idx / T, j = idx % T;
      GridCell c;
      c.d_pi = std::sqrt(pi_norm_sq(field_sub(problems[i].target_field, problems[i].source_fields[0])));
      c.sigma_pi = std::sqrt(pool_sigma2_z / static_cast<double>(cfg.target_sizes[j]));
      const auto deltas = monte_carlo_delta2(cfg.rules, betas, problems[i], cfg.target_sizes[j], cfg.resamples,
                                             StreamKey(trial_seed).with("cell").with(idx).value());
      for (const auto& d : deltas) c.delta2.push_back(d.delta2);
      for (std::size_t q = 0; q < Q; ++q) {
        const auto kind = cfg.rules[q].kind;
        if (kind == RuleKind::source_only) {
          c.final_loss.push_back(shared[q][i]);
        } else if (kind == RuleKind::target_only) {
          c.final_loss.push_back(shared[q][j]);
        } else {
          c.final_loss.push_back(final_loss(cfg.rules[q], i, j));
        }
      }
      if (cfg.auto_rule) c.auto_loss = final_loss(*cfg.auto_rule, i, j);
      return c;
    });

    for (std::size_t idx = 0; idx < S * T; ++idx) {
      auto& acc = result.cells[idx];
      const auto& c = cell_results[idx];
      acc.d_pi += inv_trials * c.d_pi;
      acc.sigma_pi += inv_trials * c.sigma_pi;
      for (std::size_t q = 0; q < Q; ++q) {
        acc.delta2[q] += inv_trials * c.delta2[q];
        acc.final_loss[q] += inv_trials * c.final_loss[q];
      }
      if (c.auto_loss) *acc.auto_loss += inv_trials * *c.auto_loss;
    }
  }
  for (auto& c : result.cells) {
    c.predicted = detail::argmin_first(c.delta2);
    c.actual = detail::argmin_first(c.final_loss);
  }
  return result;
}

}  // namespace fdasim
