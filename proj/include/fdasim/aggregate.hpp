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

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "fdasim/errors.hpp"
#include "fdasim/linalg.hpp"

namespace fdasim {

enum class RuleKind { source_only, target_only, fed_da, fed_gp };
enum class Projection { whole_vector, per_layer };
enum class SourceWeighting { uniform, sample_size };

inline const char* to_string(RuleKind k) {
  switch (k) {
    case RuleKind::source_only: return "source_only";
    case RuleKind::target_only: return "target_only";
    case RuleKind::fed_da: return "fed_da";
    case RuleKind::fed_gp: return "fed_gp";
  }
  return "?";
}

inline RuleKind rule_kind_from_string(const std::string& s) {
  if (s == "source_only") return RuleKind::source_only;
  if (s == "target_only") return RuleKind::target_only;
  if (s == "fed_da") return RuleKind::fed_da;
  if (s == "fed_gp") return RuleKind::fed_gp;
  throw ConfigError("unknown rule kind '" + s + "'");
}

// One server aggregation rule. In fixed mode `betas` holds one weight per
// source; with auto_betas the weights are supplied per round.
struct AggregationRule {
  RuleKind kind = RuleKind::fed_gp;
  std::vector<double> betas;
  bool auto_betas = false;
  Projection projection = Projection::per_layer;
  SourceWeighting weighting = SourceWeighting::sample_size;

  [[nodiscard]] bool uses_betas() const { return kind == RuleKind::fed_da || kind == RuleKind::fed_gp; }
  [[nodiscard]] bool uses_sources() const { return kind != RuleKind::target_only; }
  [[nodiscard]] bool uses_target() const { return kind != RuleKind::source_only; }

  // Display label such as "fed_gp(0.5)" or "fed_da_auto".
  [[nodiscard]] std::string label() const {
    std::string s = to_string(kind);
    if (!uses_betas()) return s;
    if (auto_betas) return s + "_auto";
    if (!betas.empty()) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "(%g)", betas.front());
      s += buf;
    }
    return s;
  }

  static AggregationRule fixed(RuleKind kind, std::vector<double> betas, Projection p = Projection::per_layer,
                               SourceWeighting w = SourceWeighting::sample_size) {
    return {kind, std::move(betas), false, p, w};
  }
};

// Squared source norm below which the projection is defined as zero.
inline constexpr double kDegenerateNormSq = 1e-24;

// max(<g_t, g_s>, 0) * g_s / ||g_s||^2
inline ParamVector proj_plus(const ParamVector& g_t, const ParamVector& g_s) {
  g_t.require_conformable(g_s);
  const double ss = norm_sq(g_s);
  if (ss < kDegenerateNormSq) return ParamVector::zeros_like(g_s);
  const double ts = inner(g_t, g_s);
  if (ts <= 0.0) return ParamVector::zeros_like(g_s);
  return (ts / ss) * g_s;
}

// proj_plus applied independently to every layer.
inline ParamVector proj_plus_layerwise(const ParamVector& g_t, const ParamVector& g_s) {
  g_t.require_conformable(g_s);
  ParamVector out = ParamVector::zeros_like(g_s);
  for (std::size_t l = 0; l < g_s.layer_count(); ++l) {
    const double ss = layer_inner(g_s, g_s, l);
    if (ss < kDegenerateNormSq) continue;
    const double ts = layer_inner(g_t, g_s, l);
    if (ts <= 0.0) continue;
    const double c = ts / ss;
    auto src = g_s.layer(l);
    auto dst = out.layer(l);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = c * src[k];
  }
  return out;
}

inline ParamVector project(const ParamVector& g_t, const ParamVector& g_s, Projection p) {
  return p == Projection::whole_vector ? proj_plus(g_t, g_s) : proj_plus_layerwise(g_t, g_s);
}

// w_i = 1/N or n_i / sum_j n_j.
inline std::vector<double> source_weights(SourceWeighting w, std::span<const std::size_t> sizes) {
  if (sizes.empty()) throw ConfigError("source_weights: no sources");
  std::vector<double> out(sizes.size());
  if (w == SourceWeighting::uniform) {
    for (double& v : out) v = 1.0 / static_cast<double>(sizes.size());
    return out;
  }
  double total = 0.0;
  for (std::size_t n : sizes) total += static_cast<double>(n);
  if (total <= 0.0) throw ConfigError("source_weights: all source sizes are zero");
  for (std::size_t i = 0; i < sizes.size(); ++i) out[i] = static_cast<double>(sizes[i]) / total;
  return out;
}

// Combines source and target updates according to `rule`. `betas` holds one
// weight per source (ignored by source_only and target_only).
inline ParamVector aggregate(const AggregationRule& rule, std::span<const ParamVector> source_grads,
                             std::span<const std::size_t> source_sizes, const ParamVector& g_t,
                             std::span<const double> betas) {
  if (rule.kind == RuleKind::target_only) return g_t;
  if (source_grads.empty()) throw ConfigError(std::string("aggregate: rule ") + to_string(rule.kind) + " needs sources");
  if (source_sizes.size() != source_grads.size())
    throw ConfigError("aggregate: source_sizes length differs from source count");
  const auto w = source_weights(rule.weighting, source_sizes);

  ParamVector out = ParamVector::zeros_like(source_grads.front());
  if (rule.kind == RuleKind::source_only) {
    for (std::size_t i = 0; i < source_grads.size(); ++i) out.axpy(w[i], source_grads[i]);
    return out;
  }
  if (betas.size() != source_grads.size()) throw ConfigError("aggregate: betas length differs from source count");
  for (double b : betas)
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("aggregate: beta outside [0, 1]");
  g_t.require_conformable(out);
  for (std::size_t i = 0; i < source_grads.size(); ++i) {
    out.axpy(w[i] * (1.0 - betas[i]), g_t);
    if (rule.kind == RuleKind::fed_da) {
      out.axpy(w[i] * betas[i], source_grads[i]);
    } else {
      out.axpy(w[i] * betas[i], project(g_t, source_grads[i], rule.projection));
    }
  }
  return out;
}

// Parameters of the source-to-target update magnitude alignment.
struct AlignmentParams {
  std::size_t n_source = 1;
  std::size_t n_target = 1;
  std::size_t batch_source = 1;
  std::size_t batch_target = 1;
  double lr_source = 1.0;
  double lr_target = 1.0;
  std::size_t local_rounds = 1;
};

// ((n_target / batch_target) / (n_source / batch_source)) * (lr_t / lr_s) / r_s
inline double alignment_factor(const AlignmentParams& p) {
  if (p.n_source == 0 || p.n_target == 0 || p.batch_source == 0 || p.batch_target == 0 || p.local_rounds == 0)
    throw ConfigError("align_source_update: counts must be positive");
  if (!(p.lr_source > 0.0) || !(p.lr_target > 0.0))
    throw ConfigError("align_source_update: learning rates must be positive");
  const double target_steps = static_cast<double>(p.n_target) / static_cast<double>(p.batch_target);
  const double source_steps = static_cast<double>(p.n_source) / static_cast<double>(p.batch_source);
  return (target_steps / source_steps) * (p.lr_target / p.lr_source) / static_cast<double>(p.local_rounds);
}

inline ParamVector align_source_update(const ParamVector& raw_update, const AlignmentParams& p) {
  return alignment_factor(p) * raw_update;
}

}  // namespace fdasim
