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

// JSON experiment configs and the CSV/JSON reports written by the command
// line tool.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "fdasim/aggregate.hpp"
#include "fdasim/datagen.hpp"
#include "fdasim/errors.hpp"
#include "fdasim/fedsim.hpp"
#include "fdasim/io.hpp"
#include "fdasim/metrics.hpp"
#include "json.hpp"

namespace fdasim {

enum class ExperimentKind { single_run, semi_synthetic, synthetic_grid, estimator_validation, generate };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::single_run: return "single_run";
    case ExperimentKind::semi_synthetic: return "semi_synthetic";
    case ExperimentKind::synthetic_grid: return "synthetic_grid";
    case ExperimentKind::estimator_validation: return "estimator_validation";
    case ExperimentKind::generate: return "generate";
  }
  return "?";
}

// How to obtain one dataset: a file, or a generator plus optional
// transforms applied in order (noise, label shift, split, subsample).
struct DatasetSource {
  std::string name;
  std::optional<std::filesystem::path> file;
  std::optional<SyntheticSpec> synthetic;
  std::optional<BlobSpec> blobs;
  std::uint64_t blob_stream = 0;
  std::optional<std::pair<double, std::uint64_t>> feature_noise;  // std, seed
  struct LabelShift {
    double eta = 0.5;
    std::uint64_t seed = 0;
    bool take_source = true;
  };
  std::optional<LabelShift> label_shift;
  struct Split {
    std::size_t n_first = 0;
    std::uint64_t seed = 0;
    bool take_first = true;
  };
  std::optional<Split> split;
  std::optional<std::pair<std::size_t, std::uint64_t>> subsample;  // n, seed
};

struct EstimatorValidationConfig {
  std::size_t dim = 4;
  std::size_t batches = 8;
  std::size_t trials = 100000;
  double z_threshold = 4.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::single_run;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> output_dir;
  std::filesystem::path base_dir;  // relative file paths resolve against this
  FederationConfig federation;
  // run
  std::vector<DatasetSource> sources;
  std::optional<DatasetSource> target_train;
  std::optional<DatasetSource> target_test;
  // generate
  std::vector<DatasetSource> datasets;
  // grid
  GridConfig grid;
  // validate-estimators
  EstimatorValidationConfig estimators;
};

namespace detail {

// Field access that reports the full dotted path on failure.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    for (const auto& [k, v] : j_.items()) unused_.insert(k);
  }

  [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }

  [[nodiscard]] const nlohmann::json& at(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing field '" + child(key) + "'");
    unused_.erase(key);
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    const auto& v = at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("field '" + child(key) + "' must be true or false");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_integer() || v.get<long long>() < 0)
          throw ConfigError("field '" + child(key) + "' must be a non-negative integer");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("field '" + child(key) + "' must be a number");
      }
      return v.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("field '" + child(key) + "' has the wrong type");
    }
  }

  template <class T>
  void maybe(const std::string& key, T& out) {
    if (has(key)) out = get<T>(key);
  }

  Fields object(const std::string& key) { return Fields(at(key), child(key)); }

  // Rejects keys nobody asked for; typos would otherwise be silently ignored.
  void finish() const {
    if (!unused_.empty()) throw ConfigError("unknown field '" + child(*unused_.begin()) + "'");
  }

  [[nodiscard]] std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  [[nodiscard]] std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> unused_;
};

inline SyntheticSpec parse_synthetic(Fields f) {
  SyntheticSpec s;
  f.maybe("input_dim", s.input_dim);
  f.maybe("output_dim", s.output_dim);
  f.maybe("n_samples", s.n_samples);
  f.maybe("n_basis", s.n_basis);
  f.maybe("n_mixture", s.n_mixture);
  f.maybe("shift_level", s.shift_level);
  f.maybe("width_scale", s.width_scale);
  f.maybe("seed", s.seed);
  f.finish();
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(f.where() + ": " + e.what());
  }
  return s;
}

inline BlobSpec parse_blobs(Fields f) {
  BlobSpec b;
  f.maybe("input_dim", b.input_dim);
  f.maybe("n_classes", b.n_classes);
  f.maybe("n_samples", b.n_samples);
  f.maybe("mean_range", b.mean_range);
  f.maybe("seed", b.seed);
  f.finish();
  try {
    b.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(f.where() + ": " + e.what());
  }
  return b;
}

inline DatasetSource parse_dataset_source(const nlohmann::json& j, const std::string& path) {
  DatasetSource d;
  if (j.is_string()) {
    d.file = j.get<std::string>();
    d.name = d.file->stem().string();
    return d;
  }
  Fields f(j, path);
  f.maybe("name", d.name);
  const int generators = int{f.has("file")} + int{f.has("synthetic")} + int{f.has("blobs")};
  if (generators != 1) throw ConfigError(f.where() + " needs exactly one of 'file', 'synthetic', 'blobs'");
  if (f.has("file")) d.file = f.get<std::string>("file");
  if (f.has("synthetic")) d.synthetic = parse_synthetic(f.object("synthetic"));
  if (f.has("blobs")) d.blobs = parse_blobs(f.object("blobs"));
  f.maybe("stream", d.blob_stream);
  if (f.has("feature_noise")) {
    auto n = f.object("feature_noise");
    d.feature_noise = std::pair{n.get<double>("std"), std::uint64_t{0}};
    n.maybe("seed", d.feature_noise->second);
    n.finish();
    if (!(d.feature_noise->first >= 0.0)) throw ConfigError("field '" + n.child("std") + "' must be >= 0");
  }
  if (f.has("label_shift")) {
    auto l = f.object("label_shift");
    DatasetSource::LabelShift ls;
    ls.eta = l.get<double>("eta");
    l.maybe("seed", ls.seed);
    const auto part = l.get<std::string>("part");
    if (part != "source" && part != "target")
      throw ConfigError("field '" + l.child("part") + "' must be 'source' or 'target'");
    ls.take_source = part == "source";
    l.finish();
    if (!(ls.eta >= 0.0 && ls.eta <= 0.5)) throw ConfigError("field '" + l.child("eta") + "' must lie in [0, 0.5]");
    d.label_shift = ls;
  }
  if (f.has("split")) {
    auto s = f.object("split");
    DatasetSource::Split sp;
    sp.n_first = s.get<std::size_t>("n_first");
    s.maybe("seed", sp.seed);
    const auto part = s.get<std::string>("part");
    if (part != "first" && part != "second")
      throw ConfigError("field '" + s.child("part") + "' must be 'first' or 'second'");
    sp.take_first = part == "first";
    s.finish();
    d.split = sp;
  }
  if (f.has("subsample")) {
    auto s = f.object("subsample");
    d.subsample = std::pair{s.get<std::size_t>("n"), std::uint64_t{0}};
    s.maybe("seed", d.subsample->second);
    s.finish();
  }
  f.finish();
  if (d.name.empty()) d.name = d.file ? d.file->stem().string() : (d.synthetic ? "synthetic" : "blobs");
  return d;
}

inline AggregationRule parse_rule(Fields f) {
  AggregationRule r;
  r.kind = rule_kind_from_string(f.get<std::string>("kind"));
  f.maybe("betas", r.betas);
  f.maybe("auto", r.auto_betas);
  if (f.has("projection")) {
    const auto p = f.get<std::string>("projection");
    if (p == "per_layer") {
      r.projection = Projection::per_layer;
    } else if (p == "whole_vector") {
      r.projection = Projection::whole_vector;
    } else {
      throw ConfigError("field '" + f.child("projection") + "' must be 'per_layer' or 'whole_vector'");
    }
  }
  if (f.has("weighting")) {
    const auto w = f.get<std::string>("weighting");
    if (w == "sample_size") {
      r.weighting = SourceWeighting::sample_size;
    } else if (w == "uniform") {
      r.weighting = SourceWeighting::uniform;
    } else {
      throw ConfigError("field '" + f.child("weighting") + "' must be 'sample_size' or 'uniform'");
    }
  }
  f.finish();
  for (double b : r.betas)
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("field '" + f.child("betas") + "' values must lie in [0, 1]");
  if (r.auto_betas && !r.uses_betas())
    throw ConfigError("field '" + f.child("auto") + "' applies to fed_da and fed_gp only");
  return r;
}

inline FederationConfig parse_federation(Fields f) {
  FederationConfig c;
  f.maybe("rounds", c.rounds);
  f.maybe("local_epochs", c.local_epochs);
  f.maybe("lr_s", c.lr_s);
  f.maybe("lr_t", c.lr_t);
  f.maybe("batch_s", c.batch_s);
  f.maybe("batch_t", c.batch_t);
  f.maybe("init_epochs", c.init_epochs);
  f.maybe("hidden_dim", c.hidden_dim);
  f.maybe("estimator_batches", c.estimator_batches);
  f.maybe("align_updates", c.align_updates);
  if (f.has("estimator")) {
    const auto e = f.get<std::string>("estimator");
    if (e == "path") {
      c.estimator = EstimatorMeasure::path;
    } else if (e == "round_start") {
      c.estimator = EstimatorMeasure::round_start;
    } else {
      throw ConfigError("field '" + f.child("estimator") + "' must be 'path' or 'round_start'");
    }
  }
  if (f.has("rule")) c.rule = parse_rule(f.object("rule"));
  f.finish();
  if (c.rounds < 1) throw ConfigError("field '" + f.child("rounds") + "' must be >= 1");
  if (!(c.lr_s > 0.0)) throw ConfigError("field '" + f.child("lr_s") + "' must be positive");
  if (!(c.lr_t > 0.0)) throw ConfigError("field '" + f.child("lr_t") + "' must be positive");
  if (c.batch_s == 0) throw ConfigError("field '" + f.child("batch_s") + "' must be positive");
  if (c.batch_t == 0) throw ConfigError("field '" + f.child("batch_t") + "' must be positive");
  if (c.hidden_dim == 0) throw ConfigError("field '" + f.child("hidden_dim") + "' must be positive");
  return c;
}

inline GridConfig parse_grid(Fields f) {
  GridConfig g;
  g.base = parse_synthetic(f.object("base"));
  g.shift_levels = f.get<std::vector<double>>("shift_levels");
  g.target_sizes = f.get<std::vector<std::size_t>>("target_sizes");
  f.maybe("test_size", g.test_size);
  f.maybe("trials", g.trials);
  f.maybe("resamples", g.resamples);
  f.maybe("high_shift_from", g.high_shift_from);
  const auto& rules = f.at("rules");
  if (!rules.is_array() || rules.size() < 2) throw ConfigError("field '" + f.child("rules") + "' needs >= 2 rules");
  for (std::size_t i = 0; i < rules.size(); ++i) {
    auto r = parse_rule(Fields(rules[i], f.child("rules") + "[" + std::to_string(i) + "]"));
    if (r.auto_betas) throw ConfigError("field '" + f.child("rules") + "': candidate rules must use fixed betas");
    g.rules.push_back(std::move(r));
  }
  if (f.has("auto_rule")) {
    g.auto_rule = parse_rule(f.object("auto_rule"));
    if (!g.auto_rule->auto_betas) throw ConfigError("field '" + f.child("auto_rule.auto") + "' must be true");
  }
  f.finish();
  if (g.shift_levels.empty()) throw ConfigError("field '" + f.child("shift_levels") + "' is empty");
  if (g.target_sizes.empty()) throw ConfigError("field '" + f.child("target_sizes") + "' is empty");
  if (g.trials < 1) throw ConfigError("field '" + f.child("trials") + "' must be >= 1");
  if (g.resamples < 2) throw ConfigError("field '" + f.child("resamples") + "' must be >= 2");
  return g;
}

inline ExperimentKind parse_kind(const std::string& s) {
  for (auto k : {ExperimentKind::single_run, ExperimentKind::semi_synthetic, ExperimentKind::synthetic_grid,
                 ExperimentKind::estimator_validation, ExperimentKind::generate})
    if (s == to_string(k)) return k;
  throw ConfigError("field 'experiment' has unknown value '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  c.base_dir = base_dir;
  detail::Fields f(j, "");
  c.kind = detail::parse_kind(f.get<std::string>("experiment"));
  f.maybe("seed", c.seed);
  if (f.has("output_dir")) c.output_dir = f.get<std::string>("output_dir");
  if (f.has("federation")) c.federation = detail::parse_federation(f.object("federation"));
  c.federation.seed = c.seed;
  switch (c.kind) {
    case ExperimentKind::single_run:
    case ExperimentKind::semi_synthetic: {
      auto data = f.object("data");
      const auto& sources = data.at("sources");
      if (!sources.is_array()) throw ConfigError("field 'data.sources' must be an array");
      for (std::size_t i = 0; i < sources.size(); ++i)
        c.sources.push_back(detail::parse_dataset_source(sources[i], "data.sources[" + std::to_string(i) + "]"));
      c.target_train = detail::parse_dataset_source(data.at("target_train"), "data.target_train");
      c.target_test = detail::parse_dataset_source(data.at("target_test"), "data.target_test");
      data.finish();
      break;
    }
    case ExperimentKind::generate: {
      const auto& list = f.at("datasets");
      if (!list.is_array() || list.empty()) throw ConfigError("field 'datasets' must be a non-empty array");
      std::set<std::string> names;
      for (std::size_t i = 0; i < list.size(); ++i) {
        auto d = detail::parse_dataset_source(list[i], "datasets[" + std::to_string(i) + "]");
        if (!names.insert(d.name).second) throw ConfigError("datasets: duplicate name '" + d.name + "'");
        c.datasets.push_back(std::move(d));
      }
      break;
    }
    case ExperimentKind::synthetic_grid:
      c.grid = detail::parse_grid(f.object("grid"));
      break;
    case ExperimentKind::estimator_validation: {
      if (f.has("estimators")) {
        auto e = f.object("estimators");
        e.maybe("dim", c.estimators.dim);
        e.maybe("batches", c.estimators.batches);
        e.maybe("trials", c.estimators.trials);
        e.maybe("z_threshold", c.estimators.z_threshold);
        e.finish();
      }
      if (c.estimators.batches < 2) throw ConfigError("field 'estimators.batches' must be >= 2");
      if (c.estimators.dim < 2) throw ConfigError("field 'estimators.dim' must be >= 2");
      if (c.estimators.trials < 2) throw ConfigError("field 'estimators.trials' must be >= 2");
      break;
    }
  }
  f.finish();
  c.grid.federation = c.federation;
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(parse_json_file(path), path.parent_path());
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(path.string(), 0) == 0) throw;
    throw ConfigError(path.string() + ": " + what);
  }
}

// Builds the dataset described by `src`.
inline Dataset materialize(const DatasetSource& src, const std::filesystem::path& base_dir) {
  Dataset d;
  if (src.file) {
    d = load_dataset(src.file->is_absolute() ? *src.file : base_dir / *src.file);
  } else if (src.synthetic) {
    d = gen_synthetic(*src.synthetic);
  } else {
    d = gen_blobs(*src.blobs, src.blob_stream);
  }
  if (src.feature_noise) d = apply_feature_noise(d, src.feature_noise->first, src.feature_noise->second);
  if (src.label_shift) {
    auto parts = apply_label_shift(d, src.label_shift->eta, src.label_shift->seed);
    d = src.label_shift->take_source ? std::move(parts.first) : std::move(parts.second);
  }
  if (src.split) {
    auto parts = split(d, src.split->n_first, src.split->seed);
    d = src.split->take_first ? std::move(parts.first) : std::move(parts.second);
  }
  if (src.subsample) d = subsample(d, src.subsample->first, src.subsample->second);
  d.name = src.name;
  return d;
}

// Round-trippable, locale-independent number text.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Per-round CSV. Auto-weighting columns appear only when the rule is auto
// weighted; test_acc is empty for regression.
inline std::string rounds_csv(const FederationConfig& cfg, std::size_t n_sources,
                              const std::vector<RoundReport>& reports) {
  std::ostringstream out;
  const bool with_auto = cfg.auto_weight();
  out << "round,rule";
  for (std::size_t i = 1; i <= n_sources; ++i) out << ",beta_" << i;
  if (with_auto) {
    out << ",sigma2_hat";
    for (std::size_t i = 1; i <= n_sources; ++i) out << ",d2_hat_" << i;
    for (std::size_t i = 1; i <= n_sources; ++i) out << ",tau2d2_hat_" << i;
  }
  out << ",test_loss,test_acc\n";
  const std::string label = cfg.rule.label();
  for (const auto& r : reports) {
    out << r.round << ',' << label;
    for (std::size_t i = 0; i < n_sources; ++i)
      out << ',' << (i < r.betas_used.size() ? format_number(r.betas_used[i]) : std::string());
    if (with_auto) {
      const auto& s = r.delta_stats;
      out << ',' << (s ? format_number(s->sigma2_hat) : std::string());
      for (std::size_t i = 0; i < n_sources; ++i) out << ',' << (s ? format_number(s->d2_hat[i]) : std::string());
      for (std::size_t i = 0; i < n_sources; ++i) out << ',' << (s ? format_number(s->tau2d2_hat[i]) : std::string());
    }
    out << ',' << format_number(r.target_test_loss) << ','
        << (r.target_test_accuracy ? format_number(*r.target_test_accuracy) : std::string()) << '\n';
  }
  return out.str();
}

inline nlohmann::json run_summary(const FederationConfig& cfg, std::size_t n_sources,
                                  const std::vector<RoundReport>& reports) {
  nlohmann::json j;
  j["rule"] = cfg.rule.label();
  j["seed"] = cfg.seed;
  j["rounds"] = reports.size();
  j["n_sources"] = n_sources;
  j["auto_weight"] = cfg.auto_weight();
  if (!reports.empty()) {
    const auto& last = reports.back();
    j["final_test_loss"] = last.target_test_loss;
    j["final_test_acc"] = last.target_test_accuracy ? nlohmann::json(*last.target_test_accuracy) : nlohmann::json();
    j["final_betas"] = last.betas_used;
    double best = last.target_test_loss;
    for (const auto& r : reports) best = std::min(best, r.target_test_loss);
    j["best_test_loss"] = best;
  }
  return j;
}

// Grid CSV: required columns first, then per-rule Delta errors and losses.
inline std::string grid_csv(const GridResult& g) {
  std::ostringstream out;
  out << "source_idx,target_idx,d_pi,sigma_pi,predicted_winner,actual_winner,agree";
  for (const auto& n : g.rule_names) out << ",delta2_" << n;
  for (const auto& n : g.rule_names) out << ",loss_" << n;
  const bool with_auto = !g.cells.empty() && g.cells.front().auto_loss.has_value();
  if (with_auto) out << ",loss_auto";
  out << '\n';
  for (const auto& c : g.cells) {
    out << c.source_idx << ',' << c.target_idx << ',' << format_number(c.d_pi) << ',' << format_number(c.sigma_pi)
        << ',' << g.rule_names[c.predicted] << ',' << g.rule_names[c.actual] << ',' << (c.agree() ? 1 : 0);
    for (double v : c.delta2) out << ',' << format_number(v);
    for (double v : c.final_loss) out << ',' << format_number(v);
    if (with_auto) out << ',' << format_number(*c.auto_loss);
    out << '\n';
  }
  return out.str();
}

}  // namespace fdasim
