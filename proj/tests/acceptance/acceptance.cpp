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

// Acceptance gate. Runs every criterion (or the ones named on the command
// line) and prints one PASS/FAIL line each. Exit status 4 when any fails.

#include "fdasim/aggregate.hpp"
#include "fdasim/autoweight.hpp"
#include "fdasim/config.hpp"
#include "fdasim/datagen.hpp"
#include "fdasim/fedsim.hpp"
#include "fdasim/io.hpp"
#include "fdasim/linalg.hpp"
#include "fdasim/metrics.hpp"
#include "fdasim/model.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#ifndef FDASIM_CLI_PATH
#error "FDASIM_CLI_PATH must point at the fdasim executable"
#endif
#ifndef FDASIM_EXAMPLES_DIR
#error "FDASIM_EXAMPLES_DIR must point at examples/configs"
#endif

namespace {

using namespace fdasim;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Running {
  double n = 0, sum = 0, sum_sq = 0;
  void add(double x) {
    ++n;
    sum += x;
    sum_sq += x * x;
  }
  double mean() const { return sum / n; }
  double std_error() const { return std::sqrt(std::max(sum_sq / n - mean() * mean(), 0.0) / (n - 1)); }
};

// ---------------------------------------------------------------------------
// 1. Analytic gradients against central differences.

Dataset random_dataset(TaskKind kind, std::size_t in, std::size_t out, std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset d{"fd", kind, in, out, {}, {}};
  for (std::size_t i = 0; i < n * in; ++i) d.inputs.push_back(g(rng));
  if (kind == TaskKind::regression) {
    for (std::size_t i = 0; i < n * out; ++i) d.targets.push_back(g(rng));
  } else {
    std::uniform_int_distribution<std::size_t> label(0, out - 1);
    for (std::size_t i = 0; i < n; ++i) d.targets.push_back(static_cast<double>(label(rng)));
  }
  return d;
}

Outcome gradient_check() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> dim(1, 6), rows(1, 8);
  std::normal_distribution<double> g(0.0, 0.7);
  constexpr double h = 1e-5;
  double worst = 0.0;
  std::size_t pairs = 0;
  for (Arch arch : {Arch::mlp_regression, Arch::mlp_classifier}) {
    const TaskKind kind = arch == Arch::mlp_regression ? TaskKind::regression : TaskKind::classification;
    for (int t = 0; t < 20; ++t, ++pairs) {
      const std::size_t in = dim(rng), hid = dim(rng);
      const std::size_t out = kind == TaskKind::regression ? dim(rng) : 1 + dim(rng);
      const Dataset d = random_dataset(kind, in, out, rows(rng), rng);
      Model m = Model::init(arch, in, hid, out, StreamKey(rng()));
      for (double& p : m.params.flat()) p += g(rng);  // nonzero biases too
      const ParamVector analytic = gradient(m, d);
      double diff = 0.0, scale = 0.0;
      for (std::size_t k = 0; k < m.params.total_dim(); ++k) {
        Model plus = m, minus = m;
        plus.params[k] += h;
        minus.params[k] -= h;
        const double numeric = (loss(plus, d) - loss(minus, d)) / (2 * h);
        diff = std::max(diff, std::abs(numeric - analytic[k]));
        scale = std::max({scale, std::abs(numeric), std::abs(analytic[k])});
      }
      worst = std::max(worst, scale > 0.0 ? diff / scale : diff);
    }
  }
  return {worst < 1e-5, fmt("pairs=%zu max_rel_err=%.3g", pairs, worst)};
}

// ---------------------------------------------------------------------------
// 2. Positive projection invariants.

Outcome projection_invariants() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> layers(1, 4), width(1, 8);
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::size_t failures = 0, non_positive = 0;
  constexpr int cases = 1000;
  for (int c = 0; c < cases; ++c) {
    std::vector<std::vector<double>> lt, ls;
    const std::size_t L = layers(rng);
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t w = width(rng);
      std::vector<double> a(w), b(w);
      for (auto& x : a) x = g(rng);
      for (auto& x : b) x = g(rng);
      lt.push_back(a);
      ls.push_back(b);
    }
    ParamVector t = ParamVector::from_layers(lt), s = ParamVector::from_layers(ls);
    // Either sign of <t, s> with equal odds.
    if ((inner(t, s) > 0.0) != coin(rng)) t *= -1.0;
    const double ts = inner(t, s), ss = norm_sq(s);
    const ParamVector p = proj_plus(t, s);
    bool ok = true;
    const double pp = norm_sq(p), ps = inner(p, s);
    // Colinear with s: Cauchy-Schwarz holds with equality.
    ok = ok && std::abs(ps * ps - pp * ss) <= 1e-10 * std::max(1.0, pp * ss);
    ok = ok && ps >= 0.0;
    ok = ok && norm(p) <= norm(t) * (1 + 1e-12);
    if (ts <= 0.0) {
      ++non_positive;
      ok = ok && pp == 0.0;
    } else {
      ok = ok && norm(p - (ts / ss) * s) <= 1e-12 * norm(t);
    }
    // Layerwise rule = sum of whole-vector projections of single-layer slices.
    ParamVector sum = ParamVector::zeros_like(s);
    for (std::size_t l = 0; l < L; ++l) {
      ParamVector tl = ParamVector::zeros_like(t), sl = ParamVector::zeros_like(s);
      std::copy(t.layer(l).begin(), t.layer(l).end(), tl.layer(l).begin());
      std::copy(s.layer(l).begin(), s.layer(l).end(), sl.layer(l).begin());
      sum += proj_plus(tl, sl);
    }
    const ParamVector lw = proj_plus_layerwise(t, s);
    ok = ok && norm(lw - sum) <= 1e-12 * std::max(1.0, norm(t));
    for (std::size_t l = 0; l < L; ++l) ok = ok && layer_inner(lw, s, l) >= 0.0;
    if (!ok) ++failures;
  }
  return {failures == 0, fmt("cases=%d non_positive=%zu failures=%zu", cases, non_positive, failures)};
}

// ---------------------------------------------------------------------------
// 3. Unbiasedness of the three estimators in a Gaussian gradient model:
// g^j = v + eps_j with eps_j ~ N(0, I_m), g_S = v + u, g_T = v.

Outcome estimator_unbiasedness() {
  constexpr std::size_t m = 4, B = 8;
  constexpr int trials = 100000;
  std::mt19937_64 rng(303);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(m), u(m), s(m);
  for (auto& x : v) x = g(rng);
  for (auto& x : u) x = g(rng);
  double uu = 0, ss = 0, vs = 0, vv = 0;
  for (std::size_t k = 0; k < m; ++k) {
    s[k] = v[k] + u[k];
    uu += u[k] * u[k];
    ss += s[k] * s[k];
    vs += v[k] * s[k];
    vv += v[k] * v[k];
  }
  const double truth[3] = {static_cast<double>(m) / B, uu, vv - vs * vs / ss};
  const GradField g_s{ParamVector::from_values(s)};
  Running acc[3];
  for (int t = 0; t < trials; ++t) {
    std::vector<ParamVector> batch;
    for (std::size_t j = 0; j < B; ++j) {
      std::vector<double> x(v);
      for (auto& c : x) c += g(rng);
      batch.push_back(ParamVector::from_values(std::move(x)));
    }
    const auto b = BatchGradients::from_updates(batch);
    acc[0].add(estimate_sigma2(b));
    acc[1].add(estimate_d2(g_s, b));
    acc[2].add(estimate_tau2d2(g_s, b).value);
  }
  const char* names[3] = {"sigma2", "d2", "tau2d2"};
  bool pass = true;
  std::string detail;
  for (int k = 0; k < 3; ++k) {
    const double z = (acc[k].mean() - truth[k]) / acc[k].std_error();
    pass = pass && std::abs(z) <= 4.0;
    detail += fmt("%s%s z=%+.2f", k ? " " : "", names[k], z);
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 4. Monte-Carlo Delta error of FedDA against (1-b)^2 sigma^2 + b^2 d^2.

SyntheticSpec small_spec(std::size_t in, std::size_t out, std::size_t n, double shift, std::uint64_t seed) {
  SyntheticSpec s;
  s.input_dim = in;
  s.output_dim = out;
  s.n_samples = n;
  s.n_basis = 8;
  s.n_mixture = 3;
  s.shift_level = shift;
  s.seed = seed;
  return s;
}

Outcome fedda_closed_form() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> dim(2, 6), size(2, 30);
  int agree = 0;
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const std::size_t in = dim(rng), out = dim(rng) / 2 + 1;
    const std::uint64_t seed = rng();
    const Dataset target = gen_synthetic(small_spec(in, out, 150, 0.0, seed));
    const std::vector<Dataset> source{gen_synthetic(small_spec(in, out, 150, 2.0 * unit(rng), seed))};
    const Model m = Model::init(Arch::mlp_regression, in, dim(rng), out, StreamKey(rng()));
    std::vector<ParamVector> atoms{m.params};
    if (c % 2 == 1) atoms.push_back(Model::init(Arch::mlp_regression, in, m.hidden_dim, out, StreamKey(rng())).params);
    const PiMeasure pi(atoms);
    const double beta = unit(rng);
    const std::size_t n = size(rng);
    const double sigma2 = exact_sigma2(target, n, m, pi);
    const double d = exact_distance(source[0], target, m, pi);
    const double expected = (1 - beta) * (1 - beta) * sigma2 + beta * beta * d * d;
    const auto r = monte_carlo_delta2(AggregationRule::fixed(RuleKind::fed_da, {}), std::vector<double>{beta}, source,
                                      target, n, m, pi, 4000, rng());
    const double z = std::abs(r.delta2 - expected) / r.std_error;
    worst = std::max(worst, z);
    if (z <= 4.0) ++agree;
  }
  return {agree == 20, fmt("configs=20 within_4se=%d max|z|=%.2f", agree, worst)};
}

// ---------------------------------------------------------------------------
// 5. FedGP beats FedDA when the source gradient is nearly colinear with the
// target's. Source labels are y' = f(x) - k (f(x) - y) at the point-mass
// parameters, so the source gradient there is about k times the target's,
// evaluated on fresh inputs.

Outcome fedgp_advantage() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> gain(1.2, 1.6);
  std::uniform_real_distribution<double> moderate(0.1, 0.4);
  std::normal_distribution<double> g(0.0, 1.0);
  int wins = 0, colinear = 0;
  std::size_t params = 0;
  double max_tau2 = 0.0, min_ratio = INFINITY, max_ratio = 0.0;
  std::size_t min_n = SIZE_MAX, max_n = 0;
  for (int c = 0; c < 20; ++c) {
    const std::uint64_t seed = rng();
    auto [target, rest] = split(gen_synthetic(small_spec(20, 3, 3000, 0.0, seed)), 1500, seed);
    const Model m = Model::init(Arch::mlp_regression, 20, 10, 3, StreamKey(rng()));
    params = m.params.total_dim();
    const double k = gain(rng);
    Dataset source = rest;
    detail::Workspace ws(m);
    for (std::size_t i = 0; i < source.size(); ++i) {
      detail::forward(m, source.x(i), ws);
      for (std::size_t o = 0; o < 3; ++o) {
        double& y = source.targets[i * 3 + o];
        y = ws.out[o] - k * (ws.out[o] - y) + 0.1 * g(rng);
      }
    }
    const PiMeasure pi = PiMeasure::point_mass(m.params);
    const ParamVector gt = gradient(m, target), gs = gradient(m, source);
    const double d2 = norm_sq(gt - gs);
    const double tau2 = norm_sq(gt - (inner(gt, gs) / norm_sq(gs)) * gs) / d2;
    max_tau2 = std::max(max_tau2, tau2);
    if (tau2 <= 0.25) ++colinear;
    // Target size chosen so that sigma^2 / d^2 lands in [0.1, 0.4].
    const double per_row = exact_sigma2(target, 1, m, pi);
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(per_row / (moderate(rng) * d2))));
    const double ratio = per_row / static_cast<double>(n) / d2;
    min_ratio = std::min(min_ratio, ratio);
    min_n = std::min(min_n, n);
    max_n = std::max(max_n, n);
    max_ratio = std::max(max_ratio, ratio);
    const std::vector<Dataset> sources{source};
    const auto problem = DeltaProblem::make(sources, target, m, pi);
    const std::vector<AggregationRule> rules{AggregationRule::fixed(RuleKind::fed_da, {}, Projection::whole_vector),
                                             AggregationRule::fixed(RuleKind::fed_gp, {}, Projection::whole_vector)};
    const std::vector<std::vector<double>> betas{{0.5}, {0.5}};
    const auto r = monte_carlo_delta2(rules, betas, problem, n, 300, rng());
    if (r[1].delta2 < r[0].delta2) ++wins;
  }
  const bool pass = params >= 100 && colinear == 20 && wins >= 18;
  return {pass, fmt("m=%zu max_tau2=%.3f sigma2/d2 in [%.2f, %.2f] n in [%zu, %zu] fedgp_wins=%d/20", params, max_tau2,
                    min_ratio, max_ratio, min_n, max_n, wins)};
}

// ---------------------------------------------------------------------------
// 6. Closed-form betas against a grid search of the quadratic Delta error.

double grid_argmin(double sigma2, double bias2) {
  double best = 0.0, best_val = INFINITY;
  for (int i = 0; i <= 1000; ++i) {
    const double b = i * 1e-3;
    const double val = (1 - b) * (1 - b) * sigma2 + b * b * bias2;
    if (val < best_val) {
      best_val = val;
      best = b;
    }
  }
  return best;
}

Outcome beta_optimality() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> loge(-4.0, 4.0);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const double sigma2 = std::exp(loge(rng)), d2 = std::exp(loge(rng));
    const double t2 = d2 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto s = compute_betas(sigma2, std::vector<double>{d2}, std::vector<double>{t2});
    worst = std::max({worst, std::abs(s.beta_da[0] - grid_argmin(sigma2, d2)),
                      std::abs(s.beta_gp[0] - grid_argmin(sigma2, t2))});
  }
  return {worst <= 1e-3, fmt("triples=100 max_abs_diff=%.2g", worst)};
}

// ---------------------------------------------------------------------------
// 7. Predicted vs trained winners on the 9x9 synthetic grid.

Outcome grid_reproduction() {
  const ExperimentConfig cfg = load_config(fs::path(FDASIM_EXAMPLES_DIR) / "grid_full.json");
  const GridConfig& grid = cfg.grid;
  const bool shape = grid.shift_levels.size() == 9 && grid.target_sizes.size() == 9 && grid.trials == 3 &&
                     grid.base.input_dim == 50 && grid.federation.hidden_dim == 32 && grid.base.n_samples == 5000;
  const GridResult r = predicted_vs_actual_grid(grid);
  std::optional<double> auto_win;
  for (std::size_t q = 0; q < grid.rules.size(); ++q)
    if (grid.rules[q].kind == RuleKind::fed_da) auto_win = r.auto_win_rate(q);
  std::size_t agree = 0;
  for (const auto& c : r.cells) agree += c.agree() ? 1 : 0;
  const double rate = r.agreement_rate();
  const bool pass = shape && rate >= 0.6 && auto_win && *auto_win >= 0.7;
  return {pass, fmt("agreement=%.3f (%zu/%zu) auto_fedda_win_high_shift=%.3f", rate, agree, r.cells.size(),
                    auto_win.value_or(-1.0))};
}

// ---------------------------------------------------------------------------
// 8. Blob classification with noisy target features: nine clean sources and a
// scarce noisy target.

Outcome semi_synthetic_noise() {
  const std::vector<double> levels{0.0, 0.4, 0.8};
  const std::vector<AggregationRule> rules{AggregationRule::fixed(RuleKind::source_only, {}),
                                           AggregationRule::fixed(RuleKind::fed_da, {0.5}),
                                           AggregationRule::fixed(RuleKind::fed_gp, {0.5})};
  std::vector<std::vector<double>> acc(levels.size(), std::vector<double>(rules.size(), 0.0));
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    BlobSpec spec;
    spec.seed = seed;
    spec.n_samples = 1000;
    std::vector<Dataset> sources;
    for (std::uint64_t i = 0; i < 9; ++i) sources.push_back(gen_blobs(spec, 10 + i));
    BlobSpec train_spec = spec, test_spec = spec;
    train_spec.n_samples = 20;
    test_spec.n_samples = 2000;
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const Dataset train = apply_feature_noise(gen_blobs(train_spec, 1), levels[l], seed * 7 + 1);
      const Dataset test = apply_feature_noise(gen_blobs(test_spec, 2), levels[l], seed * 7 + 2);
      for (std::size_t q = 0; q < rules.size(); ++q) {
        FederationConfig cfg;
        cfg.rounds = 30;
        cfg.lr_s = cfg.lr_t = 0.3;
        cfg.batch_s = 64;
        cfg.batch_t = 16;
        cfg.hidden_dim = 32;
        cfg.seed = seed;
        cfg.rule = rules[q];
        const auto res = run_experiment(cfg, sources, train, test);
        acc[l][q] += *res.reports.back().target_test_accuracy / 3.0;
      }
    }
  }
  bool monotone = true;
  for (std::size_t l = 1; l < levels.size(); ++l) monotone = monotone && acc[l][0] <= acc[l - 1][0];
  const double gap = 100.0 * (acc[2][2] - acc[2][1]);
  return {monotone && gap > 2.0,
          fmt("source_only=%.4f/%.4f/%.4f std0.8 fedda=%.4f fedgp=%.4f gap=%.2fpt", acc[0][0], acc[1][0], acc[2][0],
              acc[2][1], acc[2][2], gap)};
}

// ---------------------------------------------------------------------------
// 9. The run subcommand writes the same bytes at 1 and 8 threads.

Outcome thread_determinism() {
  const fs::path dir = fs::temp_directory_path() / "fdasim_acceptance_threads";
  fs::remove_all(dir);
  const fs::path config = fs::path(FDASIM_EXAMPLES_DIR) / "run_synthetic.json";
  for (int threads : {1, 8}) {
    const std::string cmd = std::string("\"") + FDASIM_CLI_PATH + "\" run --config \"" + config.string() +
                            "\" --seed 17 --threads " + std::to_string(threads) + " --out \"" +
                            (dir / std::to_string(threads)).string() + "\" >/dev/null";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, fmt("cli exited with status %d", status)};
  }
  const std::string a = read_text_file(dir / "1" / "rounds.csv"), b = read_text_file(dir / "8" / "rounds.csv");
  const bool same_summary = read_text_file(dir / "1" / "summary.json") == read_text_file(dir / "8" / "summary.json");
  return {!a.empty() && a == b && same_summary, fmt("rounds.csv %zu bytes, identical=%s, summary identical=%s",
                                                    a.size(), a == b ? "yes" : "no", same_summary ? "yes" : "no")};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "finite-difference gradients", 10, gradient_check},
      {2, "projection invariants", 5, projection_invariants},
      {3, "estimator unbiasedness", 120, estimator_unbiasedness},
      {4, "FedDA closed-form delta error", 120, fedda_closed_form},
      {5, "FedGP advantage near colinearity", 120, fedgp_advantage},
      {6, "closed-form beta optimality", 5, beta_optimality},
      {7, "9x9 predicted vs actual grid", 1800, grid_reproduction},
      {8, "noisy-feature blob ordering", 600, semi_synthetic_noise},
      {9, "thread-count determinism", 0, thread_determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_s == 0 || secs <= c.limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::string timing = fmt("%.1fs", secs);
    if (c.limit_s > 0) timing += fmt(" (limit %.0fs%s)", c.limit_s, in_time ? "" : ", exceeded");
    std::printf("%s criterion %d %s: %s; %s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 4;
}
