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
#include <cstddef>
#include <span>
#include <vector>

#include "fdasim/errors.hpp"
#include "fdasim/linalg.hpp"

namespace fdasim {

// B target gradient samples g^1..g^B, each evaluated on the atoms of a
// measure pi. With the optimization-path measure every sample holds a single
// atom (the update taken from its own pre-batch parameters), and the pi-norm
// reduces to a plain squared norm.
class BatchGradients {
 public:
  explicit BatchGradients(std::vector<GradField> grads) : grads_(std::move(grads)) { check(); }

  // Path mode: one stored update per batch.
  static BatchGradients from_updates(std::span<const ParamVector> updates) {
    std::vector<GradField> g;
    g.reserve(updates.size());
    for (const auto& u : updates) g.push_back(GradField{u});
    return BatchGradients(std::move(g));
  }

  [[nodiscard]] std::size_t size() const { return grads_.size(); }
  [[nodiscard]] std::size_t atoms() const { return grads_.front().size(); }
  [[nodiscard]] const GradField& operator[](std::size_t j) const { return grads_[j]; }

  [[nodiscard]] GradField mean() const {
    GradField m = grads_.front();
    for (std::size_t j = 1; j < grads_.size(); ++j)
      for (std::size_t k = 0; k < m.size(); ++k) m[k] += grads_[j][k];
    for (auto& v : m) v *= 1.0 / static_cast<double>(grads_.size());
    return m;
  }

  // (1/(B-1)) sum_j ||g^j - mean||_pi^2, the unbiased variance of one sample.
  [[nodiscard]] double sample_variance() const {
    const GradField m = mean();
    double s = 0.0;
    for (const auto& g : grads_) s += pi_norm_sq(field_sub(g, m));
    return s / static_cast<double>(grads_.size() - 1);
  }

 private:
  void check() const {
    if (grads_.size() < 2) throw EstimationError("BatchGradients: need B >= 2 batch gradients");
    const auto& first = grads_.front();
    if (first.empty()) throw EstimationError("BatchGradients: empty gradient field");
    for (const auto& g : grads_) {
      if (g.size() != first.size()) throw ShapeError("BatchGradients: atom counts differ");
      for (std::size_t k = 0; k < g.size(); ++k) first[k].require_conformable(g[k]);
    }
  }

  std::vector<GradField> grads_;
};

// Unbiased estimate of the target variance sigma^2 of the full-data gradient
// (the mean of the B samples): sample_variance / B.
inline double estimate_sigma2(const BatchGradients& batch) {
  return batch.sample_variance() / static_cast<double>(batch.size());
}

// Unbiased estimate of ||g_S - g_T||_pi^2. May be negative.
inline double estimate_d2(const GradField& g_s, const BatchGradients& batch) {
  if (g_s.size() != batch.atoms()) throw ShapeError("estimate_d2: source field has wrong atom count");
  double s = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) s += pi_norm_sq(field_sub(g_s, batch[j]));
  return s / static_cast<double>(batch.size()) - batch.sample_variance();
}

struct Tau2d2Estimate {
  double value = 0.0;
  // Some atom had a (near) zero source gradient; nothing was projected out there.
  bool degenerate_source = false;
};

// Unbiased estimate of ||g_T - <g_T, u_S> u_S||_pi^2 with u_S = g_S / ||g_S||.
inline Tau2d2Estimate estimate_tau2d2(const GradField& g_s, const BatchGradients& batch) {
  if (g_s.size() != batch.atoms()) throw ShapeError("estimate_tau2d2: source field has wrong atom count");
  Tau2d2Estimate est;
  std::vector<GradField> residuals;
  residuals.reserve(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    GradField r = batch[j];
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double ss = norm_sq(g_s[k]);
      if (ss < 1e-24) {
        est.degenerate_source = true;
        continue;
      }
      r[k].axpy(-inner(r[k], g_s[k]) / ss, g_s[k]);
    }
    residuals.push_back(std::move(r));
  }
  double mean_sq = 0.0;
  for (const auto& r : residuals) mean_sq += pi_norm_sq(r);
  mean_sq /= static_cast<double>(residuals.size());
  est.value = mean_sq - BatchGradients(std::move(residuals)).sample_variance();
  return est;
}

// Per-round estimates and the closed-form weights derived from them. The raw
// (possibly negative) estimates are kept; betas use values clamped at zero.
struct DeltaStats {
  double sigma2_hat = 0.0;
  std::vector<double> d2_hat;
  std::vector<double> tau2d2_hat;
  std::vector<double> beta_da;
  std::vector<double> beta_gp;
  bool sigma2_clamped = false;
  std::vector<bool> d2_clamped;
  std::vector<bool> tau2d2_clamped;
  std::vector<bool> degenerate_source;
};

namespace detail {
inline double optimal_beta(double sigma2, double bias2) {
  const double denom = bias2 + sigma2;
  return denom > 0.0 ? sigma2 / denom : 0.0;
}
}  // namespace detail

// beta_da = sigma2 / (d2 + sigma2), beta_gp = sigma2 / (tau2d2 + sigma2),
// inputs clamped to >= 0 and beta := 0 when the denominator vanishes.
inline DeltaStats compute_betas(double sigma2, std::span<const double> d2, std::span<const double> tau2d2) {
  if (d2.size() != tau2d2.size()) throw ShapeError("compute_betas: d2 and tau2d2 lengths differ");
  DeltaStats s;
  s.sigma2_hat = sigma2;
  s.sigma2_clamped = sigma2 < 0.0;
  const double sig = std::max(sigma2, 0.0);
  for (std::size_t i = 0; i < d2.size(); ++i) {
    s.d2_hat.push_back(d2[i]);
    s.tau2d2_hat.push_back(tau2d2[i]);
    s.d2_clamped.push_back(d2[i] < 0.0);
    s.tau2d2_clamped.push_back(tau2d2[i] < 0.0);
    s.beta_da.push_back(detail::optimal_beta(sig, std::max(d2[i], 0.0)));
    s.beta_gp.push_back(detail::optimal_beta(sig, std::max(tau2d2[i], 0.0)));
  }
  s.degenerate_source.assign(d2.size(), false);
  return s;
}

// All three estimators for every source, then compute_betas.
inline DeltaStats estimate_delta_stats(const BatchGradients& batch, std::span<const GradField> sources) {
  const double sigma2 = estimate_sigma2(batch);
  std::vector<double> d2, t2;
  std::vector<bool> degenerate;
  for (const auto& g_s : sources) {
    d2.push_back(estimate_d2(g_s, batch));
    const auto t = estimate_tau2d2(g_s, batch);
    t2.push_back(t.value);
    degenerate.push_back(t.degenerate_source);
  }
  DeltaStats s = compute_betas(sigma2, d2, t2);
  s.degenerate_source = std::move(degenerate);
  return s;
}

}  // namespace fdasim
