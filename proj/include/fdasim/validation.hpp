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

// Monte-Carlo check of the auto-weighting estimators in a Gaussian gradient
// model, where every target quantity has a closed form.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fdasim/autoweight.hpp"
#include "fdasim/errors.hpp"
#include "fdasim/linalg.hpp"
#include "fdasim/random.hpp"

namespace fdasim {

struct EstimatorCheck {
  std::string name;
  double mean = 0.0;
  double truth = 0.0;
  double std_error = 0.0;
  double z = 0.0;
  bool pass = false;
  bool degenerate_flagged = false;
};

// Batch samples g^j = v + eps_j with eps_j ~ N(0, I_dim), source g_S = v + u.
// Checks sigma2 (truth dim / B), d2 (||u||^2), tau2d2 (||v - <v,e>e||^2 with
// e = g_S / ||g_S||) and tau2d2 against a zero source (truth ||v||^2, must be
// flagged degenerate).
inline std::vector<EstimatorCheck> validate_estimators(std::size_t dim, std::size_t batches, std::size_t trials,
                                                       double z_threshold, std::uint64_t seed) {
  if (batches < 2) throw ConfigError("validate_estimators: batches must be >= 2");
  if (dim < 1 || trials < 2) throw ConfigError("validate_estimators: dim >= 1 and trials >= 2 required");
  const StreamKey root(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(dim), u(dim);
  {
    auto rng = root.with("model").engine();
    for (double& x : v) x = gauss(rng);
    for (double& x : u) x = gauss(rng);
  }
  std::vector<double> s(dim);
  double uu = 0.0, ss = 0.0, vs = 0.0, vv = 0.0;
  for (std::size_t k = 0; k < dim; ++k) {
    s[k] = v[k] + u[k];
    uu += u[k] * u[k];
    ss += s[k] * s[k];
    vs += v[k] * s[k];
    vv += v[k] * v[k];
  }
  const GradField g_s{ParamVector::from_values(s)};
  const GradField zero{ParamVector::from_values(std::vector<double>(dim, 0.0))};

  struct Acc {
    double sum = 0.0, sum_sq = 0.0;
    void add(double x) {
      sum += x;
      sum_sq += x * x;
    }
  };
  Acc a_sigma, a_d2, a_tau, a_zero;
  bool flagged = true;
  auto rng = root.with("trials").engine();
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<ParamVector> gs;
    gs.reserve(batches);
    for (std::size_t j = 0; j < batches; ++j) {
      std::vector<double> x(v);
      for (double& c : x) c += gauss(rng);
      gs.push_back(ParamVector::from_values(std::move(x)));
    }
    const auto batch = BatchGradients::from_updates(gs);
    a_sigma.add(estimate_sigma2(batch));
    a_d2.add(estimate_d2(g_s, batch));
    a_tau.add(estimate_tau2d2(g_s, batch).value);
    const auto z = estimate_tau2d2(zero, batch);
    flagged = flagged && z.degenerate_source;
    a_zero.add(z.value);
  }

  const double n = static_cast<double>(trials);
  auto check = [&](std::string name, const Acc& a, double truth) {
    EstimatorCheck c;
    c.name = std::move(name);
    c.mean = a.sum / n;
    c.truth = truth;
    c.std_error = std::sqrt(std::max(a.sum_sq / n - c.mean * c.mean, 0.0) * n / (n - 1) / n);
    c.z = c.std_error > 0.0 ? (c.mean - truth) / c.std_error : (c.mean == truth ? 0.0 : INFINITY);
    c.pass = std::abs(c.z) <= z_threshold;
    return c;
  };
  std::vector<EstimatorCheck> out;
  out.push_back(check("sigma2", a_sigma, static_cast<double>(dim) / static_cast<double>(batches)));
  out.push_back(check("d2", a_d2, uu));
  out.push_back(check("tau2d2", a_tau, vv - vs * vs / ss));
  auto degenerate = check("tau2d2_zero_source", a_zero, vv);
  degenerate.degenerate_flagged = flagged;
  degenerate.pass = degenerate.pass && flagged;
  out.push_back(degenerate);
  return out;
}

}  // namespace fdasim
