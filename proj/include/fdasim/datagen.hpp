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
#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "fdasim/errors.hpp"
#include "fdasim/model.hpp"
#include "fdasim/random.hpp"

namespace fdasim {

// Regression task family: inputs from a Gaussian mixture, targets a sum of
// radial basis functions per output coordinate.
struct SyntheticSpec {
  std::size_t input_dim = 50;
  std::size_t output_dim = 10;
  std::size_t n_samples = 5000;
  std::size_t n_basis = 100;
  std::size_t n_mixture = 10;
  // Each basis parameter p becomes p + shift_level * u, u ~ U(-0.5, 0.5)
  // from a dedicated stream. Zero reproduces the reference domain.
  double shift_level = 0.0;
  // phi(x) = exp(-||x - mu||^2 / ((2 sigma)^2 * width_scale)). A value of 0
  // selects width_scale = input_dim, which keeps the basis functions from
  // vanishing on unit-covariance inputs in high dimension.
  double width_scale = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim == 0) throw ConfigError("synthetic.input_dim must be positive");
    if (output_dim == 0) throw ConfigError("synthetic.output_dim must be positive");
    if (n_samples == 0) throw ConfigError("synthetic.n_samples must be positive");
    if (n_basis == 0) throw ConfigError("synthetic.n_basis must be positive");
    if (n_mixture == 0) throw ConfigError("synthetic.n_mixture must be positive");
    if (!(shift_level >= 0.0) || !std::isfinite(shift_level)) throw ConfigError("synthetic.shift_level must be >= 0");
    if (!(width_scale >= 0.0)) throw ConfigError("synthetic.width_scale must be >= 0");
  }
};

// Smallest |sigma| admitted for a basis function.
inline constexpr double kMinBasisWidth = 1e-3;

inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const StreamKey root(spec.seed);
  const std::size_t d = spec.input_dim;
  std::uniform_real_distribution<double> unif(-0.5, 0.5);

  std::vector<double> centers(spec.n_mixture * d);
  {
    auto rng = root.with("mixture-centers").engine();
    for (double& c : centers) c = unif(rng);
  }

  // Per output coordinate k and basis i: mu (d entries) followed by sigma.
  const std::size_t per_basis = d + 1;
  std::vector<double> basis(spec.output_dim * spec.n_basis * per_basis);
  {
    auto rng = root.with("basis").engine();
    for (double& p : basis) p = unif(rng);
    auto shift_rng = root.with("basis-shift").engine();
    for (double& p : basis) p += spec.shift_level * unif(shift_rng);
  }
  const double width_scale = spec.width_scale > 0.0 ? spec.width_scale : static_cast<double>(d);

  Dataset data{"synthetic", TaskKind::regression, d, spec.output_dim, {}, {}};
  data.inputs.resize(spec.n_samples * d);
  data.targets.resize(spec.n_samples * spec.output_dim);
  auto rng = root.with("samples").engine();
  std::uniform_int_distribution<std::size_t> pick(0, spec.n_mixture - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t r = 0; r < spec.n_samples; ++r) {
    const std::size_t c = pick(rng);
    double* x = data.inputs.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) x[j] = centers[c * d + j] + gauss(rng);
    for (std::size_t k = 0; k < spec.output_dim; ++k) {
      double y = 0.0;
      for (std::size_t i = 0; i < spec.n_basis; ++i) {
        const double* p = basis.data() + (k * spec.n_basis + i) * per_basis;
        double dist2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = x[j] - p[j];
          dist2 += diff * diff;
        }
        const double sigma = std::max(std::abs(p[d]), kMinBasisWidth);
        y += std::exp(-dist2 / (4.0 * sigma * sigma * width_scale));
      }
      data.targets[r * spec.output_dim + k] = y;
    }
  }
  return data;
}

// Isotropic Gaussian blobs: one unit-covariance cluster per class with means
// drawn from U(-mean_range, mean_range)^input_dim; labels are balanced.
struct BlobSpec {
  std::size_t input_dim = 20;
  std::size_t n_classes = 10;
  std::size_t n_samples = 2000;
  double mean_range = 2.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim == 0) throw ConfigError("blobs.input_dim must be positive");
    if (n_classes < 2) throw ConfigError("blobs.n_classes must be >= 2");
    if (n_samples == 0) throw ConfigError("blobs.n_samples must be positive");
    if (!(mean_range > 0.0)) throw ConfigError("blobs.mean_range must be positive");
  }
};

// Draws n_samples rows from the blob distribution. `sample_stream` selects an
// independent draw from the same class means, so several domains can share
// the population while holding disjoint samples.
inline Dataset gen_blobs(const BlobSpec& spec, std::uint64_t sample_stream = 0) {
  spec.validate();
  const StreamKey root(spec.seed);
  const std::size_t d = spec.input_dim;
  std::vector<double> means(spec.n_classes * d);
  {
    auto rng = root.with("blob-means").engine();
    std::uniform_real_distribution<double> u(-spec.mean_range, spec.mean_range);
    for (double& m : means) m = u(rng);
  }
  Dataset data{"blobs", TaskKind::classification, d, spec.n_classes, {}, {}};
  data.inputs.resize(spec.n_samples * d);
  data.targets.resize(spec.n_samples);
  std::vector<std::size_t> labels(spec.n_samples);
  for (std::size_t r = 0; r < spec.n_samples; ++r) labels[r] = r % spec.n_classes;
  auto rng = root.with("blob-samples").with(sample_stream).engine();
  std::shuffle(labels.begin(), labels.end(), rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t r = 0; r < spec.n_samples; ++r) {
    const std::size_t c = labels[r];
    data.targets[r] = static_cast<double>(c);
    for (std::size_t j = 0; j < d; ++j) data.inputs[r * d + j] = means[c * d + j] + gauss(rng);
  }
  return data;
}

// n rows drawn uniformly without replacement, in the order of a seeded
// permutation.
inline Dataset subsample(const Dataset& data, std::size_t n, std::uint64_t seed) {
  if (n < 1 || n > data.size())
    throw ConfigError("subsample: n=" + std::to_string(n) + " outside [1, " + std::to_string(data.size()) + "]");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = StreamKey(seed).with("subsample").engine();
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(n);
  return data.select(order);
}

// n rows drawn uniformly with replacement.
inline Dataset resample(const Dataset& data, std::size_t n, const StreamKey& key) {
  if (data.size() == 0) throw ShapeError("resample: empty dataset");
  std::vector<std::size_t> rows(n);
  auto rng = key.engine();
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  for (auto& r : rows) r = pick(rng);
  return data.select(rows);
}

// Seeded split into (first n_first rows of a permutation, remaining rows).
inline std::pair<Dataset, Dataset> split(const Dataset& data, std::size_t n_first, std::uint64_t seed) {
  if (n_first > data.size()) throw ConfigError("split: n_first exceeds dataset size");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = StreamKey(seed).with("split").engine();
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_first));
  std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(n_first), order.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {data.select(a), data.select(b)};
}

struct ShiftTransform {
  enum class Kind { feature_noise, label_shift };
  Kind kind = Kind::feature_noise;
  double std = 0.0;  // feature_noise
  double eta = 0.5;  // label_shift
  std::uint64_t seed = 0;

  static ShiftTransform feature_noise(double std, std::uint64_t seed) { return {Kind::feature_noise, std, 0.5, seed}; }
  static ShiftTransform label_shift(double eta, std::uint64_t seed) { return {Kind::label_shift, 0.0, eta, seed}; }
};

// Adds i.i.d. N(0, std^2) to every input entry; targets untouched.
inline Dataset apply_feature_noise(const Dataset& data, double std, std::uint64_t seed) {
  if (!(std >= 0.0) || !std::isfinite(std)) throw ConfigError("feature_noise: std must be >= 0");
  Dataset out = data;
  if (std == 0.0) return out;
  auto rng = StreamKey(seed).with("feature-noise").engine();
  std::normal_distribution<double> gauss(0.0, std);
  for (double& v : out.inputs) v += gauss(rng);
  return out;
}

// Classes 0-2 form group one and 3-9 group two.
inline constexpr std::size_t kLabelShiftGroupOne = 3;

// Splits a 10-class dataset into (source, target): source takes an eta share
// of every group-one class and a (1 - eta) share of every group-two class;
// target takes the rest. Rows keep their original relative order.
inline std::pair<Dataset, Dataset> apply_label_shift(const Dataset& data, double eta, std::uint64_t seed) {
  if (!(eta >= 0.0 && eta <= 0.5)) throw ConfigError("label_shift: eta must lie in [0, 0.5]");
  if (data.kind != TaskKind::classification || data.output_dim != 10)
    throw ConfigError("label_shift: requires a 10-class classification dataset");
  std::vector<std::vector<std::size_t>> by_class(data.output_dim);
  for (std::size_t r = 0; r < data.size(); ++r) by_class[data.label(r)].push_back(r);
  std::vector<std::size_t> src_rows, tgt_rows;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto rows = by_class[c];
    auto rng = StreamKey(seed).with("label-shift").with(c).engine();
    std::shuffle(rows.begin(), rows.end(), rng);
    const double share = c < kLabelShiftGroupOne ? eta : 1.0 - eta;
    const auto k = static_cast<std::size_t>(std::llround(share * static_cast<double>(rows.size())));
    src_rows.insert(src_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k));
    tgt_rows.insert(tgt_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end());
  }
  std::sort(src_rows.begin(), src_rows.end());
  std::sort(tgt_rows.begin(), tgt_rows.end());
  Dataset src = data.select(src_rows);
  Dataset tgt = data.select(tgt_rows);
  src.name = data.name + "-source";
  tgt.name = data.name + "-target";
  return {std::move(src), std::move(tgt)};
}

// Applies either transform. feature_noise returns (noisy, empty); label_shift
// returns (source, target).
inline std::pair<Dataset, Dataset> apply_shift(const Dataset& data, const ShiftTransform& t) {
  if (t.kind == ShiftTransform::Kind::feature_noise) return {apply_feature_noise(data, t.std, t.seed), Dataset{}};
  return apply_label_shift(data, t.eta, t.seed);
}

}  // namespace fdasim
