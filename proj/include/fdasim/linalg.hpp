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
#include <initializer_list>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "fdasim/errors.hpp"

namespace fdasim {

// Flat parameter (or gradient) vector segmented into layers. Whole-vector
// operations treat it as the concatenation of its layers; per-layer operations
// exist because projection filtering can be applied layer by layer.
class ParamVector {
 public:
  ParamVector() : offsets_{0} {}

  // Zero vector with the given per-layer lengths.
  explicit ParamVector(std::span<const std::size_t> layer_sizes) : offsets_{0} {
    for (std::size_t n : layer_sizes) offsets_.push_back(offsets_.back() + n);
    data_.assign(offsets_.back(), 0.0);
  }
  explicit ParamVector(std::initializer_list<std::size_t> layer_sizes)
      : ParamVector(std::span<const std::size_t>(layer_sizes.begin(), layer_sizes.size())) {}

  static ParamVector from_layers(const std::vector<std::vector<double>>& layers) {
    ParamVector v;
    for (const auto& layer : layers) {
      v.offsets_.push_back(v.offsets_.back() + layer.size());
      v.data_.insert(v.data_.end(), layer.begin(), layer.end());
    }
    return v;
  }

  // Single-layer convenience constructor.
  static ParamVector from_values(std::vector<double> values) {
    ParamVector v;
    v.offsets_.push_back(values.size());
    v.data_ = std::move(values);
    return v;
  }

  static ParamVector zeros_like(const ParamVector& other) {
    ParamVector v = other;
    std::fill(v.data_.begin(), v.data_.end(), 0.0);
    return v;
  }

  [[nodiscard]] std::size_t total_dim() const { return data_.size(); }
  [[nodiscard]] std::size_t layer_count() const { return offsets_.size() - 1; }
  [[nodiscard]] std::size_t layer_size(std::size_t l) const { return offsets_.at(l + 1) - offsets_.at(l); }
  [[nodiscard]] std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> sizes;
    for (std::size_t l = 0; l < layer_count(); ++l) sizes.push_back(layer_size(l));
    return sizes;
  }

  [[nodiscard]] std::span<double> layer(std::size_t l) {
    check_layer(l);
    return {data_.data() + offsets_[l], offsets_[l + 1] - offsets_[l]};
  }
  [[nodiscard]] std::span<const double> layer(std::size_t l) const {
    check_layer(l);
    return {data_.data() + offsets_[l], offsets_[l + 1] - offsets_[l]};
  }

  [[nodiscard]] std::span<double> flat() { return data_; }
  [[nodiscard]] std::span<const double> flat() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] bool conformable(const ParamVector& other) const { return offsets_ == other.offsets_; }

  [[nodiscard]] bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  ParamVector& operator+=(const ParamVector& other) {
    require_conformable(other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }
  ParamVector& operator-=(const ParamVector& other) {
    require_conformable(other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
  }
  ParamVector& operator*=(double c) {
    for (double& x : data_) x *= c;
    return *this;
  }

  // this += c * other
  ParamVector& axpy(double c, const ParamVector& other) {
    require_conformable(other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += c * other.data_[i];
    return *this;
  }

  friend ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
  friend ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
  friend ParamVector operator*(double c, ParamVector a) { return a *= c; }
  friend ParamVector operator*(ParamVector a, double c) { return a *= c; }

  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.offsets_ == b.offsets_ && a.data_ == b.data_;
  }

  void require_conformable(const ParamVector& other) const {
    if (!conformable(other)) throw ShapeError("ParamVector: layer layouts differ");
  }

 private:
  void check_layer(std::size_t l) const {
    if (l >= layer_count())
      throw ShapeError("ParamVector: layer index " + std::to_string(l) + " out of range");
  }

  std::vector<double> data_;
  std::vector<std::size_t> offsets_;
};

inline double layer_inner(const ParamVector& a, const ParamVector& b, std::size_t layer_index) {
  a.require_conformable(b);
  auto x = a.layer(layer_index);
  auto y = b.layer(layer_index);
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
  return s;
}

// Layers are reduced independently and summed in index order, so the sum of
// layer_inner over all layers reproduces inner() bit for bit.
inline double inner(const ParamVector& a, const ParamVector& b) {
  a.require_conformable(b);
  double s = 0.0;
  for (std::size_t l = 0; l < a.layer_count(); ++l) s += layer_inner(a, b, l);
  return s;
}

inline double norm_sq(const ParamVector& a) { return inner(a, a); }
inline double norm(const ParamVector& a) { return std::sqrt(norm_sq(a)); }

// Equal-weight empirical measure over parameter points.
class PiMeasure {
 public:
  explicit PiMeasure(std::vector<ParamVector> points) : points_(std::move(points)) {
    if (points_.empty()) throw ShapeError("PiMeasure: empty measure");
    for (const auto& p : points_) points_.front().require_conformable(p);
  }
  static PiMeasure point_mass(ParamVector theta) { return PiMeasure({std::move(theta)}); }

  [[nodiscard]] std::size_t size() const { return points_.size(); }
  [[nodiscard]] const ParamVector& operator[](std::size_t i) const { return points_[i]; }
  [[nodiscard]] const std::vector<ParamVector>& points() const { return points_; }

 private:
  std::vector<ParamVector> points_;
};

// Values of a vector field g : Theta -> Theta at the atoms of some PiMeasure,
// in atom order. A single-entry field is a point-mass evaluation.
using GradField = std::vector<ParamVector>;

// ||f||_pi^2 for a field already evaluated on the atoms.
inline double pi_norm_sq(const GradField& f) {
  if (f.empty()) throw ShapeError("pi_norm_sq: empty measure");
  double s = 0.0;
  for (const auto& v : f) s += norm_sq(v);
  return s / static_cast<double>(f.size());
}

// <f, g>_pi for two fields evaluated on the same atoms.
inline double pi_inner(const GradField& f, const GradField& g) {
  if (f.empty() || f.size() != g.size()) throw ShapeError("pi_inner: fields differ in atom count");
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) s += inner(f[k], g[k]);
  return s / static_cast<double>(f.size());
}

// E_{theta ~ pi} ||f(theta)||^2.
template <typename F>
  requires std::is_invocable_r_v<ParamVector, F, const ParamVector&>
double pi_norm_sq(F&& f, const PiMeasure& pi) {
  GradField values;
  values.reserve(pi.size());
  for (const auto& theta : pi.points()) values.push_back(f(theta));
  return pi_norm_sq(values);
}

inline GradField field_sub(const GradField& f, const GradField& g) {
  if (f.size() != g.size()) throw ShapeError("field_sub: fields differ in atom count");
  GradField out = f;
  for (std::size_t k = 0; k < f.size(); ++k) out[k] -= g[k];
  return out;
}

}  // namespace fdasim
