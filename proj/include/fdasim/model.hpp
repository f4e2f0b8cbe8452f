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
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fdasim/errors.hpp"
#include "fdasim/linalg.hpp"
#include "fdasim/random.hpp"

namespace fdasim {

enum class TaskKind { regression, classification };

inline const char* to_string(TaskKind k) {
  return k == TaskKind::regression ? "regression" : "classification";
}

// n samples z = (x, y). Inputs are row-major n x input_dim. Regression
// targets are row-major n x output_dim; classification targets hold one
// integer label per row (stored as double), with output_dim the class count.
struct Dataset {
  std::string name;
  TaskKind kind = TaskKind::regression;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<double> inputs;
  std::vector<double> targets;

  [[nodiscard]] std::size_t size() const { return input_dim == 0 ? 0 : inputs.size() / input_dim; }
  [[nodiscard]] std::size_t target_width() const { return kind == TaskKind::regression ? output_dim : 1; }

  [[nodiscard]] std::span<const double> x(std::size_t i) const { return {inputs.data() + i * input_dim, input_dim}; }
  [[nodiscard]] std::span<const double> y(std::size_t i) const {
    const std::size_t w = target_width();
    return {targets.data() + i * w, w};
  }
  [[nodiscard]] std::size_t label(std::size_t i) const { return static_cast<std::size_t>(targets[i]); }

  void validate() const {
    if (input_dim == 0 || output_dim == 0) throw ShapeError("Dataset '" + name + "': zero dimension");
    if (inputs.size() % input_dim != 0) throw ShapeError("Dataset '" + name + "': ragged inputs");
    if (targets.size() != size() * target_width())
      throw ShapeError("Dataset '" + name + "': targets do not match row count");
    if (kind == TaskKind::classification) {
      for (double t : targets)
        if (t < 0 || t >= static_cast<double>(output_dim) || t != std::floor(t))
          throw ShapeError("Dataset '" + name + "': label out of range");
    }
  }

  // Rows in the given order (duplicates allowed).
  [[nodiscard]] Dataset select(std::span<const std::size_t> rows) const {
    Dataset out{name, kind, input_dim, output_dim, {}, {}};
    const std::size_t w = target_width();
    out.inputs.reserve(rows.size() * input_dim);
    out.targets.reserve(rows.size() * w);
    for (std::size_t r : rows) {
      if (r >= size()) throw ShapeError("Dataset::select: row out of range");
      auto xr = x(r);
      auto yr = y(r);
      out.inputs.insert(out.inputs.end(), xr.begin(), xr.end());
      out.targets.insert(out.targets.end(), yr.begin(), yr.end());
    }
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class Arch { mlp_regression, mlp_classifier };

// One-hidden-layer sigmoid network. params has two layers:
//   layer 0: W1 (hidden x input, row-major) followed by b1 (hidden)
//   layer 1: W2 (output x hidden, row-major) followed by b2 (output)
struct Model {
  Arch arch = Arch::mlp_regression;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  ParamVector params;

  static std::vector<std::size_t> layer_sizes(std::size_t in, std::size_t hidden, std::size_t out) {
    return {(in + 1) * hidden, (hidden + 1) * out};
  }

  // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0.
  static Model init(Arch arch, std::size_t in, std::size_t hidden, std::size_t out, const StreamKey& key) {
    if (in == 0 || hidden == 0 || out == 0) throw ConfigError("Model::init: dimensions must be positive");
    auto sizes = layer_sizes(in, hidden, out);
    Model m{arch, in, hidden, out, ParamVector(std::span<const std::size_t>(sizes))};
    auto rng = key.with("model-init").engine();
    auto fill = [&rng](std::span<double> w, std::size_t fan_in) {
      const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-a, a);
      for (double& v : w) v = u(rng);
    };
    fill(m.params.layer(0).first(hidden * in), in);
    fill(m.params.layer(1).first(out * hidden), hidden);
    return m;
  }

  [[nodiscard]] Model with_params(ParamVector p) const {
    params.require_conformable(p);
    Model m = *this;
    m.params = std::move(p);
    return m;
  }

  [[nodiscard]] TaskKind task() const {
    return arch == Arch::mlp_regression ? TaskKind::regression : TaskKind::classification;
  }

  void check_data(const Dataset& data) const {
    if (data.input_dim != input_dim || data.output_dim != output_dim || data.kind != task())
      throw ShapeError("Model/Dataset dimension mismatch for dataset '" + data.name + "'");
    if (data.inputs.size() != data.size() * input_dim || data.targets.size() != data.size() * data.target_width())
      throw ShapeError("Dataset '" + data.name + "' is malformed");
  }
};

struct Metrics {
  double loss = 0.0;
  std::optional<double> accuracy;
};

namespace detail {

inline double sigmoid(double a) {
  return a >= 0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
}

// Scratch buffers for one forward/backward pass.
struct Workspace {
  std::vector<double> hidden;
  std::vector<double> out;
  std::vector<double> d_out;
  std::vector<double> d_hidden;
  explicit Workspace(const Model& m)
      : hidden(m.hidden_dim), out(m.output_dim), d_out(m.output_dim), d_hidden(m.hidden_dim) {}
};

inline void forward(const Model& m, std::span<const double> x, Workspace& ws) {
  auto l0 = m.params.layer(0);
  auto l1 = m.params.layer(1);
  const std::size_t in = m.input_dim, hid = m.hidden_dim, out = m.output_dim;
  for (std::size_t h = 0; h < hid; ++h) {
    const double* w = l0.data() + h * in;
    double a = l0[hid * in + h];
    for (std::size_t i = 0; i < in; ++i) a += w[i] * x[i];
    ws.hidden[h] = sigmoid(a);
  }
  for (std::size_t k = 0; k < out; ++k) {
    const double* w = l1.data() + k * hid;
    double o = l1[out * hid + k];
    for (std::size_t h = 0; h < hid; ++h) o += w[h] * ws.hidden[h];
    ws.out[k] = o;
  }
}

inline double log_sum_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double o : v) s += std::exp(o - mx);
  return mx + std::log(s);
}

// Loss of the sample whose forward pass is in ws; optionally fills
// ws.d_out with d loss / d output.
inline double sample_loss(const Model& m, const Dataset& d, std::size_t row, Workspace& ws, bool want_grad) {
  if (m.arch == Arch::mlp_regression) {
    auto y = d.y(row);
    const double inv_k = 1.0 / static_cast<double>(m.output_dim);
    double l = 0.0;
    for (std::size_t k = 0; k < m.output_dim; ++k) {
      const double r = ws.out[k] - y[k];
      l += r * r;
      if (want_grad) ws.d_out[k] = 2.0 * r * inv_k;
    }
    return l * inv_k;
  }
  const std::size_t label = d.label(row);
  const double lse = log_sum_exp(ws.out);
  if (want_grad) {
    for (std::size_t k = 0; k < m.output_dim; ++k) ws.d_out[k] = std::exp(ws.out[k] - lse) - (k == label ? 1.0 : 0.0);
  }
  return lse - ws.out[label];
}

// grad += scale * d loss(row) / d params, given a completed forward pass.
inline void backward(const Model& m, std::span<const double> x, Workspace& ws, double scale, ParamVector& grad) {
  auto l1 = m.params.layer(1);
  auto g0 = grad.layer(0);
  auto g1 = grad.layer(1);
  const std::size_t in = m.input_dim, hid = m.hidden_dim, out = m.output_dim;
  std::fill(ws.d_hidden.begin(), ws.d_hidden.end(), 0.0);
  for (std::size_t k = 0; k < out; ++k) {
    const double dk = scale * ws.d_out[k];
    const double* w = l1.data() + k * hid;
    double* gw = g1.data() + k * hid;
    for (std::size_t h = 0; h < hid; ++h) {
      gw[h] += dk * ws.hidden[h];
      ws.d_hidden[h] += w[h] * dk;
    }
    g1[out * hid + k] += dk;
  }
  for (std::size_t h = 0; h < hid; ++h) {
    const double s = ws.hidden[h];
    const double da = ws.d_hidden[h] * s * (1.0 - s);
    double* gw = g0.data() + h * in;
    for (std::size_t i = 0; i < in; ++i) gw[i] += da * x[i];
    g0[hid * in + h] += da;
  }
}

inline void require_rows(const Dataset& data) {
  if (data.size() == 0) throw ShapeError("dataset '" + data.name + "' is empty");
}

}  // namespace detail

// Mean per-sample loss: squared error averaged over output coordinates for
// regression, softmax cross-entropy for classification.
inline double loss(const Model& model, const Dataset& data) {
  model.check_data(data);
  detail::require_rows(data);
  detail::Workspace ws(model);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::forward(model, data.x(i), ws);
    total += detail::sample_loss(model, data, i, ws, false);
  }
  return total / static_cast<double>(data.size());
}

// Gradient of the mean loss over the given rows of data.
inline ParamVector gradient_rows(const Model& model, const Dataset& data, std::span<const std::size_t> rows) {
  model.check_data(data);
  if (rows.empty()) throw ShapeError("gradient: no rows selected");
  detail::Workspace ws(model);
  ParamVector g = ParamVector::zeros_like(model.params);
  const double scale = 1.0 / static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    detail::forward(model, data.x(r), ws);
    detail::sample_loss(model, data, r, ws, true);
    detail::backward(model, data.x(r), ws, scale, g);
  }
  return g;
}

inline ParamVector gradient(const Model& model, const Dataset& data) {
  detail::require_rows(data);
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return gradient_rows(model, data, rows);
}

// Calls fn(row, grad) with the per-sample gradient of every row in order.
template <typename Fn>
void for_each_sample_gradient(const Model& model, const Dataset& data, Fn&& fn) {
  model.check_data(data);
  detail::Workspace ws(model);
  ParamVector g = ParamVector::zeros_like(model.params);
  for (std::size_t r = 0; r < data.size(); ++r) {
    std::fill(g.flat().begin(), g.flat().end(), 0.0);
    detail::forward(model, data.x(r), ws);
    detail::sample_loss(model, data, r, ws, true);
    detail::backward(model, data.x(r), ws, 1.0, g);
    fn(r, static_cast<const ParamVector&>(g));
  }
}

inline Model sgd_step(const Model& model, const Dataset& data, double lr) {
  if (!(lr > 0.0)) throw ConfigError("sgd_step: learning rate must be positive");
  Model next = model;
  next.params.axpy(-lr, gradient(model, data));
  return next;
}

inline Metrics evaluate(const Model& model, const Dataset& data) {
  model.check_data(data);
  detail::require_rows(data);
  detail::Workspace ws(model);
  double total = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    detail::forward(model, data.x(i), ws);
    total += detail::sample_loss(model, data, i, ws, false);
    if (model.arch == Arch::mlp_classifier) {
      auto best = std::max_element(ws.out.begin(), ws.out.end()) - ws.out.begin();
      if (static_cast<std::size_t>(best) == data.label(i)) ++correct;
    }
  }
  Metrics m;
  m.loss = total / static_cast<double>(data.size());
  if (model.arch == Arch::mlp_classifier) m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return m;
}

// Result of minibatch SGD on one client: the final model and, for every step
// taken, the parameter update (theta_after - theta_before) of that step.
struct LocalRun {
  Model model;
  std::vector<ParamVector> step_updates;
};

// Partition of 0..n-1 into consecutive batches of a seeded permutation.
inline std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch, const StreamKey& key) {
  if (batch == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = key.engine();
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch)
    batches.emplace_back(order.begin() + start, order.begin() + std::min(n, start + batch));
  return batches;
}

// `epochs` passes of minibatch SGD; epoch e shuffles with key.with(e).
inline LocalRun local_sgd(const Model& start, const Dataset& data, double lr, std::size_t batch, std::size_t epochs,
                          const StreamKey& key, bool record_steps = false) {
  if (!(lr > 0.0)) throw ConfigError("local_sgd: learning rate must be positive");
  start.check_data(data);
  LocalRun run{start, {}};
  for (std::size_t e = 0; e < epochs; ++e) {
    for (const auto& rows : shuffled_batches(data.size(), batch, key.with(e))) {
      ParamVector step = gradient_rows(run.model, data, rows);
      step *= -lr;
      run.model.params += step;
      if (record_steps) run.step_updates.push_back(std::move(step));
    }
  }
  return run;
}

}  // namespace fdasim
