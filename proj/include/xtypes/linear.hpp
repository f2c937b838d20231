/*
 * Copyright 2026 The xtypes Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// L2-regularized binary logistic regression over sparse features, trained
// by deterministic mini-batch gradient descent. Shared by the cluster
// matcher, the per-type rankers, the category classifier and the score
// fusion.
//
// Objective:  (1/N) sum_i [softplus(z_i) - y_i z_i] + (l2/2) ||w||^2,
//             z_i = w . x_i + b  (the bias is not regularized).
// Epoch e uses step lr / sqrt(e). An epoch that would increase the
// objective is rolled back and the step is halved for the remaining epochs,
// so the recorded objective never increases.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "json.hpp"
#include "xtypes/common.hpp"
#include "xtypes/text.hpp"

namespace xtypes {

struct LinearHyperParams {
  std::size_t epochs = 30;
  double lr = 0.1;
  double l2 = 1e-4;
  std::size_t batch_size = 1;
  std::uint64_t seed = 17;
  // Projected updates keeping every feature weight >= 0.
  bool nonnegative = false;

  nlohmann::json to_json() const {
    return {{"epochs", epochs}, {"lr", lr},     {"l2", l2},
            {"batch_size", batch_size}, {"seed", seed}, {"nonnegative", nonnegative}};
  }
  static LinearHyperParams from_json(const nlohmann::json& j) {
    LinearHyperParams h;
    h.epochs = j.value("epochs", h.epochs);
    h.lr = j.value("lr", h.lr);
    h.l2 = j.value("l2", h.l2);
    h.batch_size = j.value("batch_size", h.batch_size);
    h.seed = j.value("seed", h.seed);
    h.nonnegative = j.value("nonnegative", h.nonnegative);
    return h;
  }
};

class BinaryLinearModel {
 public:
  BinaryLinearModel() = default;
  explicit BinaryLinearModel(std::size_t dim) : weights_(dim, 0.0) {}

  // Constant model: every input scores sigmoid(bias).
  static BinaryLinearModel constant(std::size_t dim, double bias) {
    BinaryLinearModel m(dim);
    m.bias_ = bias;
    return m;
  }

  double margin(const SparseVector& x) const {
    double z = bias_;
    for (const auto& [i, v] : x) {
      if (i < weights_.size()) z += v * weights_[i];
    }
    return z;
  }
  double score(const SparseVector& x) const { return sigmoid(margin(x)); }

  std::size_t dim() const { return weights_.size(); }
  double bias() const { return bias_; }
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& mutable_weights() { return weights_; }
  void set_bias(double b) { bias_ = b; }

  bool all_finite() const {
    return std::isfinite(bias_) &&
           std::all_of(weights_.begin(), weights_.end(), [](double w) { return std::isfinite(w); });
  }

  // Sparse on disk: only nonzero weights are stored.
  nlohmann::json to_json() const {
    std::vector<std::size_t> idx;
    std::vector<double> val;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (weights_[i] != 0.0) {
        idx.push_back(i);
        val.push_back(weights_[i]);
      }
    }
    return {{"dim", weights_.size()}, {"bias", bias_}, {"idx", idx}, {"val", val}};
  }

  static BinaryLinearModel from_json(const nlohmann::json& j) {
    BinaryLinearModel m(j.at("dim").get<std::size_t>());
    m.bias_ = j.at("bias").get<double>();
    const auto idx = j.at("idx").get<std::vector<std::size_t>>();
    const auto val = j.at("val").get<std::vector<double>>();
    if (idx.size() != val.size()) throw DataError("linear model: idx/val size mismatch");
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= m.weights_.size()) throw DataError("linear model: weight index out of range");
      m.weights_[idx[i]] = val[i];
    }
    return m;
  }

  friend bool operator==(const BinaryLinearModel&, const BinaryLinearModel&) = default;

 private:
  std::vector<double> weights_;
  double bias_ = 0.0;
};

struct TrainTrace {
  std::vector<double> objective;  // [0] = initial, then one value per epoch
  std::size_t rollbacks = 0;
};

// Regularized mean log-loss of `model` on (xs, ys).
inline double logistic_objective(const BinaryLinearModel& model,
                                 std::span<const SparseVector* const> xs,
                                 std::span<const std::uint8_t> ys, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double z = model.margin(*xs[i]);
    loss += softplus(z) - (ys[i] != 0 ? z : 0.0);
  }
  if (!xs.empty()) loss /= static_cast<double>(xs.size());
  double sq = 0.0;
  for (const double w : model.weights()) sq += w * w;
  return loss + 0.5 * l2 * sq;
}

inline BinaryLinearModel train_logistic(std::span<const SparseVector* const> xs,
                                        std::span<const std::uint8_t> ys, std::size_t dim,
                                        const LinearHyperParams& hp, TrainTrace* trace = nullptr) {
  if (xs.size() != ys.size()) throw ParameterError("features/labels size mismatch");
  if (hp.batch_size == 0) throw ParameterError("batch_size must be positive");
  const std::size_t n = xs.size();
  BinaryLinearModel model(dim);
  TrainTrace local;
  double current = logistic_objective(model, xs, ys, hp.l2);
  local.objective.push_back(current);
  if (n == 0) {
    if (trace != nullptr) *trace = local;
    return model;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(hp.seed);
  double damping = 1.0;
  std::vector<double> residual;

  // Weights are kept as scale * v so the L2 decay is O(1) per step.
  std::vector<double> v(dim, 0.0);
  double scale = 1.0;
  double bias = 0.0;
  auto margin = [&](const SparseVector& x) {
    double z = 0.0;
    for (const auto& [j, val] : x) {
      if (j < dim) z += val * v[j];
    }
    return scale * z + bias;
  };
  auto materialize = [&] {
    auto& w = model.mutable_weights();
    for (std::size_t j = 0; j < dim; ++j) w[j] = scale * v[j];
    model.set_bias(bias);
  };

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    const double eta = damping * hp.lr / std::sqrt(static_cast<double>(epoch));
    const std::vector<double> v_saved = v;
    const double scale_saved = scale;
    const double bias_saved = bias;
    rng.shuffle(order);

    for (std::size_t start = 0; start < n; start += hp.batch_size) {
      const std::size_t end = std::min(n, start + hp.batch_size);
      const double step = eta / static_cast<double>(end - start);
      // Residuals use the weights from before this step.
      residual.clear();
      double bias_grad = 0.0;
      for (std::size_t p = start; p < end; ++p) {
        const std::size_t i = order[p];
        const double r = sigmoid(margin(*xs[i])) - (ys[i] != 0 ? 1.0 : 0.0);
        residual.push_back(r);
        bias_grad += r;
      }
      if (hp.l2 > 0.0) scale *= 1.0 - eta * hp.l2;
      for (std::size_t p = start; p < end; ++p) {
        const double r = residual[p - start];
        for (const auto& [j, val] : *xs[order[p]]) {
          if (j >= dim) continue;
          v[j] -= step * r * val / scale;
          if (hp.nonnegative && v[j] < 0.0) v[j] = 0.0;
        }
      }
      bias -= step * bias_grad;
      if (scale < 1e-6) {
        for (double& x : v) x *= scale;
        scale = 1.0;
      }
    }

    materialize();
    const double next = logistic_objective(model, xs, ys, hp.l2);
    if (!(next <= current)) {
      v = v_saved;
      scale = scale_saved;
      bias = bias_saved;
      materialize();
      damping *= 0.5;
      ++local.rollbacks;
    } else {
      current = next;
    }
    local.objective.push_back(current);
  }
  if (trace != nullptr) *trace = std::move(local);
  return model;
}

// Convenience overload for owned feature vectors.
inline BinaryLinearModel train_logistic(const std::vector<SparseVector>& xs,
                                        const std::vector<std::uint8_t>& ys, std::size_t dim,
                                        const LinearHyperParams& hp, TrainTrace* trace = nullptr) {
  std::vector<const SparseVector*> ptrs;
  ptrs.reserve(xs.size());
  for (const auto& x : xs) ptrs.push_back(&x);
  return train_logistic(std::span<const SparseVector* const>(ptrs), std::span<const std::uint8_t>(ys),
                        dim, hp, trace);
}

}  // namespace xtypes
