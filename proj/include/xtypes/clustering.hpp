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

// K-Means (Lloyd + k-means++ seeding) over type vectors.
//
// Points are processed in type-id order regardless of the row order of the
// input matrix, so a permuted matrix yields the same partition. Assignment
// ties go to the lowest cluster id, which keeps identical rows together.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "xtypes/common.hpp"
#include "xtypes/type_repr.hpp"

namespace xtypes {

struct KMeansOptions {
  std::size_t max_iters = 100;
  double tol = 1e-4;
};

struct ClusterModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<double> centroids;                  // k x dim, row-major
  std::map<std::string, std::size_t> assignment;  // type id -> cluster
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after every assignment step
  std::size_t iterations = 0;

  std::span<const double> centroid(std::size_t c) const {
    return {centroids.data() + c * dim, dim};
  }

  // Types of every cluster, each list sorted by type id.
  std::vector<std::vector<std::string>> members() const {
    std::vector<std::vector<std::string>> out(k);
    for (const auto& [t, c] : assignment) out[c].push_back(t);
    return out;
  }

  std::size_t cluster_of(const std::string& type) const {
    auto it = assignment.find(type);
    if (it == assignment.end()) throw LookupError("type not in cluster model: " + type);
    return it->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t c = 0; c < k; ++c) {
      auto r = centroid(c);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return {{"k", k},           {"dim", dim},         {"seed", seed},
            {"inertia", inertia}, {"iterations", iterations}, {"centroids", rows},
            {"assignment", assignment}};
  }

  static ClusterModel from_json(const nlohmann::json& j) {
    ClusterModel m;
    m.k = j.at("k").get<std::size_t>();
    m.dim = j.at("dim").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.inertia = j.at("inertia").get<double>();
    m.iterations = j.value("iterations", std::size_t{0});
    for (const auto& row : j.at("centroids")) {
      const auto r = row.get<std::vector<double>>();
      if (r.size() != m.dim) throw DataError("cluster model: centroid dimension mismatch");
      m.centroids.insert(m.centroids.end(), r.begin(), r.end());
    }
    if (m.centroids.size() != m.k * m.dim) throw DataError("cluster model: wrong centroid count");
    m.assignment = j.at("assignment").get<std::map<std::string, std::size_t>>();
    for (const auto& [t, c] : m.assignment) {
      if (c >= m.k) throw DataError("cluster model: cluster id out of range for " + t);
    }
    return m;
  }
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Nearest centroid; ties to the lowest id. Returns (cluster, distance^2).
inline std::pair<std::size_t, double> nearest(std::span<const double> x,
                                              const std::vector<double>& centroids,
                                              std::size_t k, std::size_t dim) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double d = squared_distance(x, {centroids.data() + c * dim, dim});
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return {best, best_d};
}

inline std::size_t count_distinct_rows(const TypeMatrix& m) {
  std::vector<std::vector<double>> rows;
  rows.reserve(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).begin(), m.row(i).end());
  std::sort(rows.begin(), rows.end());
  return static_cast<std::size_t>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

}  // namespace detail

// Lloyd's algorithm with k-means++ initialization. Stops when the largest
// centroid shift drops below `tol` or after `max_iters` updates. Empty
// clusters are re-seeded with the point farthest from its centroid.
inline ClusterModel kmeans_fit(const TypeMatrix& m, std::size_t k, std::uint64_t seed,
                               const KMeansOptions& opt = {}) {
  const std::size_t n = m.rows();
  const std::size_t dim = m.dim();
  if (k == 0) throw ParameterError("k must be positive");
  if (k > n) {
    throw ParameterError("k = " + std::to_string(k) + " exceeds the number of types (" +
                         std::to_string(n) + ")");
  }
  if (!m.all_finite()) throw ParameterError("type matrix has non-finite entries");
  if (const std::size_t distinct = detail::count_distinct_rows(m); k > distinct) {
    throw ParameterError("k = " + std::to_string(k) + " exceeds the number of distinct type vectors (" +
                         std::to_string(distinct) + ")");
  }

  // Canonical point order: by type id.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return m.type_ids()[a] < m.type_ids()[b]; });
  auto point = [&](std::size_t p) { return m.row(order[p]); };

  ClusterModel model;
  model.k = k;
  model.dim = dim;
  model.seed = seed;
  model.centroids.assign(k * dim, 0.0);
  auto set_centroid = [&](std::size_t c, std::span<const double> x) {
    std::copy(x.begin(), x.end(), model.centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
  };

  // k-means++ seeding.
  Rng rng(seed);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  set_centroid(0, point(first));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      d2[p] = std::min(d2[p], detail::squared_distance(point(p), model.centroid(c - 1)));
      total += d2[p];
    }
    std::size_t pick = n;
    const double r = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (d2[p] <= 0.0) continue;
      acc += d2[p];
      pick = p;
      if (acc > r) break;
    }
    set_centroid(c, point(pick));
  }

  std::vector<std::size_t> assign(n, 0);
  std::vector<double> dist(n, 0.0);

  // Nearest-centroid assignment followed by empty-cluster repair until no
  // cluster is empty. Each repair strictly lowers the objective.
  auto assign_all = [&]() {
    while (true) {
      std::vector<std::size_t> sizes(k, 0);
      for (std::size_t p = 0; p < n; ++p) {
        std::tie(assign[p], dist[p]) = detail::nearest(point(p), model.centroids, k, dim);
        ++sizes[assign[p]];
      }
      const auto empty = std::find(sizes.begin(), sizes.end(), std::size_t{0});
      if (empty == sizes.end()) break;
      std::size_t far = 0;
      for (std::size_t p = 1; p < n; ++p) {
        if (dist[p] > dist[far]) far = p;
      }
      set_centroid(static_cast<std::size_t>(empty - sizes.begin()), point(far));
    }
    double inertia = 0.0;
    for (std::size_t p = 0; p < n; ++p) inertia += dist[p];
    return inertia;
  };

  model.inertia_history.push_back(assign_all());
  std::size_t it = 0;
  for (; it < opt.max_iters; ++it) {
    // Mean update with fixed-order summation.
    std::vector<double> next(k * dim, 0.0);
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t p = 0; p < n; ++p) {
      const auto x = point(p);
      double* c = next.data() + assign[p] * dim;
      for (std::size_t j = 0; j < dim; ++j) c[j] += x[j];
      ++sizes[assign[p]];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < dim; ++j) next[c * dim + j] /= static_cast<double>(sizes[c]);
      shift = std::max(shift, std::sqrt(detail::squared_distance(
                                  {next.data() + c * dim, dim}, model.centroid(c))));
    }
    model.centroids = std::move(next);
    model.inertia_history.push_back(assign_all());
    if (shift < opt.tol) {
      ++it;
      break;
    }
  }
  model.iterations = it;
  model.inertia = model.inertia_history.back();
  for (std::size_t p = 0; p < n; ++p) model.assignment[m.type_ids()[order[p]]] = assign[p];
  return model;
}

// Nearest centroid by squared Euclidean distance, ties to the lowest id.
inline std::size_t assign_cluster(const ClusterModel& cm, std::span<const double> v) {
  if (v.size() != cm.dim) {
    throw ParameterError("vector dimension " + std::to_string(v.size()) +
                         " does not match centroid dimension " + std::to_string(cm.dim));
  }
  return detail::nearest(v, cm.centroids, cm.k, cm.dim).first;
}

// Recomputes sum ||z_t - centroid(assign(t))||^2 from scratch.
inline double recompute_inertia(const ClusterModel& cm, const TypeMatrix& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    s += detail::squared_distance(m.row(i), cm.centroid(cm.cluster_of(m.type_ids()[i])));
  }
  return s;
}

struct SweepEntry {
  std::size_t k;
  ClusterModel model;
};

// One model per k (same seed), sorted by k.
inline std::vector<SweepEntry> sweep_k(const TypeMatrix& m, std::vector<std::size_t> ks,
                                       std::uint64_t seed, const KMeansOptions& opt = {}) {
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  std::vector<SweepEntry> out;
  for (const std::size_t k : ks) out.push_back({k, kmeans_fit(m, k, seed, opt)});
  return out;
}

}  // namespace xtypes
