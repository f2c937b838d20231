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

// Shared helpers for the unit suites: scratch directories and small random
// generators. Generators use their own std::mt19937_64 so oracles never
// share randomness with the code under test.

#pragma once

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "xtypes/common.hpp"
#include "xtypes/kg_store.hpp"

namespace xtypes::testing {

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  ScratchDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "xtypes_";
    if (info != nullptr) name += std::string(info->test_suite_name()) + "_" + info->name();
    for (auto& c : name) {
      if (c == '/') c = '_';
    }
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string type_name(std::size_t i) { return "t" + std::to_string(i); }
inline std::string entity_name(std::size_t i) { return "e" + std::to_string(i); }

// Random DAG as an edge list child -> parent; parents always have a smaller
// index, so the graph is acyclic. Some nodes stay roots, some components
// stay disconnected.
inline std::vector<std::pair<std::size_t, std::size_t>> random_dag(std::mt19937_64& gen, std::size_t n,
                                                                    double edge_prob) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t c = 1; c < n; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      if (u(gen) < edge_prob) edges.emplace_back(c, p);
    }
  }
  return edges;
}

inline TypeSystem type_system_from(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  TypeSystem ts;
  for (std::size_t i = 0; i < n; ++i) ts.add_type(type_name(i));
  for (const auto& [c, p] : edges) ts.add_parent(type_name(c), type_name(p));
  ts.finalize();
  return ts;
}

// Random entity typing: each entity gets 1..3 random types.
inline std::vector<std::pair<std::string, std::string>> random_assertions(std::mt19937_64& gen,
                                                                          std::size_t types,
                                                                          std::size_t entities) {
  std::uniform_int_distribution<std::size_t> pick_type(0, types - 1);
  std::uniform_int_distribution<int> how_many(1, 3);
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t e = 0; e < entities; ++e) {
    const int m = how_many(gen);
    for (int j = 0; j < m; ++j) out.emplace_back(entity_name(e), type_name(pick_type(gen)));
  }
  return out;
}

}  // namespace xtypes::testing
