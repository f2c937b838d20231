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

// Knowledge-graph type system, entity/type index and the TSV tables they
// are loaded from.
//
// Directory layout (tab separated, '#' lines are comments):
//   type_hierarchy.tsv       child  parent
//   type_labels.tsv          type   label
//   type_descriptions.tsv    type   description
//   entity_types.tsv         entity type
//   entity_descriptions.tsv  entity description

#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xtypes/common.hpp"

namespace xtypes {

inline constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

// Type vocabulary with a multiple-inheritance subclass hierarchy.
// Mutable while loading; call finalize() before any hierarchy query.
class TypeSystem {
 public:
  // Returns the index of `id`, adding it if new.
  std::size_t add_type(std::string_view id) {
    auto it = index_.find(std::string(id));
    if (it != index_.end()) return it->second;
    const std::size_t idx = ids_.size();
    ids_.emplace_back(id);
    index_.emplace(ids_.back(), idx);
    parents_.emplace_back();
    children_.emplace_back();
    labels_.emplace_back();
    descriptions_.emplace_back();
    finalized_ = false;
    return idx;
  }

  // Returns false when the edge already existed.
  bool add_parent(std::string_view child, std::string_view parent) {
    const std::size_t c = add_type(child);
    const std::size_t p = add_type(parent);
    auto& ps = parents_[c];
    if (std::find(ps.begin(), ps.end(), p) != ps.end()) return false;
    ps.push_back(p);
    children_[p].push_back(c);
    finalized_ = false;
    return true;
  }

  void set_label(std::string_view id, std::string label) {
    labels_[add_type(id)] = std::move(label);
  }
  void set_description(std::string_view id, std::string description) {
    descriptions_[add_type(id)] = std::move(description);
  }

  // Checks acyclicity and computes depths. Throws DataError naming one cycle.
  void finalize() {
    const std::size_t n = ids_.size();
    // 0 = unvisited, 1 = on stack, 2 = done
    std::vector<int> color(n, 0);
    std::vector<std::size_t> order;
    order.reserve(n);
    for (std::size_t start = 0; start < n; ++start) {
      if (color[start] != 0) continue;
      // Iterative DFS along parent edges.
      std::vector<std::pair<std::size_t, std::size_t>> stack{{start, 0}};
      color[start] = 1;
      while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < parents_[node].size()) {
          const std::size_t p = parents_[node][next++];
          if (color[p] == 1) {
            std::string cycle;
            auto it = std::find_if(stack.begin(), stack.end(),
                                   [p](const auto& e) { return e.first == p; });
            for (; it != stack.end(); ++it) cycle += ids_[it->first] + " -> ";
            cycle += ids_[p];
            throw DataError("cyclic type hierarchy: " + cycle);
          }
          if (color[p] == 0) {
            color[p] = 1;
            stack.emplace_back(p, 0);
          }
        } else {
          color[node] = 2;
          order.push_back(node);
          stack.pop_back();
        }
      }
    }
    // `order` lists parents before children.
    depth_.assign(n, 0);
    for (const std::size_t t : order) {
      if (parents_[t].empty()) continue;
      std::size_t best = kUnreachable;
      for (const std::size_t p : parents_[t]) best = std::min(best, depth_[p] + 1);
      depth_[t] = best;
    }
    finalized_ = true;
  }

  bool finalized() const { return finalized_; }
  std::size_t size() const { return ids_.size(); }
  bool contains(std::string_view id) const { return index_.count(std::string(id)) != 0; }

  std::size_t index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) throw LookupError("unknown type: " + std::string(id));
    return it->second;
  }

  const std::string& id(std::size_t idx) const { return ids_.at(idx); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<std::size_t>& parents(std::size_t idx) const { return parents_.at(idx); }
  const std::vector<std::size_t>& children(std::size_t idx) const { return children_.at(idx); }
  const std::string& label(std::size_t idx) const { return labels_.at(idx); }
  const std::string& description(std::size_t idx) const { return descriptions_.at(idx); }

  std::size_t depth(std::size_t idx) const {
    require_finalized();
    return depth_.at(idx);
  }

  // Unweighted shortest-path lengths over undirected subclass edges from
  // `source` to every type; kUnreachable for other components.
  std::vector<std::size_t> distances_from(std::size_t source) const {
    std::vector<std::size_t> dist(ids_.size(), kUnreachable);
    std::deque<std::size_t> queue{source};
    dist.at(source) = 0;
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      auto relax = [&](std::size_t v) {
        if (dist[v] == kUnreachable) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
      };
      for (const std::size_t v : parents_[u]) relax(v);
      for (const std::size_t v : children_[u]) relax(v);
    }
    return dist;
  }

  // Content equality independent of insertion order.
  friend bool operator==(const TypeSystem& a, const TypeSystem& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!b.contains(a.ids_[i])) return false;
      const std::size_t j = b.index_of(a.ids_[i]);
      if (a.labels_[i] != b.labels_[j] || a.descriptions_[i] != b.descriptions_[j]) return false;
      std::set<std::string> pa, pb;
      for (auto p : a.parents_[i]) pa.insert(a.ids_[p]);
      for (auto p : b.parents_[j]) pb.insert(b.ids_[p]);
      if (pa != pb) return false;
    }
    return true;
  }

 private:
  void require_finalized() const {
    if (!finalized_) throw Error("TypeSystem queried before finalize()");
  }

  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::string> labels_;
  std::vector<std::string> descriptions_;
  std::vector<std::size_t> depth_;
  bool finalized_ = false;
};

// Shortest undirected path length, or nullopt when t1 and t2 lie in
// different components.
inline std::optional<std::size_t> type_distance(const TypeSystem& ts, std::string_view t1,
                                                std::string_view t2) {
  const std::size_t a = ts.index_of(t1);
  const std::size_t b = ts.index_of(t2);
  if (a == b) return 0;
  const std::size_t d = ts.distances_from(a)[b];
  if (d == kUnreachable) return std::nullopt;
  return d;
}

// Minimum number of subclass edges from t up to any root.
inline std::size_t type_depth(const TypeSystem& ts, std::string_view t) {
  return ts.depth(ts.index_of(t));
}

// Entity -> directly asserted types, and the inverse map.
class EntityTypeIndex {
 public:
  void add(const std::string& entity, const std::string& type) {
    entity_types_[entity].insert(type);
    type_entities_[type].insert(entity);
  }

  void set_description(const std::string& entity, std::string text) {
    entity_descriptions_[entity] = std::move(text);
  }

  const std::map<std::string, std::set<std::string>>& entity_types() const { return entity_types_; }
  const std::map<std::string, std::set<std::string>>& type_entities() const { return type_entities_; }
  const std::map<std::string, std::string>& entity_descriptions() const {
    return entity_descriptions_;
  }

  const std::set<std::string>& entities_of(const std::string& type) const {
    static const std::set<std::string> kEmpty;
    auto it = type_entities_.find(type);
    return it == type_entities_.end() ? kEmpty : it->second;
  }

  std::string_view description_of(const std::string& entity) const {
    auto it = entity_descriptions_.find(entity);
    return it == entity_descriptions_.end() ? std::string_view{} : std::string_view(it->second);
  }

  friend bool operator==(const EntityTypeIndex&, const EntityTypeIndex&) = default;

 private:
  std::map<std::string, std::set<std::string>> entity_types_;
  std::map<std::string, std::set<std::string>> type_entities_;
  std::map<std::string, std::string> entity_descriptions_;
};

struct KnowledgeGraph {
  TypeSystem types;
  EntityTypeIndex index;
};

namespace detail {

struct TsvRow {
  std::size_t line;
  std::string key;
  std::string value;
};

inline std::vector<TsvRow> read_two_column_tsv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError("missing KG table: " + path.string());
  }
  const std::string content = read_file(path);
  std::vector<TsvRow> rows;
  std::size_t line_no = 0;
  for (std::string_view line : split(content, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2 || trim(fields[0]).empty() || trim(fields[1]).empty()) {
      throw DataError(path.filename().string() + ":" + std::to_string(line_no) +
                      ": malformed row (expected two non-empty tab-separated fields)");
    }
    rows.push_back({line_no, std::string(trim(fields[0])), std::string(trim(fields[1]))});
  }
  return rows;
}

}  // namespace detail

inline constexpr const char* kHierarchyFile = "type_hierarchy.tsv";
inline constexpr const char* kTypeLabelsFile = "type_labels.tsv";
inline constexpr const char* kTypeDescriptionsFile = "type_descriptions.tsv";
inline constexpr const char* kEntityTypesFile = "entity_types.tsv";
inline constexpr const char* kEntityDescriptionsFile = "entity_descriptions.tsv";

// Loads the five KG tables from `dir`. All five files must exist (they may
// be empty). Types referenced only by entity rows are added with a warning.
inline KnowledgeGraph load_kg_tables(const std::filesystem::path& dir,
                                     Diagnostics* diag = nullptr) {
  // Read everything first so a missing file is reported before any parsing.
  const auto hierarchy = detail::read_two_column_tsv(dir / kHierarchyFile);
  const auto labels = detail::read_two_column_tsv(dir / kTypeLabelsFile);
  const auto descriptions = detail::read_two_column_tsv(dir / kTypeDescriptionsFile);
  const auto entity_types = detail::read_two_column_tsv(dir / kEntityTypesFile);
  const auto entity_descriptions = detail::read_two_column_tsv(dir / kEntityDescriptionsFile);

  KnowledgeGraph kg;
  for (const auto& row : hierarchy) {
    if (!kg.types.add_parent(row.key, row.value)) {
      throw DataError(std::string(kHierarchyFile) + ":" + std::to_string(row.line) +
                      ": duplicate hierarchy row " + row.key + " -> " + row.value);
    }
  }
  auto set_once = [&](const std::vector<detail::TsvRow>& rows, const char* file, auto setter,
                      auto getter) {
    for (const auto& row : rows) {
      const std::size_t idx = kg.types.add_type(row.key);
      if (!getter(idx).empty()) {
        warn(diag, std::string(file) + ":" + std::to_string(row.line) + ": duplicate key " +
                       row.key + " ignored");
        continue;
      }
      setter(row.key, row.value);
    }
  };
  set_once(
      labels, kTypeLabelsFile, [&](auto& k, auto& v) { kg.types.set_label(k, v); },
      [&](std::size_t i) -> const std::string& { return kg.types.label(i); });
  set_once(
      descriptions, kTypeDescriptionsFile,
      [&](auto& k, auto& v) { kg.types.set_description(k, collapse_whitespace(v)); },
      [&](std::size_t i) -> const std::string& { return kg.types.description(i); });

  for (const auto& row : entity_types) {
    if (!kg.types.contains(row.value)) {
      kg.types.add_type(row.value);
      warn(diag, std::string(kEntityTypesFile) + ":" + std::to_string(row.line) +
                     ": type " + row.value + " not in hierarchy; added with empty description");
    }
    kg.index.add(row.key, row.value);
  }
  for (const auto& row : entity_descriptions) {
    if (!kg.index.description_of(row.key).empty()) {
      warn(diag, std::string(kEntityDescriptionsFile) + ":" + std::to_string(row.line) +
                     ": duplicate entity " + row.key + " ignored");
      continue;
    }
    kg.index.set_description(row.key, collapse_whitespace(row.value));
  }
  kg.types.finalize();
  return kg;
}

// Writes the five tables in sorted order (used by the converter and the
// fixture generator).
inline void write_kg_tables(const std::filesystem::path& dir, const TypeSystem& ts,
                            const EntityTypeIndex& index) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> sorted = ts.ids();
  std::sort(sorted.begin(), sorted.end());

  std::string hierarchy, labels, descriptions, entity_types, entity_descriptions;
  for (const auto& t : sorted) {
    const std::size_t i = ts.index_of(t);
    std::vector<std::string> parents;
    for (auto p : ts.parents(i)) parents.push_back(ts.id(p));
    std::sort(parents.begin(), parents.end());
    for (const auto& p : parents) hierarchy += t + "\t" + p + "\n";
    if (!ts.label(i).empty()) labels += t + "\t" + ts.label(i) + "\n";
    if (!ts.description(i).empty()) descriptions += t + "\t" + ts.description(i) + "\n";
  }
  for (const auto& [entity, types] : index.entity_types()) {
    for (const auto& t : types) entity_types += entity + "\t" + t + "\n";
  }
  for (const auto& [entity, text] : index.entity_descriptions()) {
    if (!text.empty()) entity_descriptions += entity + "\t" + text + "\n";
  }
  write_file(dir / kHierarchyFile, hierarchy);
  write_file(dir / kTypeLabelsFile, labels);
  write_file(dir / kTypeDescriptionsFile, descriptions);
  write_file(dir / kEntityTypesFile, entity_types);
  write_file(dir / kEntityDescriptionsFile, entity_descriptions);
}

}  // namespace xtypes
