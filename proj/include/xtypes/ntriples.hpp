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

// N-Triples dump -> the five KG tables.
//
// Only four predicates matter (type assertion, subclass, label,
// description); everything else is skipped. Labels and descriptions attach
// to types when the subject is a type, descriptions to entities otherwise.
// Literals with a language tag outside `languages` are dropped.

#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xtypes/common.hpp"
#include "xtypes/kg_store.hpp"

namespace xtypes {

struct NTriplesOptions {
  std::string type_predicate = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
  std::string subclass_predicate = "http://www.w3.org/2000/01/rdf-schema#subClassOf";
  std::string label_predicate = "http://www.w3.org/2000/01/rdf-schema#label";
  std::vector<std::string> description_predicates = {
      "http://dbpedia.org/ontology/abstract", "http://www.w3.org/2000/01/rdf-schema#comment"};
  // IRI prefix -> compact prefix, longest match wins.
  std::map<std::string, std::string> prefixes = {
      {"http://dbpedia.org/ontology/", "dbo:"},
      {"http://dbpedia.org/resource/", "dbr:"},
      {"http://www.wikidata.org/entity/", "wd:"},
      {"http://www.w3.org/2002/07/owl#", "owl:"},
  };
  std::set<std::string> languages = {"en"};  // untagged literals always pass
};

struct NTriplesStats {
  std::size_t lines = 0;
  std::size_t triples = 0;
  std::size_t malformed = 0;
  std::size_t used = 0;
};

namespace detail {

struct NtTerm {
  enum Kind { kIri, kBlank, kLiteral } kind = kIri;
  std::string value;
  std::string lang;
};

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// Reads one escaped sequence body up to `close`; nullopt on bad escapes or
// a missing terminator.
inline std::optional<std::string> read_escaped(std::string_view s, std::size_t& pos, char close) {
  std::string out;
  while (pos < s.size()) {
    const char c = s[pos++];
    if (c == close) return out;
    if (c != '\\') {
      out += c;
      continue;
    }
    if (pos >= s.size()) return std::nullopt;
    const char e = s[pos++];
    switch (e) {
      case 't': out += '\t'; break;
      case 'b': out += '\b'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case 'f': out += '\f'; break;
      case '"': out += '"'; break;
      case '\'': out += '\''; break;
      case '\\': out += '\\'; break;
      case 'u':
      case 'U': {
        const std::size_t n = e == 'u' ? 4 : 8;
        if (pos + n > s.size()) return std::nullopt;
        std::uint32_t cp = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const char h = s[pos + i];
          cp <<= 4;
          if (h >= '0' && h <= '9') cp |= static_cast<std::uint32_t>(h - '0');
          else if (h >= 'a' && h <= 'f') cp |= static_cast<std::uint32_t>(h - 'a' + 10);
          else if (h >= 'A' && h <= 'F') cp |= static_cast<std::uint32_t>(h - 'A' + 10);
          else return std::nullopt;
        }
        pos += n;
        append_utf8(out, cp);
        break;
      }
      default: return std::nullopt;
    }
  }
  return std::nullopt;
}

inline void skip_ws(std::string_view s, std::size_t& pos) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
}

inline std::optional<NtTerm> read_term(std::string_view s, std::size_t& pos) {
  skip_ws(s, pos);
  if (pos >= s.size()) return std::nullopt;
  NtTerm t;
  if (s[pos] == '<') {
    ++pos;
    auto v = read_escaped(s, pos, '>');
    if (!v) return std::nullopt;
    t.value = std::move(*v);
    return t;
  }
  if (s.substr(pos, 2) == "_:") {
    const std::size_t start = pos;
    while (pos < s.size() && s[pos] != ' ' && s[pos] != '\t') ++pos;
    t.kind = NtTerm::kBlank;
    t.value = std::string(s.substr(start, pos - start));
    return t;
  }
  if (s[pos] == '"') {
    ++pos;
    auto v = read_escaped(s, pos, '"');
    if (!v) return std::nullopt;
    t.kind = NtTerm::kLiteral;
    t.value = std::move(*v);
    if (pos < s.size() && s[pos] == '@') {
      const std::size_t start = ++pos;
      while (pos < s.size() && s[pos] != ' ' && s[pos] != '\t' && s[pos] != '.') ++pos;
      t.lang = std::string(s.substr(start, pos - start));
      for (auto& ch : t.lang) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (s.substr(pos, 2) == "^^") {
      pos += 2;
      if (pos >= s.size() || s[pos] != '<') return std::nullopt;
      ++pos;
      if (!read_escaped(s, pos, '>')) return std::nullopt;  // datatype ignored
    }
    return t;
  }
  return std::nullopt;
}

// Tabs and newlines cannot live in a TSV cell.
inline std::string tsv_cell(std::string_view s) { return collapse_whitespace(s); }

}  // namespace detail

inline std::string compact_iri(const std::string& iri, const NTriplesOptions& opt) {
  const std::pair<const std::string, std::string>* best = nullptr;
  for (const auto& p : opt.prefixes) {
    if (iri.compare(0, p.first.size(), p.first) == 0 && (best == nullptr || p.first.size() > best->first.size())) {
      best = &p;
    }
  }
  return best == nullptr ? iri : best->second + iri.substr(best->first.size());
}

// Parses N-Triples text and writes the tables into `out_dir`. Malformed
// lines are skipped with a warning naming the line. Duplicate labels and
// descriptions keep the first occurrence.
inline NTriplesStats convert_ntriples(std::istream& in, const std::filesystem::path& out_dir,
                                      const NTriplesOptions& opt = {}, Diagnostics* diag = nullptr) {
  NTriplesStats stats;
  std::set<std::pair<std::string, std::string>> hierarchy, entity_types;
  std::set<std::string> types;
  std::map<std::string, std::string> labels, descriptions;  // subject -> first value
  const std::set<std::string> desc_preds(opt.description_predicates.begin(), opt.description_predicates.end());

  std::string line;
  while (std::getline(in, line)) {
    ++stats.lines;
    std::string_view s(line);
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    const auto body = trim(s);
    if (body.empty() || body.front() == '#') continue;
    std::size_t pos = 0;
    auto subj = detail::read_term(body, pos);
    auto pred = detail::read_term(body, pos);
    auto obj = detail::read_term(body, pos);
    detail::skip_ws(body, pos);
    if (!subj || !pred || !obj || subj->kind == detail::NtTerm::kLiteral ||
        pred->kind != detail::NtTerm::kIri || pos >= body.size() || body[pos] != '.') {
      ++stats.malformed;
      warn(diag, "line " + std::to_string(stats.lines) + ": malformed triple skipped");
      continue;
    }
    ++stats.triples;
    const bool obj_iri = obj->kind != detail::NtTerm::kLiteral;
    const std::string& p = pred->value;
    if (p == opt.type_predicate && obj_iri) {
      const auto t = compact_iri(obj->value, opt);
      entity_types.emplace(compact_iri(subj->value, opt), t);
      types.insert(t);
    } else if (p == opt.subclass_predicate && obj_iri) {
      const auto c = compact_iri(subj->value, opt), par = compact_iri(obj->value, opt);
      if (c == par) continue;  // reflexive subclass axioms carry nothing
      hierarchy.emplace(c, par);
      types.insert(c);
      types.insert(par);
    } else if (!obj_iri && (p == opt.label_predicate || desc_preds.count(p))) {
      if (!obj->lang.empty() && !opt.languages.count(obj->lang)) continue;
      auto& table = p == opt.label_predicate ? labels : descriptions;
      table.emplace(compact_iri(subj->value, opt), detail::tsv_cell(obj->value));
    } else {
      continue;
    }
    ++stats.used;
  }

  std::string h, tl, td, et, ed;
  for (const auto& [c, p] : hierarchy) h += c + "\t" + p + "\n";
  for (const auto& [subj, v] : labels) {
    if (types.count(subj) && !v.empty()) tl += subj + "\t" + v + "\n";
  }
  for (const auto& [subj, v] : descriptions) {
    if (v.empty()) continue;
    (types.count(subj) ? td : ed) += subj + "\t" + v + "\n";
  }
  for (const auto& [e, t] : entity_types) et += e + "\t" + t + "\n";
  write_file(out_dir / kHierarchyFile, h);
  write_file(out_dir / kTypeLabelsFile, tl);
  write_file(out_dir / kTypeDescriptionsFile, td);
  write_file(out_dir / kEntityTypesFile, et);
  write_file(out_dir / kEntityDescriptionsFile, ed);
  return stats;
}

inline NTriplesStats convert_ntriples_files(const std::vector<std::filesystem::path>& inputs,
                                            const std::filesystem::path& out_dir,
                                            const NTriplesOptions& opt = {}, Diagnostics* diag = nullptr) {
  // Concatenate so duplicates across files resolve like within one file.
  std::string all;
  for (const auto& p : inputs) {
    all += read_file(p);
    if (!all.empty() && all.back() != '\n') all += '\n';
  }
  std::istringstream in(all);
  return convert_ntriples(in, out_dir, opt, diag);
}

}  // namespace xtypes
