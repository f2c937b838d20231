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

// Type representations z_t for the type-clustering stage.
//
// Four kinds are supported:
//   question_tfidf         TF-IDF over one pseudo-document per type made of
//                          all training questions labelled with it
//   jaccard                row of entity-set Jaccard similarities to every
//                          type of the label space
//   loaded_embedding       externally trained graph embeddings (file)
//   description_embedding encoder output over assembled description
//                          documents (file, produced by the sidecar)
//
// Embedding file format:
//   #dims <d> kind <kind>
//   <id>\t<f1>\t...\t<fd>
// Further '#' lines are comments. Persisted matrices add a
// "#vocab-order" block listing the row order.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xtypes/common.hpp"
#include "xtypes/dataset.hpp"
#include "xtypes/kg_store.hpp"
#include "xtypes/text.hpp"

namespace xtypes {

enum class ReprKind { kQuestionTfidf, kJaccard, kLoadedEmbedding, kDescriptionEmbedding };

inline std::string_view to_string(ReprKind k) {
  switch (k) {
    case ReprKind::kQuestionTfidf: return "question_tfidf";
    case ReprKind::kJaccard: return "jaccard";
    case ReprKind::kLoadedEmbedding: return "loaded_embedding";
    case ReprKind::kDescriptionEmbedding: return "description_embedding";
  }
  return "jaccard";
}

inline std::optional<ReprKind> parse_repr_kind(std::string_view s) {
  for (auto k : {ReprKind::kQuestionTfidf, ReprKind::kJaccard, ReprKind::kLoadedEmbedding,
                 ReprKind::kDescriptionEmbedding}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

// |T'| x d row-major matrix of type vectors.
class TypeMatrix {
 public:
  TypeMatrix() = default;
  TypeMatrix(std::vector<std::string> type_ids, std::size_t dim, ReprKind kind)
      : type_ids_(std::move(type_ids)),
        dim_(dim),
        kind_(kind),
        values_(type_ids_.size() * dim, 0.0) {}

  std::size_t rows() const { return type_ids_.size(); }
  std::size_t dim() const { return dim_; }
  ReprKind kind() const { return kind_; }
  const std::vector<std::string>& type_ids() const { return type_ids_; }

  std::span<double> row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }

  double& at(std::size_t i, std::size_t j) { return values_[i * dim_ + j]; }
  double at(std::size_t i, std::size_t j) const { return values_[i * dim_ + j]; }

  const std::vector<double>& values() const { return values_; }

  // Row index of a type id, or nullopt.
  std::optional<std::size_t> find(std::string_view id) const {
    for (std::size_t i = 0; i < type_ids_.size(); ++i) {
      if (type_ids_[i] == id) return i;
    }
    return std::nullopt;
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const TypeMatrix&, const TypeMatrix&) = default;

 private:
  std::vector<std::string> type_ids_;
  std::size_t dim_ = 0;
  ReprKind kind_ = ReprKind::kJaccard;
  std::vector<double> values_;
};

// Scales every nonzero row to unit L2 norm; zero rows are left as is.
inline TypeMatrix normalize_repr(TypeMatrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    double s = 0.0;
    for (double v : r) s += v * v;
    if (s > 0.0) {
      const double n = std::sqrt(s);
      for (double& v : r) v /= n;
    }
  }
  return m;
}

struct QuestionTfidfRepr {
  TypeMatrix matrix;
  VocabularyIndex vocabulary;
};

// One pseudo-document per type: the concatenated tokens of every training
// question whose gold list contains the type.
inline QuestionTfidfRepr build_question_tfidf_repr(const QuestionDataset& train) {
  const auto vocab_types = train.type_vocabulary_list();
  if (vocab_types.empty()) {
    throw ParameterError("question_tfidf representation needs at least one resource question");
  }
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < vocab_types.size(); ++i) row_of.emplace(vocab_types[i], i);

  std::vector<std::vector<std::string>> docs(vocab_types.size());
  for (const auto& q : train.questions()) {
    if (q.gold_types.empty()) continue;
    const auto toks = tokenize(q.text);
    for (const auto& t : q.gold_types) {
      auto& d = docs[row_of.at(t)];
      d.insert(d.end(), toks.begin(), toks.end());
    }
  }
  auto vocab = VocabularyIndex::build(docs);
  TypeMatrix m(vocab_types, vocab.size(), ReprKind::kQuestionTfidf);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (const auto& [j, v] : vocab.tfidf(docs[i])) m.at(i, j) = v;
  }
  return {std::move(m), std::move(vocab)};
}

// Row t = [J(t, t_1), ..., J(t, t_n)] over `types` in the given order, with
// J = |E_t & E_t'| / |E_t | E_t'| on directly asserted entity sets and
// J(t, t) = 1.
inline TypeMatrix build_jaccard_repr(const std::vector<std::string>& types,
                                     const EntityTypeIndex& index) {
  // Map entities to dense ids so intersections run on sorted integer lists.
  std::unordered_map<std::string, std::uint32_t> entity_id;
  std::vector<std::vector<std::uint32_t>> sets(types.size());
  for (std::size_t i = 0; i < types.size(); ++i) {
    for (const auto& e : index.entities_of(types[i])) {
      auto [it, inserted] = entity_id.emplace(e, static_cast<std::uint32_t>(entity_id.size()));
      sets[i].push_back(it->second);
    }
    std::sort(sets[i].begin(), sets[i].end());
  }
  TypeMatrix m(types, types.size(), ReprKind::kJaccard);
  for (std::size_t i = 0; i < types.size(); ++i) {
    m.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < types.size(); ++j) {
      const auto& a = sets[i];
      const auto& b = sets[j];
      std::size_t inter = 0;
      for (std::size_t x = 0, y = 0; x < a.size() && y < b.size();) {
        if (a[x] < b[y]) {
          ++x;
        } else if (b[y] < a[x]) {
          ++y;
        } else {
          ++inter, ++x, ++y;
        }
      }
      const std::size_t uni = a.size() + b.size() - inter;
      const double jv = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
      m.at(i, j) = jv;
      m.at(j, i) = jv;
    }
  }
  return m;
}

namespace detail {

struct EmbeddingHeader {
  std::size_t dims = 0;
  ReprKind kind = ReprKind::kLoadedEmbedding;
};

inline EmbeddingHeader parse_embedding_header(std::string_view line, const std::string& where) {
  std::istringstream ss{std::string(line)};
  std::string dims_tag, kind_tag, kind_name;
  long long d = 0;
  ss >> dims_tag >> d >> kind_tag >> kind_name;
  if (dims_tag != "#dims" || kind_tag != "kind" || d <= 0) {
    throw DataError(where + ":1: expected header '#dims <d> kind <kind>'");
  }
  const auto k = parse_repr_kind(kind_name);
  if (!k) throw DataError(where + ":1: unknown kind '" + kind_name + "'");
  return {static_cast<std::size_t>(d), *k};
}

struct EmbeddingRows {
  EmbeddingHeader header;
  std::vector<std::string> ids;
  std::vector<double> values;
  std::vector<std::string> vocab_order;  // from a #vocab-order block, if any
};

inline EmbeddingRows read_embedding_rows(const std::filesystem::path& path) {
  const std::string where = path.filename().string();
  const std::string content = read_file(path);
  EmbeddingRows out;
  std::set<std::string> seen;
  bool have_header = false;
  bool in_vocab_block = false;
  std::size_t line_no = 0;
  for (std::string_view line : split(content, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!have_header) {
      if (trim(line).empty()) continue;
      out.header = parse_embedding_header(line, where);
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line == "#vocab-order") {
        in_vocab_block = true;
      } else if (line == "#end-vocab-order") {
        in_vocab_block = false;
      } else if (in_vocab_block && line.size() > 2 && line[1] == '\t') {
        out.vocab_order.emplace_back(line.substr(2));
      }
      continue;
    }
    const auto fields = split(line, '\t');
    const std::string lno = where + ":" + std::to_string(line_no);
    if (fields.size() != out.header.dims + 1) {
      throw DataError(lno + ": dimension mismatch (expected " +
                      std::to_string(out.header.dims) + " values, got " +
                      std::to_string(fields.size() - 1) + ")");
    }
    std::string id(fields[0]);
    if (id.empty()) throw DataError(lno + ": empty id");
    if (!seen.insert(id).second) throw DataError(lno + ": duplicate id " + id);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      if (!parse_double(fields[j], v) || !std::isfinite(v)) {
        throw DataError(lno + ": bad value in column " + std::to_string(j));
      }
      out.values.push_back(v);
    }
    out.ids.push_back(std::move(id));
  }
  if (!have_header || out.ids.empty()) throw DataError(where + ": empty embedding file");
  return out;
}

}  // namespace detail

// Loads an embedding file and aligns it to `types`. Types missing from the
// file receive the mean of the present rows and are listed in `imputed`.
inline TypeMatrix load_embedding_repr(const std::filesystem::path& path,
                                      const std::vector<std::string>& types,
                                      std::vector<std::string>* imputed = nullptr,
                                      Diagnostics* diag = nullptr) {
  const auto rows = detail::read_embedding_rows(path);
  if (rows.header.kind != ReprKind::kLoadedEmbedding &&
      rows.header.kind != ReprKind::kDescriptionEmbedding) {
    throw DataError(path.filename().string() +
                    ": embedding kind must be loaded_embedding or description_embedding");
  }
  const std::size_t d = rows.header.dims;
  std::unordered_map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < rows.ids.size(); ++i) where.emplace(rows.ids[i], i);

  TypeMatrix m(types, d, rows.header.kind);
  std::vector<double> mean(d, 0.0);
  std::size_t present = 0;
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < types.size(); ++i) {
    auto it = where.find(types[i]);
    if (it == where.end()) {
      missing.push_back(i);
      continue;
    }
    ++present;
    for (std::size_t j = 0; j < d; ++j) {
      m.at(i, j) = rows.values[it->second * d + j];
      mean[j] += m.at(i, j);
    }
  }
  if (present == 0) {
    throw DataError(path.filename().string() + ": no label-space type found in embedding file");
  }
  for (double& v : mean) v /= static_cast<double>(present);
  for (const std::size_t i : missing) {
    for (std::size_t j = 0; j < d; ++j) m.at(i, j) = mean[j];
    if (imputed != nullptr) imputed->push_back(types[i]);
  }
  if (!missing.empty()) {
    warn(diag, std::to_string(missing.size()) + " type(s) missing from " +
                   path.filename().string() + "; imputed with the mean vector");
  }
  return m;
}

// Persists a matrix in the embedding format plus a #vocab-order block.
inline std::string serialize_type_matrix(const TypeMatrix& m) {
  std::string out = "#dims " + std::to_string(m.dim()) + " kind " +
                    std::string(to_string(m.kind())) + "\n#vocab-order\n";
  for (const auto& id : m.type_ids()) out += "#\t" + id + "\n";
  out += "#end-vocab-order\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out += m.type_ids()[i];
    for (const double v : m.row(i)) {
      out += '\t';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline void save_type_matrix(const std::filesystem::path& path, const TypeMatrix& m) {
  write_file(path, serialize_type_matrix(m));
}

inline TypeMatrix load_type_matrix(const std::filesystem::path& path) {
  auto rows = detail::read_embedding_rows(path);
  if (!rows.vocab_order.empty() && rows.vocab_order != rows.ids) {
    throw DataError(path.filename().string() + ": rows do not follow the #vocab-order block");
  }
  TypeMatrix m(rows.ids, rows.header.dims, rows.header.kind);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.dim(); ++j) m.at(i, j) = rows.values[i * m.dim() + j];
  }
  return m;
}

// Desc_t = t_w [SEP] e1_w [SEP] ... [SEP] el_w
struct DescriptionDocument {
  std::string type_id;
  std::string text;
  std::size_t entity_count = 0;

  friend bool operator==(const DescriptionDocument&, const DescriptionDocument&) = default;
};

inline constexpr std::string_view kSep = "[SEP]";

// "dbo:SoccerPlayer" -> "soccer player", "wd:Q5" -> "q5".
inline std::string local_name_words(std::string_view id) {
  const auto cut = id.find_last_of(":/#");
  std::string_view local = cut == std::string_view::npos ? id : id.substr(cut + 1);
  std::string out;
  char prev = 0;
  for (const char c : local) {
    const auto u = static_cast<unsigned char>(c);
    if (!std::isalnum(u) && u < 0x80) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
      prev = 0;
      continue;
    }
    const bool boundary = std::isupper(u) && prev != 0 && std::islower(static_cast<unsigned char>(prev));
    if (boundary && !out.empty() && out.back() != ' ') out.push_back(' ');
    out.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
    prev = c;
  }
  return std::string(trim(out));
}

namespace detail {

inline std::string sanitize_description(std::string_view s) {
  std::string out = collapse_whitespace(s);
  for (std::size_t pos; (pos = out.find(kSep)) != std::string::npos;) out.replace(pos, kSep.size(), "SEP");
  return out;
}

// Cuts `text` to at most max_chars at a whitespace boundary and drops a
// dangling trailing separator.
inline std::string truncate_at_token(std::string text, std::size_t max_chars) {
  if (text.size() > max_chars) {
    const bool at_boundary = text[max_chars] == ' ';
    text.resize(max_chars);
    if (!at_boundary) {
      const auto sp = text.find_last_of(' ');
      if (sp != std::string::npos) text.resize(sp);
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
  }
  const std::string tail = " " + std::string(kSep);
  while (text.size() >= tail.size() && text.compare(text.size() - tail.size(), tail.size(), tail) == 0) {
    text.resize(text.size() - tail.size());
  }
  return text;
}

inline std::size_t count_separators(std::string_view text) {
  std::size_t n = 0;
  const std::string needle = " " + std::string(kSep) + " ";
  for (std::size_t pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + 1)) {
    ++n;
  }
  return n;
}

}  // namespace detail

inline constexpr std::size_t kDefaultMaxEntities = 10;
inline constexpr std::size_t kDefaultMaxChars = 4000;

// Builds one description document per type in `types`. The type's own
// description comes first (its label when empty, its local name when both
// are missing), followed by up to `max_entities` entity descriptions
// ordered by descending length, then entity id.
inline std::vector<DescriptionDocument> assemble_type_descriptions(
    const TypeSystem& ts, const EntityTypeIndex& index, const std::vector<std::string>& types,
    std::size_t max_entities = kDefaultMaxEntities, std::size_t max_chars = kDefaultMaxChars) {
  if (max_chars == 0) throw ParameterError("max_chars must be positive");
  std::vector<DescriptionDocument> docs;
  docs.reserve(types.size());
  for (const auto& t : types) {
    std::string head;
    if (ts.contains(t)) {
      const std::size_t i = ts.index_of(t);
      head = detail::sanitize_description(ts.description(i));
      if (head.empty()) head = detail::sanitize_description(ts.label(i));
    }
    if (head.empty()) head = local_name_words(t);

    std::vector<std::pair<std::string, std::string>> ents;  // (id, text)
    for (const auto& e : index.entities_of(t)) {
      std::string d = detail::sanitize_description(index.description_of(e));
      if (!d.empty()) ents.emplace_back(e, std::move(d));
    }
    std::sort(ents.begin(), ents.end(), [](const auto& a, const auto& b) {
      if (a.second.size() != b.second.size()) return a.second.size() > b.second.size();
      return a.first < b.first;
    });
    if (ents.size() > max_entities) ents.resize(max_entities);

    std::string text = head;
    for (const auto& [e, d] : ents) {
      text += " ";
      text += kSep;
      text += " ";
      text += d;
    }
    DescriptionDocument doc;
    doc.type_id = t;
    doc.text = detail::truncate_at_token(std::move(text), max_chars);
    doc.entity_count = detail::count_separators(doc.text);
    docs.push_back(std::move(doc));
  }
  return docs;
}

// Sidecar input: "<type_id>\t<text>" per line.
inline std::string serialize_description_documents(const std::vector<DescriptionDocument>& docs) {
  std::string out;
  for (const auto& d : docs) out += d.type_id + "\t" + d.text + "\n";
  return out;
}

}  // namespace xtypes
