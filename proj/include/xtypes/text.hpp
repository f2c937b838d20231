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

// Tokenizer, vocabulary and TF-IDF weighting shared by the type
// representations and the question featurizer.
//
//   tf  = raw count
//   idf = ln((N + 1) / (df + 1)) + 1
//
// Rows are L2-normalized after weighting.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xtypes/common.hpp"

namespace xtypes {

// Lowercase ASCII, split on anything that is not a letter or digit, drop
// tokens shorter than two bytes and pure-digit tokens. Bytes >= 0x80 are
// kept as word characters so UTF-8 words are not broken apart.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  bool all_digits = true;
  auto flush = [&] {
    if (cur.size() >= 2 && !all_digits) tokens.push_back(cur);
    cur.clear();
    all_digits = true;
  };
  for (const char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u >= 0x80 || std::isalnum(u)) {
      if (!std::isdigit(u)) all_digits = false;
      cur.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

// Sparse vector as (feature id, value) pairs sorted by id.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

inline double dot(const SparseVector& x, const std::vector<double>& w) {
  double s = 0.0;
  for (const auto& [i, v] : x) s += v * w[i];
  return s;
}

inline double squared_norm(const SparseVector& x) {
  double s = 0.0;
  for (const auto& [i, v] : x) s += v * v;
  return s;
}

inline void l2_normalize(SparseVector& x) {
  const double n = std::sqrt(squared_norm(x));
  if (n > 0.0) {
    for (auto& e : x) e.second /= n;
  }
}

// Token vocabulary with document frequencies.
class VocabularyIndex {
 public:
  VocabularyIndex() = default;

  // Builds a vocabulary from tokenized documents. Tokens are ordered
  // lexicographically so ids do not depend on document order.
  static VocabularyIndex build(const std::vector<std::vector<std::string>>& docs) {
    std::map<std::string, std::size_t> df;
    for (const auto& doc : docs) {
      std::vector<std::string> uniq = doc;
      std::sort(uniq.begin(), uniq.end());
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      for (const auto& t : uniq) ++df[t];
    }
    VocabularyIndex v;
    v.doc_count_ = docs.size();
    for (const auto& [tok, n] : df) {
      v.token_to_id_.emplace(tok, static_cast<std::uint32_t>(v.tokens_.size()));
      v.tokens_.push_back(tok);
      v.df_.push_back(n);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t doc_count() const { return doc_count_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::size_t>& document_frequency() const { return df_; }

  // -1 when the token is unknown.
  long long id_of(std::string_view tok) const {
    auto it = token_to_id_.find(std::string(tok));
    return it == token_to_id_.end() ? -1 : static_cast<long long>(it->second);
  }

  double idf(std::uint32_t id) const {
    return std::log((static_cast<double>(doc_count_) + 1.0) /
                    (static_cast<double>(df_[id]) + 1.0)) +
           1.0;
  }

  // Raw term counts over known tokens; unknown tokens are ignored.
  SparseVector counts(const std::vector<std::string>& doc) const {
    std::map<std::uint32_t, double> c;
    for (const auto& t : doc) {
      if (auto it = token_to_id_.find(t); it != token_to_id_.end()) c[it->second] += 1.0;
    }
    return {c.begin(), c.end()};
  }

  // L2-normalized TF-IDF vector.
  SparseVector tfidf(const std::vector<std::string>& doc) const {
    SparseVector x = counts(doc);
    for (auto& [i, v] : x) v *= idf(i);
    l2_normalize(x);
    return x;
  }

  nlohmann::json to_json() const {
    return {{"doc_count", doc_count_}, {"tokens", tokens_}, {"df", df_}};
  }

  static VocabularyIndex from_json(const nlohmann::json& j) {
    VocabularyIndex v;
    v.doc_count_ = j.at("doc_count").get<std::size_t>();
    v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
    v.df_ = j.at("df").get<std::vector<std::size_t>>();
    if (v.df_.size() != v.tokens_.size()) throw DataError("vocabulary: df/tokens size mismatch");
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
      v.token_to_id_.emplace(v.tokens_[i], static_cast<std::uint32_t>(i));
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> token_to_id_;
  std::vector<std::size_t> df_;
  std::size_t doc_count_ = 0;
};

// TF-IDF question features (the built-in stand-in for a transformer
// question encoder). Vocabulary is fitted on training question texts.
class QuestionFeaturizer {
 public:
  QuestionFeaturizer() = default;
  explicit QuestionFeaturizer(VocabularyIndex vocab) : vocab_(std::move(vocab)) {}

  template <typename Texts>
  static QuestionFeaturizer fit(const Texts& texts) {
    std::vector<std::vector<std::string>> docs;
    for (const auto& t : texts) docs.push_back(tokenize(t));
    return QuestionFeaturizer(VocabularyIndex::build(docs));
  }

  SparseVector featurize(std::string_view text) const { return vocab_.tfidf(tokenize(text)); }

  std::size_t dim() const { return vocab_.size(); }
  const VocabularyIndex& vocabulary() const { return vocab_; }

  nlohmann::json to_json() const { return {{"vocabulary", vocab_.to_json()}}; }
  static QuestionFeaturizer from_json(const nlohmann::json& j) {
    return QuestionFeaturizer(VocabularyIndex::from_json(j.at("vocabulary")));
  }

 private:
  VocabularyIndex vocab_;
};

}  // namespace xtypes
