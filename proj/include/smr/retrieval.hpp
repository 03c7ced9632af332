/*
 * Copyright 2026 The smr-ir Authors
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Sparse (BM25) and dense (cosine) first-stage retrieval over an in-memory
// corpus. Indexes are immutable once built and safe to share across threads.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "smr/core.hpp"

namespace smr {

struct TokenizerConfig {
  bool lowercase = true;
};

// Splits on every code point that is not a Unicode letter or digit. Invalid
// UTF-8 bytes act as separators. No stemming, no stopwords.
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config = {});

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;
};

struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const noexcept {
    return std::hash<std::string_view>{}(s);
  }
};

template <typename V>
using StringMap = std::unordered_map<std::string, V, StringHash, std::equal_to<>>;

/// Documents in memory, addressable by id.
class DocumentMap : public DocumentStore {
 public:
  DocumentMap() = default;
  // Throws InvalidInput on a duplicate or malformed id.
  explicit DocumentMap(std::vector<Document> docs);

  const Document* find(std::string_view doc_id) const override;
  std::size_t size() const noexcept { return docs_.size(); }
  std::span<const Document> documents() const noexcept { return docs_; }

 private:
  std::vector<Document> docs_;
  StringMap<std::size_t> by_id_;
};

/// Inverted index with the statistics BM25 needs.
class CorpusIndex : public DocumentStore {
 public:
  struct Posting {
    std::uint32_t doc = 0;  // position in documents()
    std::uint32_t tf = 0;
  };

  // Throws InvalidInput on an empty corpus or a duplicate doc_id.
  static CorpusIndex build(std::span<const Document> corpus, const TokenizerConfig& config = {});

  // JSON serialization; load() re-checks the index invariants.
  void save(std::ostream& out) const;
  static CorpusIndex load(std::istream& in);

  std::size_t doc_count() const noexcept { return docs_.size(); }
  double avg_doc_length() const noexcept { return avg_length_; }
  const TokenizerConfig& tokenizer() const noexcept { return tokenizer_; }
  std::span<const Document> documents() const noexcept { return docs_.documents(); }

  const Document* find(std::string_view doc_id) const override { return docs_.find(doc_id); }
  // Throws NotFound for an unknown id.
  std::uint32_t doc_index(std::string_view doc_id) const;
  std::uint32_t doc_length(std::string_view doc_id) const;
  std::span<const std::uint32_t> doc_lengths() const noexcept { return lengths_; }

  std::size_t document_frequency(std::string_view term) const;
  std::uint32_t term_frequency(std::string_view term, std::string_view doc_id) const;
  std::span<const Posting> postings(std::string_view term) const;

 private:
  CorpusIndex() = default;
  void finalize();

  DocumentMap docs_;
  std::vector<std::uint32_t> lengths_;
  StringMap<std::vector<Posting>> postings_;
  double avg_length_ = 0.0;
  TokenizerConfig tokenizer_;
};

CorpusIndex build_index(std::span<const Document> corpus, const TokenizerConfig& config = {});

// Okapi BM25 with IDF = ln(1 + (N - df + 0.5) / (df + 0.5)). Repeated query
// terms contribute once per occurrence. Throws NotFound for an unknown doc.
double bm25_score(const CorpusIndex& index, std::span<const std::string> query_terms,
                  std::string_view doc_id, const Bm25Params& params = {});

// Top-k documents by BM25, best first, ties by ascending doc_id. Documents
// scoring zero are never returned. Throws InvalidInput when k == 0.
std::vector<ScoredDoc> search_scored(const CorpusIndex& index, std::string_view query,
                                     std::size_t k, const Bm25Params& params = {});
RankedList search(const CorpusIndex& index, std::string_view query, std::size_t k,
                  const Bm25Params& params = {});

/// Unit-normalized document embeddings for exact cosine search.
class DenseStore {
 public:
  // Normalizes every vector. Throws InvalidInput on mixed dimensions, a zero
  // vector, a non-finite component or a duplicate id.
  static DenseStore build(std::vector<std::pair<std::string, std::vector<double>>> vectors,
                          std::optional<std::string> embed_endpoint = std::nullopt);
  // JSONL lines of {"doc_id": ..., "vector": [...]}.
  static DenseStore load_jsonl(std::istream& in,
                               std::optional<std::string> embed_endpoint = std::nullopt);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const double> vector(std::size_t i) const;
  const std::optional<std::string>& embed_endpoint() const noexcept { return embed_endpoint_; }

 private:
  DenseStore() = default;

  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> data_;  // row-major, size() x dim()
  std::optional<std::string> embed_endpoint_;
};

// Throws InvalidInput on a dimension mismatch, a zero query or k == 0.
std::vector<ScoredDoc> dense_search_scored(const DenseStore& store,
                                           std::span<const double> query_vector, std::size_t k);
RankedList dense_search(const DenseStore& store, std::span<const double> query_vector,
                        std::size_t k);

// Reads {"doc_id", "text"} JSONL. Errors cite the 1-based line number.
std::vector<Document> load_corpus_jsonl(std::istream& in);

/// What the reasoning loop needs from a first-stage retriever.
class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual RankedList retrieve(std::string_view query, std::size_t k) const = 0;
  virtual const DocumentStore& documents() const = 0;
};

class Bm25Retriever : public Retriever {
 public:
  explicit Bm25Retriever(std::shared_ptr<const CorpusIndex> index, Bm25Params params = {});

  RankedList retrieve(std::string_view query, std::size_t k) const override;
  const DocumentStore& documents() const override { return *index_; }
  const CorpusIndex& index() const noexcept { return *index_; }

 private:
  std::shared_ptr<const CorpusIndex> index_;
  Bm25Params params_;
};

using QueryEmbedder = std::function<std::vector<double>(std::string_view query)>;

class DenseRetriever : public Retriever {
 public:
  // Throws InvalidInput if a stored vector has no document in `docs`.
  DenseRetriever(std::shared_ptr<const DenseStore> store,
                 std::shared_ptr<const DocumentMap> docs, QueryEmbedder embedder);

  RankedList retrieve(std::string_view query, std::size_t k) const override;
  const DocumentStore& documents() const override { return *docs_; }

 private:
  std::shared_ptr<const DenseStore> store_;
  std::shared_ptr<const DocumentMap> docs_;
  QueryEmbedder embedder_;
};

}  // namespace smr
