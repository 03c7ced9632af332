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

#include "smr/retrieval.hpp"

#include <locale.h>
#include <wctype.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "smr/error.hpp"

namespace smr {
namespace {

using json = nlohmann::json;

constexpr std::string_view kIndexFormat = "smr-bm25-index";
constexpr int kIndexVersion = 1;

// C.UTF-8 gives Unicode character classes independent of the user's locale.
locale_t utf8_ctype() {
  static const locale_t loc = newlocale(LC_CTYPE_MASK, "C.UTF-8", locale_t{});
  return loc;
}

bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  }
  if (const auto loc = utf8_ctype()) return iswalnum_l(static_cast<wint_t>(cp), loc) != 0;
  return true;
}

char32_t to_lower(char32_t cp) {
  if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
  if (const auto loc = utf8_ctype()) {
    return static_cast<char32_t>(towlower_l(static_cast<wint_t>(cp), loc));
  }
  return cp;
}

// Decodes one code point at text[pos]; returns bytes consumed, or 0 for an
// invalid sequence (the caller skips one byte).
std::size_t decode_utf8(std::string_view text, std::size_t pos, char32_t& out) {
  const auto b0 = static_cast<unsigned char>(text[pos]);
  std::size_t len = 0;
  char32_t cp = 0;
  if (b0 < 0x80) {
    out = b0;
    return 1;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return 0;
  }
  if (pos + len > text.size()) return 0;
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(text[pos + i]);
    if ((b & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (b & 0x3F);
  }
  // Reject overlong forms and surrogates.
  static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
  out = cp;
  return len;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

std::vector<ScoredDoc> top_k(std::vector<ScoredDoc> scored, std::size_t k) {
  const auto n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n),
                    scored.end(), ranks_before);
  scored.resize(n);
  return scored;
}

RankedList to_ranked_list(const std::vector<ScoredDoc>& scored) {
  std::vector<std::string> ids;
  ids.reserve(scored.size());
  for (const auto& s : scored) ids.push_back(s.doc_id);
  return RankedList(std::move(ids), ListSource::kInitialRetrieval);
}

void require_positive_k(std::size_t k) {
  if (k == 0) throw InvalidInput("k must be at least 1");
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp = 0;
    const auto len = decode_utf8(text, pos, cp);
    if (len == 0 || !is_word_char(cp)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
      pos += len == 0 ? 1 : len;
      continue;
    }
    append_utf8(current, config.lowercase ? to_lower(cp) : cp);
    pos += len;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

DocumentMap::DocumentMap(std::vector<Document> docs) : docs_(std::move(docs)) {
  by_id_.reserve(docs_.size());
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    validate_doc_id(docs_[i].doc_id);
    if (!by_id_.emplace(docs_[i].doc_id, i).second) {
      throw InvalidInput("duplicate doc_id: " + docs_[i].doc_id);
    }
  }
}

const Document* DocumentMap::find(std::string_view doc_id) const {
  const auto it = by_id_.find(doc_id);
  return it == by_id_.end() ? nullptr : &docs_[it->second];
}

CorpusIndex CorpusIndex::build(std::span<const Document> corpus, const TokenizerConfig& config) {
  if (corpus.empty()) throw InvalidInput("cannot index an empty corpus");
  CorpusIndex index;
  index.tokenizer_ = config;
  index.docs_ = DocumentMap(std::vector<Document>(corpus.begin(), corpus.end()));
  index.lengths_.reserve(corpus.size());

  for (std::uint32_t d = 0; d < corpus.size(); ++d) {
    const auto terms = tokenize(corpus[d].text, config);
    index.lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
    StringMap<std::uint32_t> counts;
    for (const auto& t : terms) ++counts[t];
    for (auto& [term, tf] : counts) index.postings_[term].push_back({d, tf});
  }
  index.finalize();
  return index;
}

void CorpusIndex::finalize() {
  double total = 0.0;
  for (auto len : lengths_) total += len;
  avg_length_ = total / static_cast<double>(lengths_.size());
  // A corpus of only empty documents would make every length ratio 0/0.
  if (!(avg_length_ > 0.0)) throw InvalidInput("corpus contains no tokens");
}

void CorpusIndex::save(std::ostream& out) const {
  json docs = json::array();
  for (std::size_t d = 0; d < docs_.size(); ++d) {
    const auto& doc = docs_.documents()[d];
    docs.push_back({{"doc_id", doc.doc_id}, {"text", doc.text}, {"length", lengths_[d]}});
  }
  // Sorted terms keep the file byte-stable across runs.
  std::vector<std::string_view> terms;
  terms.reserve(postings_.size());
  for (const auto& [term, _] : postings_) terms.push_back(term);
  std::sort(terms.begin(), terms.end());
  json postings = json::object();
  for (auto term : terms) {
    json list = json::array();
    for (const auto& p : postings_.find(term)->second) list.push_back({p.doc, p.tf});
    postings[std::string(term)] = std::move(list);
  }
  json root = {{"format", kIndexFormat},
               {"version", kIndexVersion},
               {"tokenizer", {{"lowercase", tokenizer_.lowercase}}},
               {"doc_count", docs_.size()},
               {"avg_doc_length", avg_length_},
               {"documents", std::move(docs)},
               {"postings", std::move(postings)}};
  out << root.dump() << '\n';
  if (!out) throw Error("failed to write index");
}

CorpusIndex CorpusIndex::load(std::istream& in) {
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("index file is not valid JSON: ") + e.what());
  }
  try {
    if (root.at("format") != kIndexFormat || root.at("version") != kIndexVersion) {
      throw InvalidInput("unsupported index format");
    }
    CorpusIndex index;
    index.tokenizer_.lowercase = root.at("tokenizer").at("lowercase").get<bool>();
    std::vector<Document> docs;
    for (const auto& d : root.at("documents")) {
      docs.push_back({d.at("doc_id").get<std::string>(), d.at("text").get<std::string>()});
      index.lengths_.push_back(d.at("length").get<std::uint32_t>());
    }
    if (docs.empty()) throw InvalidInput("index holds no documents");
    index.docs_ = DocumentMap(std::move(docs));

    std::vector<std::uint64_t> tf_sums(index.lengths_.size(), 0);
    for (const auto& [term, list] : root.at("postings").items()) {
      auto& out = index.postings_[term];
      for (const auto& p : list) {
        const Posting posting{p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>()};
        if (posting.doc >= index.lengths_.size() || posting.tf == 0 ||
            (!out.empty() && out.back().doc >= posting.doc)) {
          throw InvalidInput("corrupt posting list for term '" + term + "'");
        }
        tf_sums[posting.doc] += posting.tf;
        out.push_back(posting);
      }
    }
    for (std::size_t d = 0; d < tf_sums.size(); ++d) {
      if (tf_sums[d] != index.lengths_[d]) {
        throw InvalidInput("document length disagrees with postings for " +
                           index.docs_.documents()[d].doc_id);
      }
    }
    index.finalize();
    return index;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed index file: ") + e.what());
  }
}

std::uint32_t CorpusIndex::doc_index(std::string_view doc_id) const {
  const auto* doc = docs_.find(doc_id);
  if (doc == nullptr) throw NotFound("unknown doc_id: " + std::string(doc_id));
  return static_cast<std::uint32_t>(doc - docs_.documents().data());
}

std::uint32_t CorpusIndex::doc_length(std::string_view doc_id) const {
  return lengths_[doc_index(doc_id)];
}

std::span<const CorpusIndex::Posting> CorpusIndex::postings(std::string_view term) const {
  const auto it = postings_.find(term);
  if (it == postings_.end()) return {};
  return it->second;
}

std::size_t CorpusIndex::document_frequency(std::string_view term) const {
  return postings(term).size();
}

std::uint32_t CorpusIndex::term_frequency(std::string_view term, std::string_view doc_id) const {
  const auto d = doc_index(doc_id);
  const auto list = postings(term);
  const auto it = std::lower_bound(list.begin(), list.end(), d,
                                   [](const Posting& p, std::uint32_t doc) { return p.doc < doc; });
  return (it != list.end() && it->doc == d) ? it->tf : 0;
}

CorpusIndex build_index(std::span<const Document> corpus, const TokenizerConfig& config) {
  return CorpusIndex::build(corpus, config);
}

namespace {

double idf(std::size_t doc_count, std::size_t df) {
  const auto n = static_cast<double>(doc_count);
  const auto f = static_cast<double>(df);
  return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
}

double term_weight(double idf_value, double tf, double doc_len, double avg_len,
                   const Bm25Params& p) {
  return idf_value * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * doc_len / avg_len));
}

}  // namespace

double bm25_score(const CorpusIndex& index, std::span<const std::string> query_terms,
                  std::string_view doc_id, const Bm25Params& params) {
  const auto len = static_cast<double>(index.doc_length(doc_id));
  double score = 0.0;
  for (const auto& term : query_terms) {
    const auto tf = index.term_frequency(term, doc_id);
    if (tf == 0) continue;
    score += term_weight(idf(index.doc_count(), index.document_frequency(term)), tf, len,
                         index.avg_doc_length(), params);
  }
  return score;
}

std::vector<ScoredDoc> search_scored(const CorpusIndex& index, std::string_view query,
                                     std::size_t k, const Bm25Params& params) {
  require_positive_k(k);
  const auto terms = tokenize(query, index.tokenizer());
  std::vector<double> acc(index.doc_count(), 0.0);
  const auto docs = index.documents();
  const auto lengths = index.doc_lengths();
  for (const auto& term : terms) {
    const auto list = index.postings(term);
    if (list.empty()) continue;
    const double w = idf(index.doc_count(), list.size());
    for (const auto& p : list) {
      acc[p.doc] += term_weight(w, p.tf, lengths[p.doc],
                                index.avg_doc_length(), params);
    }
  }
  std::vector<ScoredDoc> scored;
  for (std::size_t d = 0; d < acc.size(); ++d) {
    if (acc[d] > 0.0) scored.push_back({docs[d].doc_id, acc[d]});
  }
  return top_k(std::move(scored), k);
}

RankedList search(const CorpusIndex& index, std::string_view query, std::size_t k,
                  const Bm25Params& params) {
  return to_ranked_list(search_scored(index, query, k, params));
}

DenseStore DenseStore::build(std::vector<std::pair<std::string, std::vector<double>>> vectors,
                             std::optional<std::string> embed_endpoint) {
  if (vectors.empty()) throw InvalidInput("dense store needs at least one vector");
  DenseStore store;
  store.embed_endpoint_ = std::move(embed_endpoint);
  store.dim_ = vectors.front().second.size();
  if (store.dim_ == 0) throw InvalidInput("embedding dimension must be positive");
  StringMap<bool> seen;
  store.ids_.reserve(vectors.size());
  store.data_.reserve(vectors.size() * store.dim_);
  for (auto& [id, v] : vectors) {
    validate_doc_id(id);
    if (!seen.emplace(id, true).second) throw InvalidInput("duplicate doc_id: " + id);
    if (v.size() != store.dim_) {
      throw InvalidInput("embedding for " + id + " has dimension " + std::to_string(v.size()) +
                         ", expected " + std::to_string(store.dim_));
    }
    double norm = 0.0;
    for (double x : v) {
      if (!std::isfinite(x)) throw InvalidInput("non-finite component in embedding for " + id);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) throw InvalidInput("zero embedding for " + id);
    for (double x : v) store.data_.push_back(x / norm);
    store.ids_.push_back(std::move(id));
  }
  return store;
}

DenseStore DenseStore::load_jsonl(std::istream& in, std::optional<std::string> embed_endpoint) {
  std::vector<std::pair<std::string, std::vector<double>>> vectors;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_whitespace(line).empty()) continue;
    try {
      const auto obj = json::parse(line);
      vectors.emplace_back(obj.at("doc_id").get<std::string>(),
                           obj.at("vector").get<std::vector<double>>());
    } catch (const json::exception& e) {
      throw InvalidInput("embedding file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return build(std::move(vectors), std::move(embed_endpoint));
}

std::span<const double> DenseStore::vector(std::size_t i) const {
  return std::span<const double>(data_).subspan(i * dim_, dim_);
}

std::vector<ScoredDoc> dense_search_scored(const DenseStore& store,
                                           std::span<const double> query_vector, std::size_t k) {
  require_positive_k(k);
  if (query_vector.size() != store.dim()) {
    throw InvalidInput("query vector has dimension " + std::to_string(query_vector.size()) +
                       ", store expects " + std::to_string(store.dim()));
  }
  double norm = 0.0;
  for (double x : query_vector) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw InvalidInput("query vector has no direction");

  std::vector<ScoredDoc> scored;
  scored.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto v = store.vector(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) dot += v[j] * query_vector[j];
    scored.push_back({store.ids()[i], dot / norm});
  }
  return top_k(std::move(scored), k);
}

RankedList dense_search(const DenseStore& store, std::span<const double> query_vector,
                        std::size_t k) {
  return to_ranked_list(dense_search_scored(store, query_vector, k));
}

std::vector<Document> load_corpus_jsonl(std::istream& in) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_whitespace(line).empty()) continue;
    try {
      const auto obj = json::parse(line);
      Document doc{obj.at("doc_id").get<std::string>(), obj.at("text").get<std::string>()};
      validate_doc_id(doc.doc_id);
      docs.push_back(std::move(doc));
    } catch (const json::exception& e) {
      throw InvalidInput("corpus line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InvalidInput& e) {
      throw InvalidInput("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

Bm25Retriever::Bm25Retriever(std::shared_ptr<const CorpusIndex> index, Bm25Params params)
    : index_(std::move(index)), params_(params) {
  if (!index_) throw InvalidInput("Bm25Retriever needs an index");
}

RankedList Bm25Retriever::retrieve(std::string_view query, std::size_t k) const {
  return search(*index_, query, k, params_);
}

DenseRetriever::DenseRetriever(std::shared_ptr<const DenseStore> store,
                               std::shared_ptr<const DocumentMap> docs, QueryEmbedder embedder)
    : store_(std::move(store)), docs_(std::move(docs)), embedder_(std::move(embedder)) {
  if (!store_ || !docs_ || !embedder_) throw InvalidInput("DenseRetriever is missing a component");
  for (const auto& id : store_->ids()) {
    if (docs_->find(id) == nullptr) throw InvalidInput("embedding without a document: " + id);
  }
}

RankedList DenseRetriever::retrieve(std::string_view query, std::size_t k) const {
  const auto q = embedder_(query);
  return dense_search(*store_, q, k);
}

}  // namespace smr
