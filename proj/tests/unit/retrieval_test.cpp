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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "smr/error.hpp"
#include "smr/retrieval.hpp"
#include "support/gen.hpp"
#include "support/oracles.hpp"

namespace smr {
namespace {

using Ids = std::vector<std::string>;

// Desk corpus values frozen from an independent evaluation of the formula.
constexpr double kDeskD1 = 0.47000362924573563;
constexpr double kDeskD2 = 0.5665797174469143;

std::vector<Document> desk_corpus() { return {{"d1", "a b"}, {"d2", "a a c"}, {"d3", "d"}}; }

TEST(TokenizeTest, LowercasesAndSplitsOnNonAlnum) {
  EXPECT_EQ(tokenize("Hello, World!  x-ray"), (Ids{"hello", "world", "x", "ray"}));
  EXPECT_EQ(tokenize("ÉCOLE café"), (Ids{"école", "café"}));
  EXPECT_EQ(tokenize("a\xe2\x80\x94" "b"), (Ids{"a", "b"}));  // em dash separates
  EXPECT_EQ(tokenize("Abc", TokenizerConfig{false}), (Ids{"Abc"}));
  EXPECT_TRUE(tokenize("  ,.; ").empty());
  EXPECT_EQ(tokenize("ok\xff" "go"), (Ids{"ok", "go"}));  // invalid byte separates
}

TEST(BuildIndexTest, AverageLength) {
  const auto index = CorpusIndex::build(std::vector<Document>{
      {"a", "w w"}, {"b", "w w w w"}, {"c", "w w w w w w"}});
  EXPECT_EQ(index.doc_count(), 3u);
  EXPECT_DOUBLE_EQ(index.avg_doc_length(), 4.0);
}

TEST(BuildIndexTest, SingletonAndErrors) {
  const auto one = CorpusIndex::build(std::vector<Document>{{"only", "x y z"}});
  EXPECT_EQ(one.doc_count(), 1u);
  EXPECT_DOUBLE_EQ(one.avg_doc_length(), 3.0);
  EXPECT_THROW(CorpusIndex::build(std::vector<Document>{{"d", "x"}, {"d", "y"}}), InvalidInput);
  EXPECT_THROW(CorpusIndex::build(std::vector<Document>{}), InvalidInput);
  EXPECT_THROW(CorpusIndex::build(std::vector<Document>{{"d", "..."}}), InvalidInput);
}

TEST(Bm25Test, DeskCorpusMatchesFrozenOracle) {
  const auto index = CorpusIndex::build(desk_corpus());
  const Ids q{"a"};
  EXPECT_NEAR(bm25_score(index, q, "d1"), kDeskD1, 1e-9);
  EXPECT_NEAR(bm25_score(index, q, "d2"), kDeskD2, 1e-9);
  EXPECT_EQ(bm25_score(index, q, "d3"), 0.0);

  const std::vector<std::vector<std::string>> toks{{"a", "b"}, {"a", "a", "c"}, {"d"}};
  EXPECT_NEAR(smr_test::oracle_bm25(toks, q, 0), kDeskD1, 1e-12);
  EXPECT_NEAR(smr_test::oracle_bm25(toks, q, 1), kDeskD2, 1e-12);
}

TEST(Bm25Test, IdenticalDocumentsScoreIdentically) {
  const auto index = CorpusIndex::build(std::vector<Document>{
      {"x", "red fox"}, {"y", "red fox"}, {"z", "blue whale"}});
  const Ids q{"red", "fox"};
  EXPECT_EQ(bm25_score(index, q, "x"), bm25_score(index, q, "y"));
  EXPECT_THROW(bm25_score(index, q, "nope"), NotFound);
}

TEST(SearchTest, DeskOrderingAndK) {
  const auto index = CorpusIndex::build(desk_corpus());
  EXPECT_EQ(search(index, "a", 2).entries(), (Ids{"d2", "d1"}));
  // No padding with zero-score documents.
  EXPECT_EQ(search(index, "a", 10).entries(), (Ids{"d2", "d1"}));
  EXPECT_TRUE(search(index, "zzz", 10).empty());
  EXPECT_THROW(search(index, "a", 0), InvalidInput);
}

TEST(SearchTest, TiesBreakByAscendingId) {
  const auto index = CorpusIndex::build(std::vector<Document>{
      {"b", "same text"}, {"c", "same text"}, {"a", "same text"}, {"z", "other"}});
  EXPECT_EQ(search(index, "same", 10).entries(), (Ids{"a", "b", "c"}));
}

TEST(IndexSerializationTest, RoundTrip) {
  const auto index = CorpusIndex::build(desk_corpus());
  std::stringstream buf;
  index.save(buf);
  const auto loaded = CorpusIndex::load(buf);
  EXPECT_EQ(loaded.doc_count(), 3u);
  EXPECT_DOUBLE_EQ(loaded.avg_doc_length(), index.avg_doc_length());
  const Ids q{"a"};
  EXPECT_EQ(bm25_score(loaded, q, "d2"), bm25_score(index, q, "d2"));
  ASSERT_NE(loaded.find("d2"), nullptr);
  EXPECT_EQ(loaded.find("d2")->text, "a a c");
}

TEST(IndexSerializationTest, RejectsGarbage) {
  std::stringstream bad("{\"format\": \"something-else\"}");
  EXPECT_THROW(CorpusIndex::load(bad), InvalidInput);
  std::stringstream not_json("nope");
  EXPECT_THROW(CorpusIndex::load(not_json), InvalidInput);
}

TEST(CorpusJsonlTest, ErrorsCiteLineNumbers) {
  std::stringstream ok("{\"doc_id\":\"a\",\"text\":\"x\"}\n\n{\"doc_id\":\"b\",\"text\":\"y\"}\n");
  EXPECT_EQ(load_corpus_jsonl(ok).size(), 2u);
  std::stringstream bad("{\"doc_id\":\"a\",\"text\":\"x\"}\n{broken\n");
  try {
    load_corpus_jsonl(bad);
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(DenseSearchTest, IdentityAndOrthogonality) {
  const auto store = DenseStore::build({{"x", {1, 0, 0}}, {"y", {0, 2, 0}}, {"z", {1, 1, 0}}});
  const std::vector<double> q{0, 3, 0};
  const auto scored = dense_search_scored(store, q, 3);
  ASSERT_EQ(scored.front().doc_id, "y");
  EXPECT_NEAR(scored.front().score, 1.0, 1e-12);
  const auto x = std::find_if(scored.begin(), scored.end(), [](auto& s) { return s.doc_id == "x"; });
  ASSERT_NE(x, scored.end());
  EXPECT_EQ(x->score, 0.0);
}

TEST(DenseSearchTest, MatchesExhaustiveScoring) {
  smr_test::Rng rng(7);
  std::normal_distribution<double> normal;
  std::vector<std::pair<std::string, std::vector<double>>> vecs;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> v(4);
    double norm = 0;
    for (auto& c : v) {
      c = normal(rng);
      norm += c * c;
    }
    for (auto& c : v) c /= std::sqrt(norm);
    vecs.push_back({"v" + std::to_string(i), v});
  }
  const auto store = DenseStore::build(vecs);
  const std::vector<double> q{0.3, -0.2, 0.9, 0.1};
  std::vector<std::pair<double, std::string>> brute;
  for (const auto& [id, v] : vecs) {
    double dot = 0;
    for (int i = 0; i < 4; ++i) dot += v[i] * q[i];
    brute.push_back({-dot, id});
  }
  std::sort(brute.begin(), brute.end());
  const auto got = dense_search(store, q, 3).entries();
  ASSERT_EQ(got.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(got[i], brute[i].second);
}

TEST(DenseSearchTest, RejectsBadInput) {
  EXPECT_THROW(DenseStore::build({{"x", {1, 0}}, {"y", {1, 0, 0}}}), InvalidInput);
  EXPECT_THROW(DenseStore::build({{"x", {0, 0}}}), InvalidInput);
  const auto store = DenseStore::build({{"x", {1, 0}}});
  const std::vector<double> wrong{1, 0, 0};
  const std::vector<double> zero{0, 0};
  EXPECT_THROW(dense_search(store, wrong, 1), InvalidInput);
  EXPECT_THROW(dense_search(store, zero, 1), InvalidInput);
}

TEST(DenseRetrieverTest, UsesEmbedderAndDocuments) {
  auto store = std::make_shared<const DenseStore>(
      DenseStore::build({{"x", {1, 0}}, {"y", {0, 1}}}));
  auto docs = std::make_shared<const DocumentMap>(
      std::vector<Document>{{"x", "about x"}, {"y", "about y"}});
  DenseRetriever retriever(store, docs, [](std::string_view q) {
    return q == "y?" ? std::vector<double>{0.1, 1} : std::vector<double>{1, 0.1};
  });
  EXPECT_EQ(retriever.retrieve("y?", 1).entries(), (Ids{"y"}));
  EXPECT_EQ(retriever.documents().find("x")->text, "about x");

  auto partial = std::make_shared<const DocumentMap>(std::vector<Document>{{"x", "about x"}});
  EXPECT_THROW(DenseRetriever(store, partial, {}), InvalidInput);
}

}  // namespace
}  // namespace smr
