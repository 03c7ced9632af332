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

#include "smr/engine.hpp"
#include "smr/error.hpp"
#include "smr/eval.hpp"
#include "support/gen.hpp"
#include "support/oracles.hpp"

namespace smr {
namespace {

using Ids = std::vector<std::string>;

// Frozen from an independent term-by-term evaluation.
constexpr double kNdcgExample = 0.7039180890341347;

Grades grades(std::initializer_list<std::pair<const char*, int>> items) {
  Grades g;
  for (const auto& [id, v] : items) g[id] = v;
  return g;
}

TEST(NdcgTest, SpecExamples) {
  const Ids ranking{"d1", "d2", "d3"};
  const auto g = grades({{"d1", 1}, {"d3", 1}, {"d5", 1}});
  EXPECT_NEAR(ndcg_at_k(ranking, g), kNdcgExample, 1e-9);
  EXPECT_NEAR(smr_test::oracle_ndcg(ranking, {{"d1", 1}, {"d3", 1}, {"d5", 1}}), kNdcgExample, 1e-12);

  EXPECT_DOUBLE_EQ(ndcg_at_k(Ids{"a", "b"}, grades({{"a", 3}, {"b", 1}})), 1.0);
  EXPECT_EQ(ndcg_at_k(Ids{"x", "y"}, grades({{"a", 2}})), 0.0);
  EXPECT_EQ(ndcg_at_k(Ids{"x"}, grades({{"x", 0}})), 0.0);
}

TEST(NdcgTest, OnlyTopKCounts) {
  Ids ranking = smr_test::make_ids(12);
  const auto g = grades({{"d11", 2}});
  EXPECT_EQ(ndcg_at_k(ranking, g, 10), 0.0);
  EXPECT_GT(ndcg_at_k(ranking, g, 12), 0.0);
}

TEST(MapTest, SpecExamples) {
  EXPECT_DOUBLE_EQ(map_at_k(Ids{"d2", "d1"}, grades({{"d1", 1}})), 0.5);
  EXPECT_EQ(map_at_k(Ids{"x"}, grades({{"d1", 1}})), 0.0);
  Grades many;
  for (const auto& id : smr_test::make_ids(15)) many[id] = 1;
  EXPECT_DOUBLE_EQ(map_at_k(smr_test::make_ids(10), many), 1.0);
}

TEST(RecallTest, SpecExamples) {
  const auto g = grades({{"a", 1}, {"b", 2}, {"c", 1}, {"d", 3}});
  EXPECT_DOUBLE_EQ(recall_at_k(Ids{"a", "b", "c", "d"}, g), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k(Ids{"a", "x", "d"}, g), 0.5);
}

TEST(RecallTest, RandomFiftyDocInstance) {
  smr_test::Rng rng(50);
  const auto pool = smr_test::make_ids(50);
  const auto g = smr_test::random_grades(pool, rng);
  const auto ranking = smr_test::shuffled(pool, rng);
  EXPECT_NEAR(recall_at_k(ranking, smr_test::to_grades(g)), smr_test::oracle_recall(ranking, g), 1e-12);
}

TEST(MetricsTest, ParseList) {
  EXPECT_EQ(parse_metrics("ndcg@10, map@10,recall@10").size(), 3u);
  EXPECT_EQ(parse_metrics("ndcg@10,ndcg@10").size(), 1u);
  EXPECT_THROW(parse_metrics("p@5"), InvalidInput);
  EXPECT_THROW(parse_metrics(""), InvalidInput);
}

TEST(QrelsTest, LoadTrec) {
  std::istringstream in("q1 0 d1 2\nq1 0 d2 0\n\nq2 Q0 d9 1\n");
  const auto qrels = Qrels::load_trec(in);
  EXPECT_EQ(qrels.size(), 2u);
  EXPECT_EQ(qrels.find("q1")->at("d1"), 2);
  EXPECT_EQ(qrels.find("nope"), nullptr);

  std::istringstream bad("q1 0 d1 2\nq1 0 d2\n");
  try {
    Qrels::load_trec(bad);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream negative("q1 0 d1 -1\n");
  EXPECT_THROW(Qrels::load_trec(negative), InvalidInput);
}

TEST(EvaluateRunTest, ExcludesUnjudgeableAndFailedQueries) {
  Qrels qrels;
  qrels.add("q1", "d1", 1);
  qrels.add("q3", "d1", 0);
  std::vector<RunEntry> run{{"q1", {"d1"}, 2, 30, "policy-stop", ""},
                            {"q2", {"d1"}, 1, 10, "policy-stop", ""},
                            {"q3", {"d1"}, 1, 10, "policy-stop", ""},
                            {"q4", {}, 0, 0, "", "boom"}};
  const std::vector<Metric> metrics{Metric::kNdcg10, Metric::kRecall10};
  const auto report = evaluate_run(run, qrels, metrics);
  EXPECT_EQ(report.per_query.size(), 1u);
  ASSERT_EQ(report.excluded.size(), 3u);
  EXPECT_EQ(report.excluded[0].reason, "no-qrels");
  EXPECT_EQ(report.excluded[1].reason, "no-relevant");
  EXPECT_EQ(report.excluded[2].reason, "failed");
  EXPECT_DOUBLE_EQ(report.aggregate.at(Metric::kNdcg10), 1.0);
  EXPECT_DOUBLE_EQ(report.mean_steps, 2.0);
  EXPECT_EQ(report.total_output_tokens, 50u);

  const auto json = to_json(report);
  EXPECT_EQ(json.at("aggregate").at("excluded_queries"), 3);
  EXPECT_TRUE(json.at("per_query").contains("q1"));
  std::ostringstream csv;
  write_csv(report, csv);
  EXPECT_EQ(csv.str(), "query_id,ndcg@10,recall@10,steps,output_tokens\nq1,1,1,2,30\n");

  std::vector<RunEntry> dup{run[0], run[0]};
  EXPECT_THROW(evaluate_run(dup, qrels, metrics), InvalidInput);
}

TEST(LoadRunTest, ReadsSuccessAndFailureRecords) {
  std::istringstream in(
      R"({"query_id":"a","final_query":"x","ranked_doc_ids":["d1"],"stop_cause":"step-cap","steps":16,"output_tokens":9})"
      "\n"
      R"({"query_id":"b","error":"bad"})"
      "\n");
  const auto run = load_run(in);
  ASSERT_EQ(run.size(), 2u);
  EXPECT_EQ(run[0].steps, 16u);
  EXPECT_EQ(run[1].error, "bad");
  std::istringstream bad("{\"query_id\": 1}\n");
  EXPECT_THROW(load_run(bad), InvalidInput);
}

// Trace of one query with the given actions (all refines are novel).
std::string synthetic_trace(const std::string& qid, const std::vector<std::string>& actions,
                            const std::vector<std::uint64_t>& tokens) {
  std::ostringstream out;
  std::uint64_t total = 0;
  std::size_t steps = 0;
  Ids docs{"d0"};
  for (std::size_t i = 0; i < actions.size(); ++i) {
    nlohmann::ordered_json rec{{"type", "transition"}, {"query_id", qid}, {"step", i + 1},
                               {"action", actions[i]}};
    if (actions[i] == "refine") docs.push_back("d" + std::to_string(i + 1));
    if (actions[i] == "rerank") std::reverse(docs.begin(), docs.end());
    if (actions[i] != "stop") ++steps;
    rec["query"] = "q";
    rec["doc_ids"] = docs;
    rec["output_tokens"] = tokens[i];
    total += tokens[i];
    out << rec.dump() << '\n';
  }
  out << nlohmann::ordered_json{{"type", "summary"}, {"query_id", qid}, {"initial_query", "q"},
                                {"initial_doc_ids", Ids{"d0"}}, {"steps", steps},
                                {"output_tokens", total}, {"stop_cause", "policy-stop"}}
             .dump()
      << '\n';
  return out.str();
}

TEST(AnalyzeTracesTest, ThreeStepQueryFillsThreeBins) {
  std::istringstream in(synthetic_trace("q", {"refine", "rerank", "refine", "stop"}, {1, 1, 1, 1}));
  const auto a = analyze_traces(in);
  EXPECT_EQ(a.step_depth_cumulative, (std::vector<std::size_t>{1, 1, 1}));
  EXPECT_EQ(a.action_histogram.at("refine"), 2u);
  EXPECT_EQ(a.action_histogram.at("rerank"), 1u);
  EXPECT_EQ(a.rankings_by_depth.at("q").size(), 4u);
}

TEST(AnalyzeTracesTest, AllImmediateStops) {
  std::istringstream in(synthetic_trace("a", {"stop"}, {3}) + synthetic_trace("b", {"stop"}, {4}));
  const auto a = analyze_traces(in);
  EXPECT_TRUE(a.action_histogram.empty());
  EXPECT_TRUE(a.step_depth_cumulative.empty());
  EXPECT_EQ(a.total_output_tokens, 7u);
}

TEST(AnalyzeTracesTest, TokenTotalsAddUp) {
  // 47 for the first refine, 67 for the final rerank, 138 for the rest.
  std::istringstream in(synthetic_trace(
      "q", {"refine", "refine", "rerank", "refine", "rerank", "stop"}, {47, 40, 30, 28, 67, 40}));
  const auto a = analyze_traces(in);
  EXPECT_EQ(a.tokens_per_query.at("q"), 252u);
  EXPECT_EQ(a.total_output_tokens, 252u);
}

TEST(AnalyzeTracesTest, RejectsInconsistentTraces) {
  auto text = synthetic_trace("q", {"refine", "stop"}, {5, 5});
  text.replace(text.find("\"output_tokens\":10"), 18, "\"output_tokens\":11");
  std::istringstream bad_total(text);
  EXPECT_THROW(analyze_traces(bad_total), InvalidInput);

  std::istringstream no_summary(
      R"({"type":"transition","query_id":"q","step":1,"action":"stop","query":"q","doc_ids":[],"output_tokens":1})"
      "\n");
  EXPECT_THROW(analyze_traces(no_summary), InvalidInput);

  std::istringstream broken("\n{\"type\": \"transition\"\n");
  try {
    analyze_traces(broken);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(NdcgByDepthTest, AveragesOverQueriesReachingEachDepth) {
  std::istringstream in(synthetic_trace("a", {"refine", "stop"}, {1, 1}) +
                        synthetic_trace("b", {"stop"}, {1}));
  const auto a = analyze_traces(in);
  Qrels qrels;
  qrels.add("a", "d1", 1);
  qrels.add("b", "d0", 1);
  const auto curve = ndcg_by_depth(a, qrels);
  ASSERT_EQ(curve.size(), 2u);
  // depth 0: a has nothing relevant, b is perfect.
  EXPECT_DOUBLE_EQ(curve[0], 0.5);
  EXPECT_NEAR(curve[1], 1.0 / std::log2(3.0), 1e-12);
}

TEST(AlignmentTest, PromptAndScoreParsing) {
  const auto prompt = render_alignment_prompt("orig", "new", "A={query_original} B={query}");
  EXPECT_EQ(prompt, "A=orig B=new");
  EXPECT_DOUBLE_EQ(parse_alignment_score("0.95"), 0.95);
  EXPECT_DOUBLE_EQ(parse_alignment_score("Score: 1.2"), 1.0);
  EXPECT_DOUBLE_EQ(parse_alignment_score("-3"), 0.0);
  EXPECT_DOUBLE_EQ(parse_alignment_score(".5 is my answer"), 0.5);
  EXPECT_THROW(parse_alignment_score("no idea"), ParseError);
}

TEST(AlignmentTest, JudgeGetsTheRenderedPromptAndEscalates) {
  ScriptedBackend judge(std::vector<std::string>{"hmm", "1.0"});
  EXPECT_DOUBLE_EQ(intent_alignment("same", "same", judge), 1.0);
  ASSERT_EQ(judge.requests().size(), 2u);
  EXPECT_EQ(judge.requests()[0].system_text, "");
  EXPECT_NE(judge.requests()[0].user_text.find("same"), std::string::npos);
  EXPECT_EQ(judge.requests()[0].user_text.find("{query"), std::string::npos);
  EXPECT_DOUBLE_EQ(judge.requests()[1].temperature, 0.1);

  ScriptedBackend hopeless(std::vector<std::string>(6, "?"));
  EXPECT_THROW(intent_alignment("a", "b", hopeless), EvaluationError);
}

TEST(AlignmentTest, EvaluateOverTrace) {
  std::istringstream in(synthetic_trace("a", {"refine", "refine", "stop"}, {1, 1, 1}) +
                        synthetic_trace("b", {"refine", "stop"}, {1, 1}) +
                        synthetic_trace("c", {"stop"}, {1}));
  const auto records = read_jsonl(in, "trace");
  const auto report = evaluate_alignment(records, [](const std::string& id) {
    return std::make_unique<ScriptedBackend>(
        id == "a" ? std::vector<std::string>{"0.8", "0.6"} : std::vector<std::string>{"1.0"});
  });
  EXPECT_EQ(report.scored_pairs, 3u);
  ASSERT_EQ(report.per_step_mean.size(), 2u);
  EXPECT_DOUBLE_EQ(report.per_step_mean[0], 0.9);
  EXPECT_DOUBLE_EQ(report.per_step_mean[1], 0.6);
  EXPECT_NEAR(report.mean_over_steps, 0.8, 1e-12);
  EXPECT_NEAR(report.mean_over_queries, 0.85, 1e-12);
  EXPECT_TRUE(report.failures.empty());
}

}  // namespace
}  // namespace smr
