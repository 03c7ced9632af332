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

// Ranking metrics, run evaluation against qrels, trace analytics and the
// query-intent alignment judge.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "smr/llm.hpp"
#include "smr/policy.hpp"
#include "smr/retrieval.hpp"

namespace smr {

// doc_id -> graded relevance; absent documents have grade 0.
using Grades = StringMap<int>;

class Qrels {
 public:
  // TREC format: "query_id iteration doc_id grade" per line.
  static Qrels load_trec(std::istream& in);

  // Throws InvalidInput on a negative grade.
  void add(std::string query_id, std::string doc_id, int grade);
  const Grades* find(std::string_view query_id) const;
  std::size_t size() const noexcept { return by_query_.size(); }

 private:
  StringMap<Grades> by_query_;
};

// True when some document has grade >= 1.
bool has_relevant(const Grades& grades);

// Exponential-gain nDCG; the ideal ordering ranks every judged document, not
// only the retrieved ones. 0 when nothing is relevant.
double ndcg_at_k(std::span<const std::string> ranking, const Grades& grades, std::size_t k = 10);
// Grades >= 1 count as relevant; AP is normalized by min(R, k).
double map_at_k(std::span<const std::string> ranking, const Grades& grades, std::size_t k = 10);
double recall_at_k(std::span<const std::string> ranking, const Grades& grades, std::size_t k = 10);

enum class Metric { kNdcg10, kMap10, kRecall10 };

std::string_view metric_name(Metric metric);
// Comma-separated subset of "ndcg@10,map@10,recall@10".
std::vector<Metric> parse_metrics(std::string_view list);
double compute_metric(Metric metric, std::span<const std::string> ranking, const Grades& grades);

struct RunEntry {
  std::string query_id;
  std::vector<std::string> ranking;
  std::size_t steps = 0;
  std::uint64_t output_tokens = 0;
  std::string stop_cause;
  std::string error;  // non-empty for a failed trajectory
};

std::vector<RunEntry> load_run(std::istream& in);

struct QueryScores {
  std::map<Metric, double> metrics;
  std::size_t steps = 0;
  std::uint64_t output_tokens = 0;
};

struct ExcludedQuery {
  std::string query_id;
  std::string reason;  // "no-qrels", "no-relevant" or "failed"
};

struct TraceAnalytics {
  std::map<std::string, std::size_t> action_histogram;  // refine / rerank
  // Entry i counts queries with at least i + 1 non-stop transitions.
  std::vector<std::size_t> step_depth_cumulative;
  std::map<std::string, std::uint64_t> tokens_per_query;
  std::map<std::string, std::size_t> steps_per_query;
  std::uint64_t total_output_tokens = 0;
  // Per query: the ranking after 0, 1, 2, ... non-stop transitions.
  std::map<std::string, std::vector<std::vector<std::string>>> rankings_by_depth;
};

// Throws InvalidInput naming the line of the first malformed record.
TraceAnalytics analyze_traces(std::istream& trace);

// Mean nDCG@10 over judgeable queries that reached each depth (index 0 is the
// initial retrieval).
std::vector<double> ndcg_by_depth(const TraceAnalytics& analytics, const Qrels& qrels);

struct EvalReport {
  std::vector<Metric> metrics;
  std::map<std::string, QueryScores> per_query;
  std::map<Metric, double> aggregate;
  double mean_steps = 0.0;
  double mean_output_tokens = 0.0;
  std::uint64_t total_output_tokens = 0;
  std::vector<ExcludedQuery> excluded;
  std::map<std::string, std::size_t> action_histogram;
  std::vector<std::size_t> step_depth_cumulative;
  std::vector<double> ndcg_by_depth;
};

EvalReport evaluate_run(std::span<const RunEntry> run, const Qrels& qrels,
                        std::span<const Metric> metrics);
// Fills the histogram, depth bins and depth curve from a trace.
void attach_trace_analytics(EvalReport& report, const TraceAnalytics& analytics,
                            const Qrels& qrels);

nlohmann::ordered_json to_json(const EvalReport& report);
void write_csv(const EvalReport& report, std::ostream& out);

// Fills the judge prompt's {query_original} and {query} placeholders.
std::string render_alignment_prompt(std::string_view original_query, std::string_view refined_query,
                                     std::string_view prompt_template);

// First decimal number in `reply`, clamped to [0, 1]. Throws ParseError.
double parse_alignment_score(std::string_view reply);

// Asks the judge how well `refined_query` keeps the intent of
// `original_query`, retrying unparseable replies on the escalation schedule.
// Throws EvaluationError when every attempt fails.
double intent_alignment(std::string_view original_query, std::string_view refined_query,
                        ChatBackend& judge, const PolicyConfig& escalation = {});

struct AlignmentReport {
  // Entry j: mean score of the (j + 1)-th refinement across queries.
  std::vector<double> per_step_mean;
  std::vector<std::size_t> per_step_count;
  std::map<std::string, double> per_query_mean;
  double mean_over_steps = 0.0;    // every refinement weighted equally
  double mean_over_queries = 0.0;  // every query weighted equally
  std::size_t scored_pairs = 0;
  std::vector<std::string> failures;
};

using JudgeFactory = std::function<std::unique_ptr<ChatBackend>(const std::string& query_id)>;

// Scores every Refine transition in a trace against the query's initial query.
AlignmentReport evaluate_alignment(std::span<const nlohmann::json> trace_records,
                                   const JudgeFactory& judge_factory,
                                   const PolicyConfig& escalation = {});

nlohmann::ordered_json to_json(const AlignmentReport& report);

}  // namespace smr
