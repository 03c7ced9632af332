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

#include "smr/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "smr/error.hpp"
#include "smr/prompts.hpp"

namespace smr {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

int grade_of(const Grades& grades, std::string_view doc_id) {
  const auto it = grades.find(doc_id);
  return it == grades.end() ? 0 : it->second;
}

std::size_t relevant_count(const Grades& grades) {
  return static_cast<std::size_t>(std::count_if(grades.begin(), grades.end(),
                                                [](const auto& g) { return g.second >= 1; }));
}

double gain(int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; }

double discount(std::size_t rank0) { return std::log2(static_cast<double>(rank0) + 2.0); }

ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void trace_error(std::size_t line_no, const std::string& what) {
  throw InvalidInput("trace line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

Qrels Qrels::load_trec(std::istream& in) {
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_whitespace(line).empty()) continue;
    std::istringstream fields(line);
    std::string query_id, iteration, doc_id, grade_text, extra;
    if (!(fields >> query_id >> iteration >> doc_id >> grade_text) || (fields >> extra)) {
      throw InvalidInput("qrels line " + std::to_string(line_no) +
                         ": expected 'query_id 0 doc_id grade'");
    }
    int grade = 0;
    const auto [ptr, ec] = std::from_chars(grade_text.data(), grade_text.data() + grade_text.size(), grade);
    if (ec != std::errc{} || ptr != grade_text.data() + grade_text.size()) {
      throw InvalidInput("qrels line " + std::to_string(line_no) + ": grade '" + grade_text +
                         "' is not an integer");
    }
    try {
      qrels.add(std::move(query_id), std::move(doc_id), grade);
    } catch (const InvalidInput& e) {
      throw InvalidInput("qrels line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return qrels;
}

void Qrels::add(std::string query_id, std::string doc_id, int grade) {
  if (grade < 0) throw InvalidInput("negative relevance grade for " + doc_id);
  by_query_[std::move(query_id)][std::move(doc_id)] = grade;
}

const Grades* Qrels::find(std::string_view query_id) const {
  const auto it = by_query_.find(query_id);
  return it == by_query_.end() ? nullptr : &it->second;
}

bool has_relevant(const Grades& grades) { return relevant_count(grades) > 0; }

double ndcg_at_k(std::span<const std::string> ranking, const Grades& grades, std::size_t k) {
  std::vector<int> ideal;
  for (const auto& [_, g] : grades) {
    if (g > 0) ideal.push_back(g);
  }
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += gain(ideal[i]) / discount(i);
  if (idcg == 0.0) return 0.0;

  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    dcg += gain(grade_of(grades, ranking[i])) / discount(i);
  }
  return dcg / idcg;
}

double map_at_k(std::span<const std::string> ranking, const Grades& grades, std::size_t k) {
  const auto relevant = relevant_count(grades);
  if (relevant == 0) return 0.0;
  std::size_t hits = 0;
  double precision_sum = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    if (grade_of(grades, ranking[i]) >= 1) {
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return precision_sum / static_cast<double>(std::min(relevant, k));
}

double recall_at_k(std::span<const std::string> ranking, const Grades& grades, std::size_t k) {
  const auto relevant = relevant_count(grades);
  if (relevant == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    if (grade_of(grades, ranking[i]) >= 1) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(relevant);
}

std::string_view metric_name(Metric metric) {
  switch (metric) {
    case Metric::kNdcg10: return "ndcg@10";
    case Metric::kMap10: return "map@10";
    case Metric::kRecall10: return "recall@10";
  }
  return "unknown";
}

std::vector<Metric> parse_metrics(std::string_view list) {
  std::vector<Metric> out;
  while (!list.empty()) {
    const auto comma = list.find(',');
    const auto item = trim_whitespace(list.substr(0, comma));
    list = comma == std::string_view::npos ? std::string_view{} : list.substr(comma + 1);
    if (item.empty()) continue;
    std::optional<Metric> found;
    for (auto m : {Metric::kNdcg10, Metric::kMap10, Metric::kRecall10}) {
      if (metric_name(m) == item) found = m;
    }
    if (!found) {
      throw InvalidInput("unknown metric '" + std::string(item) +
                         "' (expected ndcg@10, map@10 or recall@10)");
    }
    if (std::find(out.begin(), out.end(), *found) == out.end()) out.push_back(*found);
  }
  if (out.empty()) throw InvalidInput("no metrics selected");
  return out;
}

double compute_metric(Metric metric, std::span<const std::string> ranking, const Grades& grades) {
  switch (metric) {
    case Metric::kNdcg10: return ndcg_at_k(ranking, grades, 10);
    case Metric::kMap10: return map_at_k(ranking, grades, 10);
    case Metric::kRecall10: return recall_at_k(ranking, grades, 10);
  }
  return 0.0;
}

std::vector<RunEntry> load_run(std::istream& in) {
  std::vector<RunEntry> run;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_whitespace(line).empty()) continue;
    try {
      const auto rec = json::parse(line);
      RunEntry entry;
      entry.query_id = rec.at("query_id").get<std::string>();
      if (rec.contains("error")) {
        entry.error = rec.at("error").get<std::string>();
        if (entry.error.empty()) entry.error = "unknown failure";
      } else {
        entry.ranking = rec.at("ranked_doc_ids").get<std::vector<std::string>>();
        entry.steps = rec.at("steps").get<std::size_t>();
        entry.output_tokens = rec.at("output_tokens").get<std::uint64_t>();
        entry.stop_cause = rec.at("stop_cause").get<std::string>();
      }
      run.push_back(std::move(entry));
    } catch (const json::exception& e) {
      throw InvalidInput("run line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return run;
}

EvalReport evaluate_run(std::span<const RunEntry> run, const Qrels& qrels,
                        std::span<const Metric> metrics) {
  EvalReport report;
  report.metrics.assign(metrics.begin(), metrics.end());
  std::map<Metric, double> sums;
  double steps_sum = 0.0;
  double tokens_sum = 0.0;
  std::unordered_set<std::string_view> seen;

  for (const auto& entry : run) {
    if (!seen.insert(entry.query_id).second) {
      throw InvalidInput("run lists query " + entry.query_id + " twice");
    }
    report.total_output_tokens += entry.output_tokens;
    if (!entry.error.empty()) {
      report.excluded.push_back({entry.query_id, "failed"});
      continue;
    }
    const auto* grades = qrels.find(entry.query_id);
    if (grades == nullptr) {
      report.excluded.push_back({entry.query_id, "no-qrels"});
      continue;
    }
    if (!has_relevant(*grades)) {
      report.excluded.push_back({entry.query_id, "no-relevant"});
      continue;
    }
    QueryScores scores;
    scores.steps = entry.steps;
    scores.output_tokens = entry.output_tokens;
    for (auto m : report.metrics) {
      const double v = compute_metric(m, entry.ranking, *grades);
      scores.metrics[m] = v;
      sums[m] += v;
    }
    steps_sum += static_cast<double>(entry.steps);
    tokens_sum += static_cast<double>(entry.output_tokens);
    report.per_query.emplace(entry.query_id, std::move(scores));
  }

  const auto n = static_cast<double>(report.per_query.size());
  for (auto m : report.metrics) {
    report.aggregate[m] = report.per_query.empty() ? 0.0 : sums[m] / n;
  }
  if (!report.per_query.empty()) {
    report.mean_steps = steps_sum / n;
    report.mean_output_tokens = tokens_sum / n;
  }
  return report;
}

TraceAnalytics analyze_traces(std::istream& trace) {
  struct Pending {
    std::size_t last_step = 0;
    std::size_t depth = 0;
    std::uint64_t tokens = 0;
    bool summarized = false;
    std::vector<std::vector<std::string>> rankings;  // after each non-stop transition
  };
  std::map<std::string, Pending> queries;
  TraceAnalytics out;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(trace, line)) {
    ++line_no;
    if (trim_whitespace(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      trace_error(line_no, e.what());
    }
    try {
      const auto type = rec.at("type").get<std::string>();
      const auto query_id = rec.at("query_id").get<std::string>();
      auto& q = queries[query_id];
      if (q.summarized) trace_error(line_no, "record after the summary of query " + query_id);

      if (type == "transition") {
        const auto step = rec.at("step").get<std::size_t>();
        if (step != q.last_step + 1) {
          trace_error(line_no, "expected step " + std::to_string(q.last_step + 1));
        }
        q.last_step = step;
        const auto action = rec.at("action").get<std::string>();
        const auto tokens = rec.at("output_tokens").get<std::uint64_t>();
        auto doc_ids = rec.at("doc_ids").get<std::vector<std::string>>();
        q.tokens += tokens;
        if (action == to_string(Action::kRefine) || action == to_string(Action::kRerank)) {
          ++out.action_histogram[action];
          ++q.depth;
          q.rankings.push_back(std::move(doc_ids));
        } else if (action != to_string(Action::kStop)) {
          trace_error(line_no, "unknown action '" + action + "'");
        }
      } else if (type == "summary") {
        q.summarized = true;
        if (rec.contains("error")) {
          if (q.last_step != 0) trace_error(line_no, "failed query with transitions");
          out.tokens_per_query[query_id] = 0;
          out.steps_per_query[query_id] = 0;
          continue;
        }
        if (rec.at("output_tokens").get<std::uint64_t>() != q.tokens) {
          trace_error(line_no, "summary token total disagrees with its transitions");
        }
        if (rec.at("steps").get<std::size_t>() != q.depth) {
          trace_error(line_no, "summary step count disagrees with its transitions");
        }
        auto& rankings = out.rankings_by_depth[query_id];
        rankings.push_back(rec.at("initial_doc_ids").get<std::vector<std::string>>());
        for (auto& r : q.rankings) rankings.push_back(std::move(r));
        out.tokens_per_query[query_id] = q.tokens;
        out.steps_per_query[query_id] = q.depth;
        out.total_output_tokens += q.tokens;
        if (q.depth > out.step_depth_cumulative.size()) out.step_depth_cumulative.resize(q.depth, 0);
        for (std::size_t d = 0; d < q.depth; ++d) ++out.step_depth_cumulative[d];
      } else {
        trace_error(line_no, "unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      trace_error(line_no, e.what());
    }
  }
  for (const auto& [query_id, q] : queries) {
    if (!q.summarized) {
      throw InvalidInput("trace ends without a summary for query " + query_id);
    }
  }
  return out;
}

std::vector<double> ndcg_by_depth(const TraceAnalytics& analytics, const Qrels& qrels) {
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  for (const auto& [query_id, rankings] : analytics.rankings_by_depth) {
    const auto* grades = qrels.find(query_id);
    if (grades == nullptr || !has_relevant(*grades)) continue;
    if (rankings.size() > sums.size()) {
      sums.resize(rankings.size(), 0.0);
      counts.resize(rankings.size(), 0);
    }
    for (std::size_t d = 0; d < rankings.size(); ++d) {
      sums[d] += ndcg_at_k(rankings[d], *grades, 10);
      ++counts[d];
    }
  }
  std::vector<double> means(sums.size());
  for (std::size_t d = 0; d < sums.size(); ++d) means[d] = sums[d] / static_cast<double>(counts[d]);
  return means;
}

void attach_trace_analytics(EvalReport& report, const TraceAnalytics& analytics,
                            const Qrels& qrels) {
  report.action_histogram = analytics.action_histogram;
  report.step_depth_cumulative = analytics.step_depth_cumulative;
  report.ndcg_by_depth = ndcg_by_depth(analytics, qrels);
}

ordered_json to_json(const EvalReport& report) {
  ordered_json out;
  out["metrics"] = json::array();
  for (auto m : report.metrics) out["metrics"].push_back(metric_name(m));

  ordered_json aggregate;
  for (auto m : report.metrics) aggregate[std::string(metric_name(m))] = report.aggregate.at(m);
  aggregate["mean_steps"] = report.mean_steps;
  aggregate["mean_output_tokens"] = report.mean_output_tokens;
  aggregate["total_output_tokens"] = report.total_output_tokens;
  aggregate["evaluated_queries"] = report.per_query.size();
  aggregate["excluded_queries"] = report.excluded.size();
  out["aggregate"] = std::move(aggregate);

  ordered_json per_query = ordered_json::object();
  for (const auto& [query_id, scores] : report.per_query) {
    ordered_json row;
    for (auto m : report.metrics) row[std::string(metric_name(m))] = scores.metrics.at(m);
    row["steps"] = scores.steps;
    row["output_tokens"] = scores.output_tokens;
    per_query[query_id] = std::move(row);
  }
  out["per_query"] = std::move(per_query);

  out["excluded"] = json::array();
  for (const auto& e : report.excluded) {
    out["excluded"].push_back(ordered_json{{"query_id", e.query_id}, {"reason", e.reason}});
  }
  out["action_histogram"] = report.action_histogram;
  out["step_depth_cumulative"] = report.step_depth_cumulative;
  out["ndcg_by_depth"] = json::array();
  for (double v : report.ndcg_by_depth) out["ndcg_by_depth"].push_back(ordered_json(number_or_null(v)));
  return out;
}

void write_csv(const EvalReport& report, std::ostream& out) {
  out << "query_id";
  for (auto m : report.metrics) out << ',' << metric_name(m);
  out << ",steps,output_tokens\n";
  for (const auto& [query_id, scores] : report.per_query) {
    out << query_id;
    for (auto m : report.metrics) out << ',' << format_double(scores.metrics.at(m));
    out << ',' << scores.steps << ',' << scores.output_tokens << '\n';
  }
  if (!out) throw Error("failed to write CSV report");
}

std::string render_alignment_prompt(std::string_view original_query, std::string_view refined_query,
                                     std::string_view prompt_template) {
  std::string out(prompt_template);
  // {query_original} first: {query} is a prefix of it.
  for (const auto& [placeholder, value] :
       {std::pair{std::string_view("{query_original}"), original_query},
        std::pair{std::string_view("{query}"), refined_query}}) {
    for (auto pos = out.find(placeholder); pos != std::string::npos;
         pos = out.find(placeholder, pos + value.size())) {
      out.replace(pos, placeholder.size(), value);
    }
  }
  return out;
}

double parse_alignment_score(std::string_view reply) {
  static const std::regex kNumber(R"([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)");
  std::match_results<std::string_view::const_iterator> match;
  if (!std::regex_search(reply.begin(), reply.end(), match, kNumber)) {
    throw ParseError("no number in judge reply");
  }
  const auto text = match.str();
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(),
                                         value, std::chars_format::general);
  // from_chars rejects a leading '+'.
  if (ec != std::errc{} && !(text.front() == '+' &&
                             std::from_chars(text.data() + 1, text.data() + text.size(), value).ec ==
                                 std::errc{})) {
    throw ParseError("unreadable number '" + text + "' in judge reply");
  }
  (void)ptr;
  if (!std::isfinite(value)) throw ParseError("non-finite score in judge reply");
  return std::clamp(value, 0.0, 1.0);
}

double intent_alignment(std::string_view original_query, std::string_view refined_query,
                        ChatBackend& judge, const PolicyConfig& escalation) {
  if (trim_whitespace(original_query).empty() || trim_whitespace(refined_query).empty()) {
    throw InvalidInput("alignment needs two non-empty queries");
  }
  escalation.validate();
  const auto prompt =
      render_alignment_prompt(original_query, refined_query, default_alignment_prompt());
  std::string last_error;
  for (std::size_t attempt = 0; attempt < escalation.max_attempts; ++attempt) {
    ChatRequest request{"", prompt, escalation.temperature_for_attempt(attempt),
                        escalation.max_output_tokens};
    const auto response = judge.chat(request);
    try {
      return parse_alignment_score(response.text);
    } catch (const ParseError& e) {
      last_error = e.what();
    }
  }
  throw EvaluationError("judge gave no usable score after " +
                        std::to_string(escalation.max_attempts) + " attempts: " + last_error);
}

AlignmentReport evaluate_alignment(std::span<const json> trace_records,
                                   const JudgeFactory& judge_factory,
                                   const PolicyConfig& escalation) {
  struct QueryRefines {
    std::string initial_query;
    std::vector<std::string> refined;
  };
  std::map<std::string, QueryRefines> by_query;
  for (const auto& rec : trace_records) {
    const auto query_id = rec.value("query_id", "");
    const auto type = rec.value("type", "");
    if (type == "summary" && !rec.contains("error")) {
      by_query[query_id].initial_query = rec.value("initial_query", "");
    } else if (type == "transition" && rec.value("action", "") == to_string(Action::kRefine)) {
      by_query[query_id].refined.push_back(rec.value("query", ""));
    }
  }

  AlignmentReport report;
  std::vector<double> step_sums;
  double all_sum = 0.0;
  double query_mean_sum = 0.0;
  for (const auto& [query_id, q] : by_query) {
    if (q.refined.empty() || q.initial_query.empty()) continue;
    auto judge = judge_factory(query_id);
    double query_sum = 0.0;
    std::size_t query_count = 0;
    for (std::size_t j = 0; j < q.refined.size(); ++j) {
      double score = 0.0;
      try {
        score = intent_alignment(q.initial_query, q.refined[j], *judge, escalation);
      } catch (const Error& e) {
        report.failures.push_back(query_id + " refinement " + std::to_string(j + 1) + ": " +
                                  e.what());
        continue;
      }
      if (j >= step_sums.size()) {
        step_sums.resize(j + 1, 0.0);
        report.per_step_count.resize(j + 1, 0);
      }
      step_sums[j] += score;
      ++report.per_step_count[j];
      query_sum += score;
      ++query_count;
      all_sum += score;
      ++report.scored_pairs;
    }
    if (query_count > 0) {
      const double mean = query_sum / static_cast<double>(query_count);
      report.per_query_mean[query_id] = mean;
      query_mean_sum += mean;
    }
  }
  report.per_step_mean.resize(step_sums.size());
  for (std::size_t j = 0; j < step_sums.size(); ++j) {
    report.per_step_mean[j] = report.per_step_count[j] == 0
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : step_sums[j] / static_cast<double>(report.per_step_count[j]);
  }
  if (report.scored_pairs > 0) {
    report.mean_over_steps = all_sum / static_cast<double>(report.scored_pairs);
    report.mean_over_queries = query_mean_sum / static_cast<double>(report.per_query_mean.size());
  }
  return report;
}

ordered_json to_json(const AlignmentReport& report) {
  ordered_json out;
  out["mean_over_steps"] = report.mean_over_steps;
  out["mean_over_queries"] = report.mean_over_queries;
  out["scored_pairs"] = report.scored_pairs;
  out["per_step_mean"] = json::array();
  for (double v : report.per_step_mean) out["per_step_mean"].push_back(ordered_json(number_or_null(v)));
  out["per_step_count"] = report.per_step_count;
  out["per_query_mean"] = report.per_query_mean;
  out["failures"] = report.failures;
  return out;
}

}  // namespace smr
