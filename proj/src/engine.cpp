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

#include "smr/engine.hpp"

#include <algorithm>
#include <atomic>
#include <istream>
#include <ostream>
#include <thread>
#include <unordered_set>

#include "smr/actions.hpp"
#include "smr/error.hpp"

namespace smr {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string dump_line(const ordered_json& record) {
  return record.dump(-1, ' ', false, json::error_handler_t::replace);
}

json reason_value(const Decision& d) {
  return d.reason() ? json(*d.reason()) : json(nullptr);
}

}  // namespace

void EngineConfig::validate() const {
  if (k == 0) throw InvalidInput("k must be at least 1");
  if (max_steps == 0) throw InvalidInput("max_steps must be at least 1");
  if (batch_size == 0) throw InvalidInput("batch_size must be at least 1");
  if (max_list_size < k) throw InvalidInput("max_list_size must be at least k");
  policy.validate();
}

Trajectory run_trajectory(std::string_view query, const Retriever& retriever, ChatBackend& backend,
                          const EngineConfig& config) {
  config.validate();
  if (trim_whitespace(query).empty()) throw InvalidInput("query must be non-empty");

  Trajectory trajectory;
  trajectory.initial = ReasoningState{std::string(query), retriever.retrieve(query, config.k), 0};
  ReasoningState current = trajectory.initial;
  std::size_t non_stop = 0;

  for (;;) {
    auto outcome = decide(current, retriever.documents(), backend, config.policy);
    Transition step;
    step.decision = std::move(outcome.decision);
    step.pre_state = current;
    step.output_tokens = outcome.output_tokens;
    step.temperature = outcome.temperature_used;
    step.policy_attempts = outcome.attempts.size();

    switch (step.decision.action()) {
      case Action::kStop:
        step.post_state = current;
        trajectory.transitions.push_back(std::move(step));
        trajectory.stop_cause =
            outcome.fell_back ? StopCause::kPolicyFailureFallback : StopCause::kPolicyStop;
        return trajectory;
      case Action::kRefine:
        step.post_state = exec_refine(current, step.decision.refined_query(), retriever, config.k,
                                      config.max_list_size);
        break;
      case Action::kRerank: {
        auto result = exec_rerank(current, step.decision.reranked_ids());
        step.post_state = std::move(result.state);
        step.sanitize = std::move(result.report);
        break;
      }
    }

    ++non_stop;
    const bool equivalent = state_equivalent(step.post_state, current);
    current = step.post_state;
    trajectory.transitions.push_back(std::move(step));
    if (equivalent) {
      trajectory.stop_cause = StopCause::kEquivalenceStop;
      return trajectory;
    }
    if (non_stop >= config.max_steps) {
      trajectory.stop_cause = StopCause::kStepCap;
      return trajectory;
    }
  }
}

std::vector<BatchResult> run_batch(std::span<const QueryRecord> queries, const Retriever& retriever,
                                   const BackendFactory& backend_factory, const EngineConfig& config) {
  config.validate();
  std::vector<BatchResult> results(queries.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (auto i = next.fetch_add(1); i < queries.size(); i = next.fetch_add(1)) {
      auto& slot = results[i];
      slot.query = queries[i];
      try {
        auto backend = backend_factory(queries[i]);
        if (!backend) throw InvalidInput("backend factory returned no backend");
        slot.trajectory = run_trajectory(queries[i].text, retriever, *backend, config);
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    }
  };

  const auto workers = std::min(config.batch_size, queries.size());
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  return results;
}

void emit_trace(std::string_view query_id, const Trajectory& trajectory, std::ostream& sink) {
  const auto& transitions = trajectory.transitions;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const auto& t = transitions[i];
    ordered_json rec;
    rec["type"] = "transition";
    rec["query_id"] = query_id;
    rec["step"] = i + 1;
    rec["action"] = to_string(t.decision.action());
    rec["query"] = t.post_state.query;
    rec["doc_ids"] = t.post_state.docs.entries();
    rec["reason"] = reason_value(t.decision);
    rec["output_tokens"] = t.output_tokens;
    rec["temperature"] = t.temperature;
    rec["attempts"] = t.policy_attempts;
    if (t.decision.action() == Action::kRerank) {
      rec["proposed"] = t.decision.reranked_ids();
      rec["dropped_ids"] = t.sanitize.dropped_ids;
      rec["duplicate_ids"] = t.sanitize.duplicate_ids;
      rec["reappended_ids"] = t.sanitize.reappended_ids;
    }
    if (i + 1 == transitions.size()) rec["stop_cause"] = to_string(trajectory.stop_cause);
    sink << dump_line(rec) << '\n';
  }
  const auto& final_state = trajectory.final_state();
  ordered_json summary;
  summary["type"] = "summary";
  summary["query_id"] = query_id;
  summary["initial_query"] = trajectory.initial.query;
  summary["initial_doc_ids"] = trajectory.initial.docs.entries();
  summary["transitions"] = transitions.size();
  summary["steps"] = trajectory.non_stop_count();
  summary["output_tokens"] = trajectory.total_output_tokens();
  summary["stop_cause"] = to_string(trajectory.stop_cause);
  summary["final_query"] = final_state.query;
  summary["final_doc_ids"] = final_state.docs.entries();
  sink << dump_line(summary) << '\n';
  if (!sink) throw Error("failed to write trace record");
}

void emit_trace(const BatchResult& result, std::ostream& sink) {
  if (result.trajectory) {
    emit_trace(result.query.query_id, *result.trajectory, sink);
    return;
  }
  ordered_json summary;
  summary["type"] = "summary";
  summary["query_id"] = result.query.query_id;
  summary["initial_query"] = result.query.text;
  summary["error"] = result.error;
  sink << dump_line(summary) << '\n';
  if (!sink) throw Error("failed to write trace record");
}

ordered_json run_record(const BatchResult& result) {
  ordered_json rec;
  rec["query_id"] = result.query.query_id;
  if (!result.trajectory) {
    rec["error"] = result.error;
    return rec;
  }
  const auto& t = *result.trajectory;
  rec["final_query"] = t.final_state().query;
  rec["ranked_doc_ids"] = t.final_state().docs.entries();
  rec["stop_cause"] = to_string(t.stop_cause);
  rec["steps"] = t.non_stop_count();
  rec["output_tokens"] = t.total_output_tokens();
  return rec;
}

void write_run_file(std::span<const BatchResult> results, std::ostream& sink) {
  for (const auto& r : results) sink << dump_line(run_record(r)) << '\n';
  if (!sink) throw Error("failed to write run file");
}

std::vector<json> read_jsonl(std::istream& in, std::string_view what) {
  std::vector<json> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_whitespace(line).empty()) continue;
    try {
      records.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw InvalidInput(std::string(what) + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!records.back().is_object()) {
      throw InvalidInput(std::string(what) + " line " + std::to_string(line_no) +
                         ": expected a JSON object");
    }
  }
  return records;
}

RankedList replay_trace(std::span<const json> records, std::string_view query_id,
                        const Retriever& retriever, const EngineConfig& config) {
  config.validate();
  const json* summary = nullptr;
  std::vector<const json*> steps;
  for (const auto& rec : records) {
    if (rec.value("query_id", "") != query_id) continue;
    if (rec.value("type", "") == "summary") {
      summary = &rec;
    } else {
      steps.push_back(&rec);
    }
  }
  if (summary == nullptr) throw NotFound("no trace summary for query " + std::string(query_id));
  if (summary->contains("error")) {
    throw InvalidInput("trajectory for query " + std::string(query_id) + " failed");
  }

  try {
    ReasoningState current{summary->at("initial_query").get<std::string>(), {}, 0};
    current.docs = retriever.retrieve(current.query, config.k);
    if (current.docs.entries() != summary->at("initial_doc_ids").get<std::vector<std::string>>()) {
      throw InvalidInput("initial retrieval differs from the trace");
    }
    const auto stop_cause = stop_cause_from_string(summary->at("stop_cause").get<std::string>());
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const auto& rec = *steps[i];
      const auto action = rec.at("action").get<std::string>();
      ReasoningState next = current;
      if (action == to_string(Action::kRefine)) {
        next = exec_refine(current, rec.at("query").get<std::string>(), retriever, config.k,
                           config.max_list_size);
      } else if (action == to_string(Action::kRerank)) {
        next = exec_rerank(current, rec.at("proposed").get<std::vector<std::string>>()).state;
      } else if (action != to_string(Action::kStop)) {
        throw InvalidInput("unknown action in trace: " + action);
      }
      if (next.docs.entries() != rec.at("doc_ids").get<std::vector<std::string>>()) {
        throw InvalidInput("replayed step " + std::to_string(i + 1) + " diverges from the trace");
      }
      const bool last = i + 1 == steps.size();
      // An equivalence-stop keeps the pre-state as the answer.
      if (!(last && stop_cause == StopCause::kEquivalenceStop)) current = std::move(next);
    }
    return current.docs;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed trace record: ") + e.what());
  }
}

std::vector<QueryRecord> load_queries(std::istream& in) {
  std::vector<QueryRecord> queries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = trim_whitespace(line);
    if (trimmed.empty()) continue;
    const auto position = std::to_string(queries.size());
    if (trimmed.front() != '{') {
      queries.push_back({position, std::string(trimmed)});
      continue;
    }
    try {
      const auto obj = json::parse(trimmed);
      QueryRecord q;
      q.text = obj.at("text").get<std::string>();
      const auto id = obj.find("query_id");
      if (id == obj.end() || id->is_null()) {
        q.query_id = position;
      } else if (id->is_string()) {
        q.query_id = id->get<std::string>();
      } else if (id->is_number_integer()) {
        q.query_id = id->dump();
      } else {
        throw InvalidInput("query_id must be a string or integer");
      }
      if (q.query_id.empty() || q.query_id.find_first_of(" \t\r\n") != std::string::npos) {
        throw InvalidInput("query_id must be non-empty without whitespace");
      }
      if (trim_whitespace(q.text).empty()) throw InvalidInput("query text is empty");
      queries.push_back(std::move(q));
    } catch (const json::exception& e) {
      throw InvalidInput("queries line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InvalidInput& e) {
      throw InvalidInput("queries line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::unordered_set<std::string_view> ids;
  for (const auto& q : queries) {
    if (!ids.insert(q.query_id).second) throw InvalidInput("duplicate query_id: " + q.query_id);
  }
  return queries;
}

}  // namespace smr
