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

// The reasoning loop: decide, execute, stop on policy request, state
// equivalence or the step cap. Batches run with bounded parallelism.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "smr/core.hpp"
#include "smr/llm.hpp"
#include "smr/policy.hpp"
#include "smr/retrieval.hpp"

namespace smr {

struct EngineConfig {
  std::size_t k = 10;
  std::size_t max_steps = 16;
  std::size_t batch_size = 8;
  PolicyConfig policy;
  std::size_t max_list_size = 100;

  void validate() const;
};

// Throws InvalidInput for an empty query; retriever and transport errors
// propagate and abort the trajectory.
Trajectory run_trajectory(std::string_view query, const Retriever& retriever, ChatBackend& backend,
                          const EngineConfig& config);

struct QueryRecord {
  std::string query_id;
  std::string text;
};

// Called once per trajectory, possibly from several threads at once.
using BackendFactory = std::function<std::unique_ptr<ChatBackend>(const QueryRecord& query)>;

struct BatchResult {
  QueryRecord query;
  std::optional<Trajectory> trajectory;
  std::string error;  // set iff trajectory is empty

  bool ok() const noexcept { return trajectory.has_value(); }
};

// Results come back in input order; at most config.batch_size trajectories
// are in flight. A failing trajectory does not affect the others.
std::vector<BatchResult> run_batch(std::span<const QueryRecord> queries, const Retriever& retriever,
                                   const BackendFactory& backend_factory, const EngineConfig& config);

// One JSONL record per transition followed by one summary record.
void emit_trace(std::string_view query_id, const Trajectory& trajectory, std::ostream& sink);
// emit_trace() for a success; a single summary record carrying "error"
// otherwise.
void emit_trace(const BatchResult& result, std::ostream& sink);

// {query_id, final_query, ranked_doc_ids, stop_cause, steps, output_tokens},
// or {query_id, error} for a failed trajectory.
nlohmann::ordered_json run_record(const BatchResult& result);
void write_run_file(std::span<const BatchResult> results, std::ostream& sink);

// Non-empty lines parsed as JSON. Errors cite the 1-based line number.
std::vector<nlohmann::json> read_jsonl(std::istream& in, std::string_view what);

// Re-executes the decisions recorded for one query and returns the final
// ranking. Throws InvalidInput if a recorded state cannot be reproduced.
RankedList replay_trace(std::span<const nlohmann::json> records, std::string_view query_id,
                        const Retriever& retriever, const EngineConfig& config);

// Queries as JSONL {query_id, text} or plain text, one per line; plain lines
// get their 0-based position as id.
std::vector<QueryRecord> load_queries(std::istream& in);

}  // namespace smr
