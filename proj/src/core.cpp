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

#include "smr/core.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "smr/error.hpp"

namespace smr {

void validate_doc_id(std::string_view doc_id) {
  if (doc_id.empty()) throw InvalidInput("doc_id must be non-empty");
  if (doc_id.find_first_of("\r\n") != std::string_view::npos) {
    throw InvalidInput("doc_id contains a line break: " + std::string(doc_id));
  }
}

std::string_view to_string(ListSource source) {
  switch (source) {
    case ListSource::kInitialRetrieval: return "initial-retrieval";
    case ListSource::kRefineMerge: return "refine-merge";
    case ListSource::kRerank: return "rerank";
  }
  return "unknown";
}

RankedList::RankedList(std::vector<std::string> entries, ListSource source)
    : entries_(std::move(entries)), source_(source) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(entries_.size());
  for (const auto& id : entries_) {
    validate_doc_id(id);
    if (!seen.insert(id).second) {
      throw InvalidInput("duplicate doc_id in ranked list: " + id);
    }
  }
}

bool RankedList::contains(std::string_view doc_id) const {
  return std::find(entries_.begin(), entries_.end(), doc_id) != entries_.end();
}

std::string_view trim_whitespace(std::string_view text) {
  constexpr std::string_view kSpace = " \t\n\r\f\v";
  const auto first = text.find_first_not_of(kSpace);
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(kSpace);
  return text.substr(first, last - first + 1);
}

bool state_equivalent(const ReasoningState& a, const ReasoningState& b) {
  return trim_whitespace(a.query) == trim_whitespace(b.query) &&
         a.docs.entries() == b.docs.entries();
}

std::string_view to_string(Action action) {
  switch (action) {
    case Action::kRefine: return "refine";
    case Action::kRerank: return "rerank";
    case Action::kStop: return "stop";
  }
  return "unknown";
}

Decision Decision::refine(std::string refined_query, std::optional<std::string> reason) {
  return Decision(RefinePayload{std::move(refined_query)}, std::move(reason));
}

Decision Decision::rerank(std::vector<std::string> reranked_ids,
                          std::optional<std::string> reason) {
  return Decision(RerankPayload{std::move(reranked_ids)}, std::move(reason));
}

Decision Decision::stop() { return Decision(StopPayload{}, std::nullopt); }

Action Decision::action() const noexcept {
  switch (payload_.index()) {
    case 0: return Action::kRefine;
    case 1: return Action::kRerank;
    default: return Action::kStop;
  }
}

const std::string& Decision::refined_query() const {
  if (const auto* p = std::get_if<RefinePayload>(&payload_)) return p->query;
  throw std::logic_error("refined_query() on a non-refine decision");
}

const std::vector<std::string>& Decision::reranked_ids() const {
  if (const auto* p = std::get_if<RerankPayload>(&payload_)) return p->ids;
  throw std::logic_error("reranked_ids() on a non-rerank decision");
}

std::string_view to_string(StopCause cause) {
  switch (cause) {
    case StopCause::kPolicyStop: return "policy-stop";
    case StopCause::kEquivalenceStop: return "equivalence-stop";
    case StopCause::kStepCap: return "step-cap";
    case StopCause::kPolicyFailureFallback: return "policy-failure-fallback";
  }
  return "unknown";
}

StopCause stop_cause_from_string(std::string_view name) {
  for (auto cause : {StopCause::kPolicyStop, StopCause::kEquivalenceStop,
                     StopCause::kStepCap, StopCause::kPolicyFailureFallback}) {
    if (to_string(cause) == name) return cause;
  }
  throw InvalidInput("unknown stop_cause: " + std::string(name));
}

const ReasoningState& Trajectory::final_state() const {
  if (transitions.empty()) return initial;
  const auto& last = transitions.back();
  if (stop_cause == StopCause::kEquivalenceStop ||
      last.decision.action() == Action::kStop) {
    return last.pre_state;
  }
  return last.post_state;
}

std::size_t Trajectory::non_stop_count() const {
  return static_cast<std::size_t>(
      std::count_if(transitions.begin(), transitions.end(), [](const Transition& t) {
        return t.decision.action() != Action::kStop;
      }));
}

std::uint64_t Trajectory::total_output_tokens() const {
  std::uint64_t total = 0;
  for (const auto& t : transitions) total += t.output_tokens;
  return total;
}

}  // namespace smr
