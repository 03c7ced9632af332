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

#include "smr/actions.hpp"

#include <unordered_set>

#include "smr/error.hpp"

namespace smr {

RankedList merge_retrieved(const RankedList& current, const RankedList& newly_retrieved,
                           std::size_t max_list_size) {
  // Views point into the two input lists, which outlive this call.
  std::unordered_set<std::string_view> present(current.entries().begin(), current.entries().end());
  std::vector<std::string> merged = current.entries();
  for (const auto& id : newly_retrieved.entries()) {
    if (merged.size() >= max_list_size) break;
    if (!present.insert(id).second) continue;
    merged.push_back(id);
  }
  return RankedList(std::move(merged), ListSource::kRefineMerge);
}

SanitizedRanking sanitize_rerank(const RankedList& current, std::span<const std::string> proposed_ids) {
  const auto& original = current.entries();
  std::unordered_set<std::string_view> known(original.begin(), original.end());
  std::unordered_set<std::string_view> placed;
  SanitizedRanking out;
  std::vector<std::string> order;
  order.reserve(original.size());

  for (const auto& id : proposed_ids) {
    if (!known.contains(id)) {
      out.report.dropped_ids.push_back(id);
    } else if (!placed.insert(id).second) {
      out.report.duplicate_ids.push_back(id);
    } else {
      order.push_back(id);
    }
  }
  for (const auto& id : original) {
    if (placed.contains(id)) continue;
    order.push_back(id);
    out.report.reappended_ids.push_back(id);
  }
  out.list = RankedList(std::move(order), ListSource::kRerank);
  return out;
}

ReasoningState exec_refine(const ReasoningState& state, std::string_view refined_query,
                           const Retriever& retriever, std::size_t k, std::size_t max_list_size) {
  if (trim_whitespace(refined_query).empty()) throw InvalidInput("refined query is empty");
  const auto retrieved = retriever.retrieve(refined_query, k);
  return ReasoningState{std::string(refined_query),
                        merge_retrieved(state.docs, retrieved, max_list_size), state.step + 1};
}

RerankResult exec_rerank(const ReasoningState& state, std::span<const std::string> proposed_ids) {
  auto sanitized = sanitize_rerank(state.docs, proposed_ids);
  return RerankResult{ReasoningState{state.query, std::move(sanitized.list), state.step + 1},
                      std::move(sanitized.report)};
}

}  // namespace smr
