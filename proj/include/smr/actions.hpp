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

// State transitions for Refine and Rerank decisions.

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>

#include "smr/core.hpp"
#include "smr/retrieval.hpp"

namespace smr {

inline constexpr std::size_t kUnboundedListSize = std::numeric_limits<std::size_t>::max();

// `current` followed by the entries of `newly_retrieved` it lacks, in
// retriever order. Only appended entries are cut to honour `max_list_size`;
// existing entries are never removed.
RankedList merge_retrieved(const RankedList& current, const RankedList& newly_retrieved,
                           std::size_t max_list_size);

struct SanitizedRanking {
  RankedList list;
  SanitizeReport report;
};

// Turns a model-proposed order into a permutation of `current`: ids foreign
// to `current` are dropped, repeats after the first are dropped, and omitted
// ids are re-appended in their original order.
SanitizedRanking sanitize_rerank(const RankedList& current, std::span<const std::string> proposed_ids);

// New query, docs merged with one retrieval for that query, step + 1.
ReasoningState exec_refine(const ReasoningState& state, std::string_view refined_query,
                           const Retriever& retriever, std::size_t k,
                           std::size_t max_list_size = 100);

struct RerankResult {
  ReasoningState state;
  SanitizeReport report;
};

// Same query, sanitized order, step + 1.
RerankResult exec_rerank(const ReasoningState& state, std::span<const std::string> proposed_ids);

}  // namespace smr
