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

// Domain types shared by every stage of the reasoning loop: documents,
// ranked lists, states, decisions and the trajectories built from them.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace smr {

struct Document {
  std::string doc_id;
  std::string text;
};

// Throws InvalidInput if `doc_id` is empty or contains a line break.
void validate_doc_id(std::string_view doc_id);

// Read-only access to document contents by id.
class DocumentStore {
 public:
  virtual ~DocumentStore() = default;
  virtual const Document* find(std::string_view doc_id) const = 0;
};

enum class ListSource { kInitialRetrieval, kRefineMerge, kRerank };

std::string_view to_string(ListSource source);

/// An ordered list of distinct doc ids; position 0 is rank 1.
class RankedList {
 public:
  RankedList() = default;
  // Throws InvalidInput on a duplicate or malformed id.
  explicit RankedList(std::vector<std::string> entries,
                      ListSource source = ListSource::kInitialRetrieval);

  const std::vector<std::string>& entries() const noexcept { return entries_; }
  ListSource source() const noexcept { return source_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool contains(std::string_view doc_id) const;

  friend bool operator==(const RankedList&, const RankedList&) = default;

 private:
  std::vector<std::string> entries_;
  ListSource source_ = ListSource::kInitialRetrieval;
};

/// The pair (current query, current ranked list) at step `step`.
struct ReasoningState {
  std::string query;
  RankedList docs;
  std::size_t step = 0;

  friend bool operator==(const ReasoningState&, const ReasoningState&) = default;
};

// Equal queries (ignoring surrounding whitespace) and identical ordered lists.
bool state_equivalent(const ReasoningState& a, const ReasoningState& b);

std::string_view trim_whitespace(std::string_view text);

enum class Action { kRefine, kRerank, kStop };

std::string_view to_string(Action action);

/// One parsed policy output. Exactly one payload is populated, selected by
/// action(); Stop has neither payload nor reason.
class Decision {
 public:
  static Decision refine(std::string refined_query,
                         std::optional<std::string> reason = std::nullopt);
  static Decision rerank(std::vector<std::string> reranked_ids,
                         std::optional<std::string> reason = std::nullopt);
  static Decision stop();

  Action action() const noexcept;
  // Throw std::logic_error when called on the wrong variant.
  const std::string& refined_query() const;
  const std::vector<std::string>& reranked_ids() const;
  const std::optional<std::string>& reason() const noexcept { return reason_; }

  friend bool operator==(const Decision&, const Decision&) = default;

 private:
  struct RefinePayload {
    std::string query;
    friend bool operator==(const RefinePayload&, const RefinePayload&) = default;
  };
  struct RerankPayload {
    std::vector<std::string> ids;
    friend bool operator==(const RerankPayload&, const RerankPayload&) = default;
  };
  struct StopPayload {
    friend bool operator==(const StopPayload&, const StopPayload&) = default;
  };

  Decision(std::variant<RefinePayload, RerankPayload, StopPayload> payload,
           std::optional<std::string> reason)
      : payload_(std::move(payload)), reason_(std::move(reason)) {}

  std::variant<RefinePayload, RerankPayload, StopPayload> payload_;
  std::optional<std::string> reason_;
};

// What the rerank guards removed from or restored to a proposal.
struct SanitizeReport {
  std::vector<std::string> dropped_ids;     // not in the current list
  std::vector<std::string> duplicate_ids;   // repeated after first mention
  std::vector<std::string> reappended_ids;  // omitted, restored at the tail

  bool empty() const noexcept {
    return dropped_ids.empty() && duplicate_ids.empty() && reappended_ids.empty();
  }
  friend bool operator==(const SanitizeReport&, const SanitizeReport&) = default;
};

struct Transition {
  Decision decision = Decision::stop();
  ReasoningState pre_state;
  ReasoningState post_state;
  std::uint64_t output_tokens = 0;
  double temperature = 0.0;
  std::size_t policy_attempts = 1;
  SanitizeReport sanitize;  // populated for Rerank only
};

enum class StopCause {
  kPolicyStop,
  kEquivalenceStop,
  kStepCap,
  kPolicyFailureFallback,
};

std::string_view to_string(StopCause cause);
// Throws InvalidInput on an unknown name.
StopCause stop_cause_from_string(std::string_view name);

struct Trajectory {
  ReasoningState initial;
  std::vector<Transition> transitions;
  StopCause stop_cause = StopCause::kPolicyStop;

  // The state whose ranking is the trajectory's answer. After an
  // equivalence-stop this is the pre-state of the last transition.
  const ReasoningState& final_state() const;
  std::size_t non_stop_count() const;
  std::uint64_t total_output_tokens() const;
};

}  // namespace smr
