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

// Prompt-driven action selection: render the state into the decision prompt,
// parse the model's JSON reply, and retry malformed replies at increasing
// temperature.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "smr/core.hpp"
#include "smr/llm.hpp"

namespace smr {

struct PolicyConfig {
  double base_temperature = 0.0;
  double temperature_increment = 0.1;
  std::size_t max_attempts = 6;
  std::size_t doc_snippet_chars = 2000;  // code points per document
  std::uint32_t max_output_tokens = 1024;
  std::optional<std::string> system_prompt;  // replaces the built-in prompt

  // Throws InvalidInput unless every scheduled temperature lies in [0, 1].
  void validate() const;
  // base + attempt * increment
  double temperature_for_attempt(std::size_t attempt) const;
};

struct PolicyPrompt {
  std::string system_text;
  std::string user_text;
};

// Throws NotFound when a listed doc_id has no document in `docs`.
PolicyPrompt render_policy_prompt(const ReasoningState& state, const DocumentStore& docs,
                                  const PolicyConfig& config = {});

// First prefix of at most `max_chars` code points.
std::string_view truncate_code_points(std::string_view text, std::size_t max_chars);

// First balanced {...} in `raw` that parses as a JSON object, skipping any
// prose or code fences around it.
std::optional<std::string_view> find_json_object(std::string_view raw);

// Throws ParseError for anything that is not a well-formed decision.
Decision parse_decision(std::string_view raw);

// The reply format the prompt asks for; parse_decision() inverts it.
std::string serialize_decision(const Decision& decision);

struct PolicyAttempt {
  double temperature = 0.0;
  std::uint64_t output_tokens = 0;
  std::string error;  // empty for the successful attempt
};

struct PolicyOutcome {
  Decision decision = Decision::stop();
  std::uint64_t output_tokens = 0;  // summed over every attempt
  double temperature_used = 0.0;
  bool fell_back = false;  // every attempt failed to parse
  std::vector<PolicyAttempt> attempts;
};

// Transport and script errors propagate; only ParseError triggers a retry.
PolicyOutcome decide(const ReasoningState& state, const DocumentStore& docs, ChatBackend& backend,
                     const PolicyConfig& config);

}  // namespace smr
