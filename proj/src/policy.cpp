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

#include "smr/policy.hpp"

#include <algorithm>
#include <cctype>

#include <json.hpp>

#include "smr/error.hpp"
#include "smr/prompts.hpp"

namespace smr {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kRefineAction = "refine query";
constexpr std::string_view kRerankAction = "re-rank";
constexpr std::string_view kStopAction = "stop";

std::string json_quoted(std::string_view text) {
  return json(std::string(text)).dump(-1, ' ', false, json::error_handler_t::replace);
}

// "Refine Query." and " refine query " both name the refine action.
std::string normalize_action(std::string_view action) {
  std::string out(trim_whitespace(action));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  while (!out.empty() && out.back() == '.') out.pop_back();
  return std::string(trim_whitespace(out));
}

// Index one past the brace closing the object opened at `open`, or npos.
std::size_t match_object(std::string_view raw, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<std::string> optional_reason(const json& obj) {
  const auto it = obj.find("reason");
  if (it != obj.end() && it->is_string()) return it->get<std::string>();
  return std::nullopt;
}

}  // namespace

void PolicyConfig::validate() const {
  if (max_attempts == 0) throw InvalidInput("max_attempts must be at least 1");
  if (doc_snippet_chars == 0) throw InvalidInput("doc_snippet_chars must be positive");
  if (max_output_tokens == 0) throw InvalidInput("max_output_tokens must be positive");
  if (!(base_temperature >= 0.0) || !(temperature_increment >= 0.0)) {
    throw InvalidInput("temperatures must be non-negative");
  }
  const double last = base_temperature + static_cast<double>(max_attempts - 1) * temperature_increment;
  if (last > 1.0 + 1e-12) {
    throw InvalidInput("temperature schedule reaches " + std::to_string(last) + ", above 1.0");
  }
}

double PolicyConfig::temperature_for_attempt(std::size_t attempt) const {
  return std::min(1.0, base_temperature + static_cast<double>(attempt) * temperature_increment);
}

std::string_view truncate_code_points(std::string_view text, std::size_t max_chars) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    // Continuation bytes belong to the code point already counted.
    if ((static_cast<unsigned char>(text[i]) & 0xC0) == 0x80) continue;
    if (count == max_chars) return text.substr(0, i);
    ++count;
  }
  return text;
}

PolicyPrompt render_policy_prompt(const ReasoningState& state, const DocumentStore& docs,
                                  const PolicyConfig& config) {
  PolicyPrompt prompt;
  prompt.system_text = config.system_prompt ? *config.system_prompt
                                            : std::string(default_policy_prompt());
  std::string user = "{\n\"query\": " + json_quoted(state.query) + ",\n\"retrieved\": [";
  const auto& ids = state.docs.entries();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto* doc = docs.find(ids[i]);
    if (doc == nullptr) throw NotFound("document not in store: " + ids[i]);
    user += i == 0 ? "\n" : ",\n";
    user += "    (" + json_quoted(ids[i]) + ", " +
            json_quoted(truncate_code_points(doc->text, config.doc_snippet_chars)) + ")";
  }
  user += ids.empty() ? "]\n}" : "\n]\n}";
  prompt.user_text = std::move(user);
  return prompt;
}

std::optional<std::string_view> find_json_object(std::string_view raw) {
  for (auto open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    const auto end = match_object(raw, open);
    if (end == std::string_view::npos) continue;
    const auto candidate = raw.substr(open, end - open);
    if (json::accept(candidate)) return candidate;
  }
  return std::nullopt;
}

Decision parse_decision(std::string_view raw) {
  const auto text = find_json_object(raw);
  if (!text) throw ParseError("no JSON object in model output");
  const auto obj = json::parse(*text);

  const auto action_it = obj.find("action");
  if (action_it == obj.end() || !action_it->is_string()) {
    throw ParseError("decision has no string \"action\" field");
  }
  const auto action = normalize_action(action_it->get<std::string>());

  if (action == kStopAction) return Decision::stop();

  if (action == kRefineAction) {
    const auto q = obj.find("refined_query");
    if (q == obj.end() || !q->is_string()) throw ParseError("refine without \"refined_query\"");
    const auto query = trim_whitespace(q->get_ref<const std::string&>());
    if (query.empty()) throw ParseError("refine with an empty \"refined_query\"");
    return Decision::refine(std::string(query), optional_reason(obj));
  }

  if (action == kRerankAction) {
    const auto r = obj.find("reranked");
    if (r == obj.end() || !r->is_array()) throw ParseError("re-rank without a \"reranked\" array");
    if (r->empty()) throw ParseError("re-rank with an empty \"reranked\" array");
    std::vector<std::string> ids;
    ids.reserve(r->size());
    for (const auto& id : *r) {
      if (!id.is_string()) throw ParseError("\"reranked\" holds a non-string entry: " + id.dump());
      ids.push_back(id.get<std::string>());
    }
    return Decision::rerank(std::move(ids), optional_reason(obj));
  }

  throw ParseError("unknown action \"" + action_it->get<std::string>() + "\"");
}

std::string serialize_decision(const Decision& decision) {
  ordered_json out;
  switch (decision.action()) {
    case Action::kRefine:
      out["action"] = kRefineAction;
      out["refined_query"] = decision.refined_query();
      break;
    case Action::kRerank:
      out["action"] = kRerankAction;
      out["reranked"] = decision.reranked_ids();
      break;
    case Action::kStop:
      out["action"] = kStopAction;
      break;
  }
  if (decision.reason()) out["reason"] = *decision.reason();
  return out.dump(-1, ' ', false, json::error_handler_t::replace);
}

PolicyOutcome decide(const ReasoningState& state, const DocumentStore& docs, ChatBackend& backend,
                     const PolicyConfig& config) {
  config.validate();
  const auto prompt = render_policy_prompt(state, docs, config);
  PolicyOutcome outcome;
  for (std::size_t attempt = 0; attempt < config.max_attempts; ++attempt) {
    ChatRequest request{prompt.system_text, prompt.user_text,
                        config.temperature_for_attempt(attempt), config.max_output_tokens};
    const auto response = backend.chat(request);
    outcome.output_tokens += response.output_tokens;
    outcome.temperature_used = request.temperature;
    try {
      outcome.decision = parse_decision(response.text);
      outcome.attempts.push_back({request.temperature, response.output_tokens, {}});
      return outcome;
    } catch (const ParseError& e) {
      outcome.attempts.push_back({request.temperature, response.output_tokens, e.what()});
    }
  }
  outcome.decision = Decision::stop();
  outcome.fell_back = true;
  return outcome;
}

}  // namespace smr
