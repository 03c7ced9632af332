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

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace smr {

struct ChatRequest {
  std::string system_text;
  std::string user_text;
  double temperature = 0.0;
  std::uint32_t max_output_tokens = 1024;

  // Throws InvalidInput when temperature is outside [0, 1] or the token
  // budget is zero.
  void validate() const;
};

struct ChatResponse {
  std::string text;
  std::uint64_t output_tokens = 0;
  bool tokens_reported = false;  // false: output_tokens is the fallback count
};

// Number of maximal non-whitespace runs.
std::uint64_t count_fallback_tokens(std::string_view text);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse chat(const ChatRequest& request) = 0;
};

struct ScriptStep {
  std::string text;
  std::optional<std::uint64_t> output_tokens;  // unset: fallback count
};

/// Replays canned responses in order, one per call. Single consumer.
class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptStep> steps);
  explicit ScriptedBackend(const std::vector<std::string>& texts);

  // Throws ScriptExhausted once every step has been consumed.
  ChatResponse chat(const ChatRequest& request) override;

  std::size_t cursor() const noexcept { return cursor_; }
  std::size_t remaining() const noexcept { return steps_.size() - cursor_; }
  const std::vector<ChatRequest>& requests() const noexcept { return requests_; }

 private:
  std::vector<ScriptStep> steps_;
  std::size_t cursor_ = 0;
  std::vector<ChatRequest> requests_;
};

// A script step is either a string (the raw reply) or
// {"text": ..., "output_tokens": n}.
ScriptStep parse_script_step(const nlohmann::json& value);

struct HttpBackendConfig {
  std::string url;  // full chat-completions URL, http:// or https://
  std::string model;
  std::string api_key;  // sent as a bearer token when non-empty
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{120};
};

/// Client for any chat-completions compatible endpoint. Connection failures,
/// 429 and 5xx replies are retried with exponential backoff; other 4xx
/// replies raise ConfigError. Safe to call from several threads.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config);

  ChatResponse chat(const ChatRequest& request) override;

  nlohmann::json build_payload(const ChatRequest& request) const;
  // Throws TransportError when the body is not a chat-completions reply.
  static ChatResponse parse_response(std::string_view body);

 private:
  HttpBackendConfig config_;
};

struct EmbeddingClientConfig {
  std::string url;  // embeddings endpoint, e.g. .../v1/embeddings
  std::string model;
  std::string api_key;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{60};
};

/// Query embeddings for dense retrieval: {"model", "input"} in,
/// data[0].embedding out.
class HttpEmbeddingClient {
 public:
  explicit HttpEmbeddingClient(EmbeddingClientConfig config);
  std::vector<double> embed(std::string_view text) const;

 private:
  EmbeddingClientConfig config_;
};

}  // namespace smr
