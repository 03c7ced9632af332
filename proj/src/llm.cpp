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

#include "smr/llm.hpp"

#include <cctype>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "smr/error.hpp"

namespace smr {
namespace {

using json = nlohmann::json;

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL lacks a scheme: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("unsupported URL scheme '" + scheme + "' in " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool is_transient_status(int status) { return status == 429 || status >= 500; }

// POSTs `payload` and returns the 2xx body. Transport failures and transient
// statuses are retried `max_retries` times with doubling backoff.
std::string post_json(const std::string& url, const std::string& api_key, const json& payload,
                      int max_retries, std::chrono::milliseconds backoff,
                      std::chrono::seconds timeout) {
  const auto target = split_url(url);
  const auto body = payload.dump();
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  std::string last_problem;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff * (1LL << (attempt - 1)));
    }
    httplib::Client client(target.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(target.path, headers, body, "application/json");
    if (!res) {
      last_problem = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    const auto snippet = res->body.substr(0, 300);
    if (is_transient_status(res->status)) {
      last_problem = "HTTP " + std::to_string(res->status) + ": " + snippet;
      continue;
    }
    throw ConfigError("endpoint " + url + " rejected the request with HTTP " +
                      std::to_string(res->status) + ": " + snippet);
  }
  throw TransportError("endpoint " + url + " unreachable after " + std::to_string(max_retries) +
                       " retries (" + last_problem + ")");
}

}  // namespace

void ChatRequest::validate() const {
  if (!(temperature >= 0.0 && temperature <= 1.0)) {
    throw InvalidInput("temperature must lie in [0, 1], got " + std::to_string(temperature));
  }
  if (max_output_tokens == 0) throw InvalidInput("max_output_tokens must be positive");
}

std::uint64_t count_fallback_tokens(std::string_view text) {
  std::uint64_t runs = 0;
  bool in_run = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_run) ++runs;
    in_run = !space;
  }
  return runs;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptStep> steps) : steps_(std::move(steps)) {}

ScriptedBackend::ScriptedBackend(const std::vector<std::string>& texts) {
  steps_.reserve(texts.size());
  for (const auto& t : texts) steps_.push_back({t, std::nullopt});
}

ChatResponse ScriptedBackend::chat(const ChatRequest& request) {
  request.validate();
  if (cursor_ >= steps_.size()) {
    throw ScriptExhausted("script exhausted after " + std::to_string(steps_.size()) + " step(s)");
  }
  requests_.push_back(request);
  const auto& step = steps_[cursor_++];
  ChatResponse response;
  response.text = step.text;
  response.tokens_reported = step.output_tokens.has_value();
  response.output_tokens = step.output_tokens.value_or(count_fallback_tokens(step.text));
  return response;
}

ScriptStep parse_script_step(const json& value) {
  if (value.is_string()) return {value.get<std::string>(), std::nullopt};
  if (value.is_object() && value.contains("text") && value.at("text").is_string()) {
    ScriptStep step{value.at("text").get<std::string>(), std::nullopt};
    if (value.contains("output_tokens")) {
      step.output_tokens = value.at("output_tokens").get<std::uint64_t>();
    }
    return step;
  }
  throw InvalidInput("script step must be a string or {\"text\": ...}: " + value.dump());
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
  split_url(config_.url);
  if (config_.model.empty()) throw ConfigError("model name is required");
  if (config_.max_retries < 0) throw ConfigError("max_retries must be non-negative");
}

json HttpChatBackend::build_payload(const ChatRequest& request) const {
  auto messages = json::array();
  if (!request.system_text.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_text}});
  }
  messages.push_back({{"role", "user"}, {"content", request.user_text}});
  return json{{"model", config_.model},
              {"temperature", request.temperature},
              {"max_tokens", request.max_output_tokens},
              {"messages", std::move(messages)}};
}

ChatResponse HttpChatBackend::parse_response(std::string_view body) {
  json root;
  try {
    root = json::parse(body);
  } catch (const json::exception& e) {
    throw TransportError(std::string("endpoint returned non-JSON body: ") + e.what());
  }
  ChatResponse response;
  try {
    const auto& message = root.at("choices").at(0).at("message");
    // A null or absent content is an empty generation, which the policy retries.
    if (message.contains("content") && message.at("content").is_string()) {
      response.text = message.at("content").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("endpoint reply has no choices[0].message: ") + e.what());
  }
  const auto usage = root.find("usage");
  if (usage != root.end() && usage->is_object()) {
    const auto completion = usage->find("completion_tokens");
    if (completion != usage->end() && completion->is_number_unsigned()) {
      response.output_tokens = completion->get<std::uint64_t>();
      response.tokens_reported = true;
    }
  }
  if (!response.tokens_reported) response.output_tokens = count_fallback_tokens(response.text);
  return response;
}

ChatResponse HttpChatBackend::chat(const ChatRequest& request) {
  request.validate();
  const auto body = post_json(config_.url, config_.api_key, build_payload(request),
                              config_.max_retries, config_.initial_backoff, config_.timeout);
  return parse_response(body);
}

HttpEmbeddingClient::HttpEmbeddingClient(EmbeddingClientConfig config)
    : config_(std::move(config)) {
  split_url(config_.url);
}

std::vector<double> HttpEmbeddingClient::embed(std::string_view text) const {
  json payload{{"input", std::string(text)}};
  if (!config_.model.empty()) payload["model"] = config_.model;
  const auto body = post_json(config_.url, config_.api_key, payload, config_.max_retries,
                              config_.initial_backoff, config_.timeout);
  try {
    return json::parse(body).at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed embeddings reply: ") + e.what());
  }
}

}  // namespace smr
