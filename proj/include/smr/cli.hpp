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

// Command implementations behind the smr executable. Each returns a process
// exit status and writes human-readable output to `out`, diagnostics to `err`.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "smr/engine.hpp"

namespace smr::cli {

// Exit statuses.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kPartialFailure = 2;  // run finished but some queries failed

struct RetrieverSettings {
  std::filesystem::path bm25_index;
  std::filesystem::path dense_store;
  std::filesystem::path corpus;  // documents for dense mode
  std::string embed_url;
  std::string embed_model;
};

struct LlmSettings {
  std::string url;
  std::string model;
  std::string api_key_env = "SMR_API_KEY";
  int max_retries = 3;
  std::filesystem::path script;
};

/// Parsed run configuration. Relative paths are resolved against the
/// directory holding the config file.
struct RunConfig {
  RetrieverSettings retriever;
  LlmSettings llm;
  EngineConfig engine;
  std::filesystem::path queries;
  std::filesystem::path run;
  std::filesystem::path trace;

  // Throws ConfigError on unknown keys, missing paths or an ambiguous mode.
  static RunConfig load(const std::filesystem::path& path);
  bool scripted() const { return !llm.script.empty(); }
};

struct RunOverrides {
  std::optional<std::size_t> max_steps;
  std::optional<std::size_t> k;
  std::optional<std::size_t> batch_size;
};

struct EvalOptions {
  std::filesystem::path run;
  std::filesystem::path qrels;
  std::string metrics = "ndcg@10";
  std::filesystem::path out;
  std::optional<std::filesystem::path> csv;
  std::optional<std::filesystem::path> trace;
};

int cmd_index(const std::filesystem::path& corpus, const std::filesystem::path& out_path,
              std::ostream& out, std::ostream& err);
int cmd_run(const std::filesystem::path& config_path, const RunOverrides& overrides,
            std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);
int cmd_inspect(const std::filesystem::path& trace, const std::string& query_id, std::ostream& out,
                std::ostream& err);
// Scores every Refine in a trace with the judge configured in the llm
// section of `config_path`.
int cmd_align(const std::filesystem::path& trace, const std::filesystem::path& config_path,
              const std::filesystem::path& out_path, std::ostream& out, std::ostream& err);

}  // namespace smr::cli
