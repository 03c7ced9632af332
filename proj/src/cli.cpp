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

#include "smr/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "smr/error.hpp"
#include "smr/eval.hpp"

namespace smr::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + path.string());
  return out;
}

std::string read_text(const fs::path& path) {
  auto in = open_input(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> known,
                         std::string_view section) {
  if (!obj.is_object()) throw ConfigError(std::string(section) + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown key '" + key + "' in " + std::string(section));
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& field) {
  if (!obj.contains(key)) return;
  try {
    field = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& base, const json& obj, const char* key) {
  if (!obj.contains(key)) return {};
  fs::path p = obj.at(key).get<std::string>();
  return p.is_absolute() ? p : base / p;
}

std::string require_env(const std::string& name) {
  const char* value = std::getenv(name.c_str());
  if (value == nullptr || *value == '\0') {
    throw ConfigError("environment variable " + name + " is not set");
  }
  return value;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

std::shared_ptr<const Retriever> make_retriever(const RetrieverSettings& settings,
                                                const LlmSettings& llm) {
  if (!settings.bm25_index.empty()) {
    auto in = open_input(settings.bm25_index);
    auto index = std::make_shared<const CorpusIndex>(CorpusIndex::load(in));
    return std::make_shared<Bm25Retriever>(std::move(index));
  }
  auto store_in = open_input(settings.dense_store);
  auto store = std::make_shared<const DenseStore>(
      DenseStore::load_jsonl(store_in, settings.embed_url.empty()
                                           ? std::nullopt
                                           : std::optional<std::string>(settings.embed_url)));
  auto corpus_in = open_input(settings.corpus);
  auto docs = std::make_shared<const DocumentMap>(load_corpus_jsonl(corpus_in));
  EmbeddingClientConfig embed_config;
  embed_config.url = settings.embed_url;
  embed_config.model = settings.embed_model;
  embed_config.api_key = require_env(llm.api_key_env);
  auto client = std::make_shared<HttpEmbeddingClient>(std::move(embed_config));
  return std::make_shared<DenseRetriever>(
      std::move(store), std::move(docs),
      [client](std::string_view query) { return client->embed(query); });
}

// Scripted replies: {"default": [steps], "queries": {query_id: [steps]}}.
struct ScriptBook {
  std::vector<ScriptStep> fallback;
  std::map<std::string, std::vector<ScriptStep>, std::less<>> per_query;

  static ScriptBook load(const fs::path& path) {
    const auto root = read_json(path);
    reject_unknown_keys(root, {"default", "queries"}, "script file");
    ScriptBook book;
    auto steps_of = [](const json& arr) {
      if (!arr.is_array()) throw ConfigError("script steps must be an array");
      std::vector<ScriptStep> steps;
      for (const auto& s : arr) steps.push_back(parse_script_step(s));
      return steps;
    };
    if (root.contains("default")) book.fallback = steps_of(root.at("default"));
    if (root.contains("queries")) {
      for (const auto& [id, arr] : root.at("queries").items()) book.per_query[id] = steps_of(arr);
    }
    return book;
  }

  std::unique_ptr<ChatBackend> backend_for(std::string_view query_id) const {
    const auto it = per_query.find(query_id);
    return std::make_unique<ScriptedBackend>(it == per_query.end() ? fallback : it->second);
  }
};

struct BackendSource {
  std::optional<ScriptBook> script;
  HttpBackendConfig http;

  std::unique_ptr<ChatBackend> make(std::string_view query_id) const {
    if (script) return script->backend_for(query_id);
    return std::make_unique<HttpChatBackend>(http);
  }
};

BackendSource make_backends(const LlmSettings& llm) {
  BackendSource source;
  if (!llm.script.empty()) {
    source.script = ScriptBook::load(llm.script);
    return source;
  }
  source.http.url = llm.url;
  source.http.model = llm.model;
  source.http.api_key = require_env(llm.api_key_env);
  source.http.max_retries = llm.max_retries;
  return source;
}

void preflight(const BackendSource& backends) {
  if (backends.script) return;
  HttpChatBackend ping(backends.http);
  try {
    ping.chat(ChatRequest{"", "ping", 0.0, 1});
  } catch (const Error& e) {
    throw TransportError(std::string("endpoint preflight failed: ") + e.what());
  }
}

std::string join(const std::vector<std::string>& items, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += sep;
    out += items[i];
  }
  return out;
}

std::string string_list(const json& rec, const char* key) {
  if (!rec.contains(key) || !rec.at(key).is_array()) return "";
  return join(rec.at(key).get<std::vector<std::string>>());
}

}  // namespace

RunConfig RunConfig::load(const fs::path& path) {
  const auto root = read_json(path);
  const auto base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  reject_unknown_keys(root, {"retriever", "llm", "engine", "paths"}, "run config");
  RunConfig config;
  try {
    const auto& retriever = root.at("retriever");
    reject_unknown_keys(retriever, {"bm25_index", "dense_store", "corpus", "embed_url", "embed_model"},
                        "retriever");
    config.retriever.bm25_index = resolve(base, retriever, "bm25_index");
    config.retriever.dense_store = resolve(base, retriever, "dense_store");
    config.retriever.corpus = resolve(base, retriever, "corpus");
    read_field(retriever, "embed_url", config.retriever.embed_url);
    read_field(retriever, "embed_model", config.retriever.embed_model);
    if (config.retriever.bm25_index.empty() == config.retriever.dense_store.empty()) {
      throw ConfigError("retriever needs exactly one of bm25_index or dense_store");
    }
    if (!config.retriever.dense_store.empty() &&
        (config.retriever.corpus.empty() || config.retriever.embed_url.empty())) {
      throw ConfigError("dense_store needs corpus and embed_url");
    }

    const auto& llm = root.at("llm");
    reject_unknown_keys(llm, {"endpoint", "script"}, "llm");
    if (llm.contains("endpoint") == llm.contains("script")) {
      throw ConfigError("llm needs exactly one of endpoint or script");
    }
    if (llm.contains("endpoint")) {
      const auto& ep = llm.at("endpoint");
      reject_unknown_keys(ep, {"url", "model", "api_key_env", "max_retries"}, "llm.endpoint");
      config.llm.url = ep.at("url").get<std::string>();
      config.llm.model = ep.at("model").get<std::string>();
      read_field(ep, "api_key_env", config.llm.api_key_env);
      read_field(ep, "max_retries", config.llm.max_retries);
    } else {
      config.llm.script = resolve(base, llm, "script");
    }

    if (root.contains("engine")) {
      const auto& engine = root.at("engine");
      reject_unknown_keys(engine, {"k", "max_steps", "batch_size", "max_list_size", "policy"},
                          "engine");
      read_field(engine, "k", config.engine.k);
      read_field(engine, "max_steps", config.engine.max_steps);
      read_field(engine, "batch_size", config.engine.batch_size);
      read_field(engine, "max_list_size", config.engine.max_list_size);
      if (engine.contains("policy")) {
        const auto& policy = engine.at("policy");
        reject_unknown_keys(policy,
                            {"base_temperature", "temperature_increment", "max_attempts",
                             "doc_snippet_chars", "max_output_tokens", "prompt_file"},
                            "engine.policy");
        auto& p = config.engine.policy;
        read_field(policy, "base_temperature", p.base_temperature);
        read_field(policy, "temperature_increment", p.temperature_increment);
        read_field(policy, "max_attempts", p.max_attempts);
        read_field(policy, "doc_snippet_chars", p.doc_snippet_chars);
        read_field(policy, "max_output_tokens", p.max_output_tokens);
        const auto prompt = resolve(base, policy, "prompt_file");
        if (!prompt.empty()) p.system_prompt = read_text(prompt);
      }
    }

    const auto& paths = root.at("paths");
    reject_unknown_keys(paths, {"queries", "run", "trace"}, "paths");
    config.queries = resolve(base, paths, "queries");
    config.run = resolve(base, paths, "run");
    config.trace = resolve(base, paths, "trace");
    if (config.queries.empty() || config.run.empty() || config.trace.empty()) {
      throw ConfigError("paths needs queries, run and trace");
    }
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config;
}

int cmd_index(const fs::path& corpus, const fs::path& out_path, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    auto in = open_input(corpus);
    const auto docs = load_corpus_jsonl(in);
    const auto index = CorpusIndex::build(docs);
    auto sink = open_output(out_path);
    index.save(sink);
    sink.close();
    if (!sink) throw Error("failed to write " + out_path.string());
    out << "doc_count=" << index.doc_count() << " avg_doc_length=" << index.avg_doc_length()
        << '\n';
    return kOk;
  });
}

int cmd_run(const fs::path& config_path, const RunOverrides& overrides, std::ostream& out,
            std::ostream& err) {
  return guarded(err, [&] {
    auto config = RunConfig::load(config_path);
    if (overrides.max_steps) config.engine.max_steps = *overrides.max_steps;
    if (overrides.k) {
      config.engine.k = *overrides.k;
      config.engine.max_list_size = std::max(config.engine.max_list_size, *overrides.k);
    }
    if (overrides.batch_size) config.engine.batch_size = *overrides.batch_size;
    config.engine.validate();

    const auto backends = make_backends(config.llm);
    const auto retriever = make_retriever(config.retriever, config.llm);
    auto queries_in = open_input(config.queries);
    const auto queries = load_queries(queries_in);
    preflight(backends);

    const auto results = run_batch(
        queries, *retriever,
        [&backends](const QueryRecord& q) { return backends.make(q.query_id); }, config.engine);

    auto run_out = open_output(config.run);
    write_run_file(results, run_out);
    auto trace_out = open_output(config.trace);
    for (const auto& r : results) emit_trace(r, trace_out);
    run_out.close();
    trace_out.close();
    if (!run_out || !trace_out) throw Error("failed to write run or trace file");

    std::uint64_t total = 0;
    std::size_t failed = 0;
    for (const auto& r : results) {
      out << r.query.query_id << '\t';
      if (r.ok()) {
        total += r.trajectory->total_output_tokens();
        out << to_string(r.trajectory->stop_cause) << "\tsteps=" << r.trajectory->non_stop_count()
            << "\ttokens=" << r.trajectory->total_output_tokens() << '\n';
      } else {
        ++failed;
        out << "failed\t" << r.error << '\n';
      }
    }
    out << "queries=" << results.size() << " failed=" << failed << " total_output_tokens=" << total
        << '\n';
    return failed == 0 ? kOk : kPartialFailure;
  });
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto metrics = parse_metrics(options.metrics);
    auto run_in = open_input(options.run);
    const auto run = load_run(run_in);
    auto qrels_in = open_input(options.qrels);
    const auto qrels = Qrels::load_trec(qrels_in);
    auto report = evaluate_run(run, qrels, metrics);
    if (options.trace) {
      auto trace_in = open_input(*options.trace);
      attach_trace_analytics(report, analyze_traces(trace_in), qrels);
    }

    auto sink = open_output(options.out);
    sink << to_json(report).dump(2) << '\n';
    if (options.csv) {
      auto csv = open_output(*options.csv);
      write_csv(report, csv);
    }

    out << std::left << std::setw(20) << "metric" << "value\n";
    out << std::fixed << std::setprecision(4);
    for (auto m : report.metrics) {
      out << std::setw(20) << metric_name(m) << report.aggregate.at(m) << '\n';
    }
    out << std::setw(20) << "mean_steps" << report.mean_steps << '\n';
    out << std::setw(20) << "mean_output_tokens" << report.mean_output_tokens << '\n';
    out.unsetf(std::ios::floatfield);
    out << std::setw(20) << "total_output_tokens" << report.total_output_tokens << '\n';
    out << "evaluated=" << report.per_query.size() << " excluded=" << report.excluded.size()
        << '\n';
    for (const auto& e : report.excluded) out << "  excluded " << e.query_id << " (" << e.reason << ")\n";
    return kOk;
  });
}

int cmd_inspect(const fs::path& trace, const std::string& query_id, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    auto in = open_input(trace);
    const auto records = read_jsonl(in, "trace");
    std::vector<std::string> available;
    const json* summary = nullptr;
    std::vector<const json*> steps;
    for (const auto& rec : records) {
      const auto id = rec.value("query_id", "");
      const bool is_summary = rec.value("type", "") == "summary";
      if (is_summary) available.push_back(id);
      if (id != query_id) continue;
      if (is_summary) {
        summary = &rec;
      } else {
        steps.push_back(&rec);
      }
    }
    if (summary == nullptr) {
      throw NotFound("unknown query_id '" + query_id + "'; available: " + join(available, ", "));
    }

    out << "query " << query_id << ": " << summary->value("initial_query", "") << '\n';
    if (summary->contains("error")) {
      out << "failed: " << summary->at("error").get<std::string>() << '\n';
      return kOk;
    }
    out << "initial docs: " << string_list(*summary, "initial_doc_ids") << '\n';
    std::uint64_t total = 0;
    for (const auto* step : steps) {
      const auto& rec = *step;
      const auto tokens = rec.value("output_tokens", std::uint64_t{0});
      total += tokens;
      out << "\nstep " << rec.value("step", 0) << ": " << rec.value("action", "") << '\n';
      out << "  query:  " << rec.value("query", "") << '\n';
      out << "  docs:   " << string_list(rec, "doc_ids") << '\n';
      const auto reason = rec.find("reason");
      out << "  reason: "
          << (reason != rec.end() && reason->is_string() ? reason->get<std::string>() : "-") << '\n';
      out << "  tokens: " << tokens << " (temperature " << rec.value("temperature", 0.0)
          << ", attempts " << rec.value("attempts", 1) << ")\n";
      for (const char* key : {"dropped_ids", "duplicate_ids", "reappended_ids"}) {
        const auto list = string_list(rec, key);
        if (!list.empty()) out << "  " << key << ": " << list << '\n';
      }
    }
    out << "\nstop_cause: " << summary->value("stop_cause", "") << '\n';
    out << "final docs: " << string_list(*summary, "final_doc_ids") << '\n';
    out << "total output tokens: " << total << '\n';
    if (summary->value("output_tokens", std::uint64_t{0}) != total) {
      throw InvalidInput("summary token total disagrees with its steps");
    }
    return kOk;
  });
}

int cmd_align(const fs::path& trace, const fs::path& config_path, const fs::path& out_path,
              std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto config = RunConfig::load(config_path);
    const auto backends = make_backends(config.llm);
    auto in = open_input(trace);
    const auto records = read_jsonl(in, "trace");
    preflight(backends);
    const auto report = evaluate_alignment(
        records, [&backends](const std::string& id) { return backends.make(id); },
        config.engine.policy);
    auto sink = open_output(out_path);
    sink << to_json(report).dump(2) << '\n';
    out << std::fixed << std::setprecision(4);
    out << "scored_pairs=" << report.scored_pairs << " mean_over_steps=" << report.mean_over_steps
        << " mean_over_queries=" << report.mean_over_queries
        << " failures=" << report.failures.size() << '\n';
    for (const auto& f : report.failures) err << "judge failure: " << f << '\n';
    return report.failures.empty() ? kOk : kPartialFailure;
  });
}

}  // namespace smr::cli
