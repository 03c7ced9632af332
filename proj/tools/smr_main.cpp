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

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "smr/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"State-machine retrieval reasoning: index, run, evaluate, inspect"};
  app.require_subcommand(1);

  std::string corpus, index_out;
  auto* index = app.add_subcommand("index", "Build a BM25 index from a JSONL corpus");
  index->add_option("--corpus", corpus, "Corpus JSONL ({doc_id, text} per line)")->required();
  index->add_option("--out", index_out, "Index file to write")->required();

  std::string config;
  smr::cli::RunOverrides overrides;
  auto* run = app.add_subcommand("run", "Run the reasoning loop over a query batch");
  run->add_option("--config", config, "Run configuration (JSON)")->required();
  run->add_option("--max-steps", overrides.max_steps, "Cap on non-stop transitions")
      ->check(CLI::PositiveNumber);
  run->add_option("--k", overrides.k, "Documents per retrieval")->check(CLI::PositiveNumber);
  run->add_option("--batch-size", overrides.batch_size, "Trajectories in flight")
      ->check(CLI::PositiveNumber);

  smr::cli::EvalOptions eval_opts;
  std::string eval_csv, eval_trace;
  auto* eval = app.add_subcommand("eval", "Score a run file against qrels");
  eval->add_option("--run", eval_opts.run, "Run file (JSONL)")->required();
  eval->add_option("--qrels", eval_opts.qrels, "TREC qrels")->required();
  eval->add_option("--metrics", eval_opts.metrics, "Comma-separated: ndcg@10,map@10,recall@10")
      ->capture_default_str();
  eval->add_option("--out", eval_opts.out, "Report JSON to write")->required();
  eval->add_option("--csv", eval_csv, "Optional per-query CSV");
  eval->add_option("--trace", eval_trace, "Optional trace for step analytics");

  std::string inspect_trace, query_id;
  auto* inspect = app.add_subcommand("inspect", "Print one query's trajectory");
  inspect->add_option("--trace", inspect_trace, "Trace file (JSONL)")->required();
  inspect->add_option("--query-id", query_id, "Query to show")->required();

  std::string align_trace, align_config, align_out;
  auto* align = app.add_subcommand("align", "Judge how well refined queries keep the intent");
  align->add_option("--trace", align_trace, "Trace file (JSONL)")->required();
  align->add_option("--config", align_config, "Config whose llm section selects the judge")
      ->required();
  align->add_option("--out", align_out, "Report JSON to write")->required();

  CLI11_PARSE(app, argc, argv);

  if (*index) return smr::cli::cmd_index(corpus, index_out, std::cout, std::cerr);
  if (*run) return smr::cli::cmd_run(config, overrides, std::cout, std::cerr);
  if (*eval) {
    if (!eval_csv.empty()) eval_opts.csv = eval_csv;
    if (!eval_trace.empty()) eval_opts.trace = eval_trace;
    return smr::cli::cmd_eval(eval_opts, std::cout, std::cerr);
  }
  if (*inspect) return smr::cli::cmd_inspect(inspect_trace, query_id, std::cout, std::cerr);
  return smr::cli::cmd_align(align_trace, align_config, align_out, std::cout, std::cerr);
}
