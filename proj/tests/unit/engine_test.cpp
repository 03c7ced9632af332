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

#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <sstream>
#include <thread>

#include "smr/engine.hpp"
#include "smr/error.hpp"
#include "support/gen.hpp"

namespace smr {
namespace {

using Ids = std::vector<std::string>;
using smr_test::refine_reply;
using smr_test::rerank_reply;
using smr_test::stop_reply;

class EngineTest : public testing::Test {
 protected:
  EngineTest()
      : retriever_(std::make_shared<const CorpusIndex>(
            CorpusIndex::build(smr_test::unique_term_corpus(40)))) {}

  Trajectory run(std::vector<std::string> script, EngineConfig config = {}) {
    ScriptedBackend backend(std::move(script));
    return run_trajectory("t0", retriever_, backend, config);
  }

  Bm25Retriever retriever_;
};

TEST_F(EngineTest, ImmediateStop) {
  const auto t = run({stop_reply()});
  ASSERT_EQ(t.transitions.size(), 1u);
  EXPECT_EQ(t.non_stop_count(), 0u);
  EXPECT_EQ(t.stop_cause, StopCause::kPolicyStop);
  EXPECT_EQ(t.final_state().docs, t.initial.docs);
  EXPECT_EQ(t.initial.docs.entries(), (Ids{"t0"}));
}

TEST_F(EngineTest, StepCapAfterSixteenNovelRefines) {
  std::vector<std::string> script;
  for (int i = 1; i <= 20; ++i) script.push_back(refine_reply("t" + std::to_string(i)));
  const auto t = run(script);
  EXPECT_EQ(t.transitions.size(), 16u);
  EXPECT_EQ(t.stop_cause, StopCause::kStepCap);
  EXPECT_EQ(t.final_state().docs.size(), 17u);
  EXPECT_EQ(t.final_state().query, "t16");
}

TEST_F(EngineTest, IdentityRerankStopsOnEquivalence) {
  const auto t = run({rerank_reply({"t0"})});
  ASSERT_EQ(t.transitions.size(), 1u);
  EXPECT_EQ(t.stop_cause, StopCause::kEquivalenceStop);
  EXPECT_EQ(&t.final_state(), &t.transitions[0].pre_state);
}

TEST_F(EngineTest, RefineToSameQueryStopsOnEquivalence) {
  const auto t = run({refine_reply("t0")});
  ASSERT_EQ(t.transitions.size(), 1u);
  EXPECT_EQ(t.stop_cause, StopCause::kEquivalenceStop);
}

TEST_F(EngineTest, FallbackStopRecordsAllAttempts) {
  const auto t = run(std::vector<std::string>(6, "nonsense here"));
  ASSERT_EQ(t.transitions.size(), 1u);
  EXPECT_EQ(t.stop_cause, StopCause::kPolicyFailureFallback);
  EXPECT_EQ(t.transitions[0].policy_attempts, 6u);
  EXPECT_EQ(t.total_output_tokens(), 12u);
}

TEST_F(EngineTest, ExhaustedScriptAbortsTheTrajectory) {
  EXPECT_THROW(run({refine_reply("t1")}), ScriptExhausted);
  ScriptedBackend backend(std::vector<std::string>{stop_reply()});
  EXPECT_THROW(run_trajectory("  ", retriever_, backend, EngineConfig{}), InvalidInput);
}

TEST_F(EngineTest, ConfigValidation) {
  EngineConfig c;
  c.k = 20;
  c.max_list_size = 10;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = EngineConfig{};
  c.max_steps = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = EngineConfig{};
  EXPECT_EQ(c.k, 10u);
  EXPECT_EQ(c.max_steps, 16u);
  EXPECT_EQ(c.batch_size, 8u);
  EXPECT_EQ(c.policy.base_temperature, 0.0);
}

// Counts live backends; each trajectory owns exactly one.
struct Gauge {
  std::atomic<int> live{0};
  std::atomic<int> peak{0};
};

class GaugedBackend : public ChatBackend {
 public:
  GaugedBackend(Gauge& gauge, std::vector<std::string> script)
      : gauge_(gauge), inner_(std::move(script)) {
    const int now = ++gauge_.live;
    int prev = gauge_.peak.load();
    while (now > prev && !gauge_.peak.compare_exchange_weak(prev, now)) {
    }
  }
  ~GaugedBackend() override { --gauge_.live; }

  ChatResponse chat(const ChatRequest& request) override {
    std::this_thread::sleep_for(std::chrono::milliseconds(3));
    return inner_.chat(request);
  }

 private:
  Gauge& gauge_;
  ScriptedBackend inner_;
};

std::vector<QueryRecord> numbered_queries(std::size_t n) {
  std::vector<QueryRecord> qs;
  for (std::size_t i = 0; i < n; ++i) qs.push_back({"q" + std::to_string(i), "t" + std::to_string(i)});
  return qs;
}

TEST_F(EngineTest, BatchConcurrencyIsBounded) {
  Gauge gauge;
  const auto queries = numbered_queries(20);
  const auto results = run_batch(
      queries, retriever_,
      [&](const QueryRecord& q) {
        return std::make_unique<GaugedBackend>(
            gauge, std::vector<std::string>{refine_reply(q.text + " t39"), stop_reply()});
      },
      EngineConfig{});
  ASSERT_EQ(results.size(), 20u);
  for (std::size_t i = 0; i < results.size(); ++i) {
    EXPECT_TRUE(results[i].ok()) << results[i].error;
    EXPECT_EQ(results[i].query.query_id, queries[i].query_id);
  }
  EXPECT_LE(gauge.peak.load(), 8);
  EXPECT_GE(gauge.peak.load(), 2);
  EXPECT_EQ(gauge.live.load(), 0);
}

TEST_F(EngineTest, SingleQueryBatchMatchesDirectRun) {
  const std::vector<std::string> script{refine_reply("t5"), rerank_reply({"t5", "t0"}), stop_reply()};
  const auto direct = run(script);
  const auto batch = run_batch(
      numbered_queries(1), retriever_,
      [&](const QueryRecord&) { return std::make_unique<ScriptedBackend>(script); }, EngineConfig{});
  ASSERT_TRUE(batch[0].ok());
  std::ostringstream a, b;
  emit_trace("q0", direct, a);
  emit_trace(batch[0], b);
  EXPECT_EQ(a.str(), b.str());
}

TEST_F(EngineTest, FailuresStayInTheirSlot) {
  const auto results = run_batch(
      numbered_queries(3), retriever_,
      [&](const QueryRecord& q) -> std::unique_ptr<ChatBackend> {
        if (q.query_id == "q1") return std::make_unique<ScriptedBackend>(std::vector<std::string>{});
        return std::make_unique<ScriptedBackend>(std::vector<std::string>{stop_reply()});
      },
      EngineConfig{});
  EXPECT_TRUE(results[0].ok());
  EXPECT_FALSE(results[1].ok());
  EXPECT_NE(results[1].error.find("exhausted"), std::string::npos);
  EXPECT_TRUE(results[2].ok());
  EXPECT_EQ(run_record(results[1]).dump(), R"({"query_id":"q1","error":")" + results[1].error + "\"}");
}

TEST_F(EngineTest, BatchesAreDeterministic) {
  auto once = [&] {
    const auto results = run_batch(
        numbered_queries(5), retriever_,
        [](const QueryRecord& q) {
          return std::make_unique<ScriptedBackend>(std::vector<std::string>{
              refine_reply(q.text + " t30"), rerank_reply({"t30"}), stop_reply()});
        },
        EngineConfig{});
    std::ostringstream trace, runfile;
    for (const auto& r : results) emit_trace(r, trace);
    write_run_file(results, runfile);
    return trace.str() + runfile.str();
  };
  EXPECT_EQ(once(), once());
}

TEST_F(EngineTest, TraceLineCountAndEscaping) {
  const auto t = run({refine_reply("t1", "line one\nline two"), stop_reply()});
  std::ostringstream out;
  emit_trace("q", t, out);
  const auto text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_NE(text.find("line one\\nline two"), std::string::npos);

  std::istringstream in(text);
  const auto records = read_jsonl(in, "trace");
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0].at("action"), "refine");
  EXPECT_EQ(records[1].at("stop_cause"), "policy-stop");
  EXPECT_EQ(records[2].at("type"), "summary");
  EXPECT_EQ(records[2].at("steps"), 1);
}

TEST_F(EngineTest, ReplayReproducesTheFinalRanking) {
  const auto t = run({refine_reply("t3 t7"), rerank_reply({"t7", "t9", "t3"}), rerank_reply({"t7", "t3", "t0"})});
  ASSERT_EQ(t.stop_cause, StopCause::kEquivalenceStop);
  std::stringstream trace;
  emit_trace("q", t, trace);
  const auto records = read_jsonl(trace, "trace");
  EXPECT_EQ(replay_trace(records, "q", retriever_, EngineConfig{}).entries(),
            t.final_state().docs.entries());
  EXPECT_THROW(replay_trace(records, "other", retriever_, EngineConfig{}), NotFound);

  auto tampered = records;
  tampered[0]["doc_ids"] = Ids{"t0"};
  EXPECT_THROW(replay_trace(tampered, "q", retriever_, EngineConfig{}), InvalidInput);
}

TEST(LoadQueriesTest, JsonlAndPlainText) {
  std::istringstream mixed(
      "{\"query_id\": \"a\", \"text\": \"first\"}\n\nplain second\n{\"query_id\": 7, \"text\": \"x\"}\n"
      "{\"text\": \"auto\"}\n");
  const auto qs = load_queries(mixed);
  ASSERT_EQ(qs.size(), 4u);
  EXPECT_EQ(qs[0].query_id, "a");
  EXPECT_EQ(qs[1].query_id, "1");
  EXPECT_EQ(qs[1].text, "plain second");
  EXPECT_EQ(qs[2].query_id, "7");
  EXPECT_EQ(qs[3].query_id, "3");
}

TEST(LoadQueriesTest, Errors) {
  std::istringstream dup("{\"query_id\": \"a\", \"text\": \"x\"}\n{\"query_id\": \"a\", \"text\": \"y\"}\n");
  EXPECT_THROW(load_queries(dup), InvalidInput);
  std::istringstream empty_text("{\"query_id\": \"a\", \"text\": \"  \"}\n");
  EXPECT_THROW(load_queries(empty_text), InvalidInput);
  std::istringstream broken("ok\n{\"query_id\": \n");
  try {
    load_queries(broken);
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

}  // namespace
}  // namespace smr
