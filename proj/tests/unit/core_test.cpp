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

#include "smr/core.hpp"
#include "smr/error.hpp"

namespace smr {
namespace {

ReasoningState state(std::string q, std::vector<std::string> ids) {
  return ReasoningState{std::move(q), RankedList(std::move(ids)), 0};
}

TEST(RankedListTest, RejectsDuplicatesAndBadIds) {
  EXPECT_THROW(RankedList({"d1", "d1"}), InvalidInput);
  EXPECT_THROW(RankedList({""}), InvalidInput);
  EXPECT_THROW(RankedList({"a\nb"}), InvalidInput);
  RankedList list({"d1", "d2"});
  EXPECT_TRUE(list.contains("d2"));
  EXPECT_FALSE(list.contains("d3"));
  EXPECT_EQ(list.size(), 2u);
}

TEST(StateEquivalenceTest, SameQuerySameOrder) {
  EXPECT_TRUE(state_equivalent(state("x", {"d1", "d2"}), state("x", {"d1", "d2"})));
}

TEST(StateEquivalenceTest, QueryDiffers) {
  EXPECT_FALSE(state_equivalent(state("x", {"d1", "d2"}), state("y", {"d1", "d2"})));
}

TEST(StateEquivalenceTest, OrderMatters) {
  EXPECT_FALSE(state_equivalent(state("x", {"d1", "d2"}), state("x", {"d2", "d1"})));
}

TEST(StateEquivalenceTest, IgnoresSurroundingWhitespaceAndStep) {
  auto a = state("  x ", {"d1"});
  auto b = state("x", {"d1"});
  b.step = 5;
  EXPECT_TRUE(state_equivalent(a, b));
  EXPECT_FALSE(state_equivalent(state("x y", {"d1"}), state("x  y", {"d1"})));
}

TEST(DecisionTest, AccessorsCheckTheVariant) {
  const auto r = Decision::refine("q2", "why");
  EXPECT_EQ(r.action(), Action::kRefine);
  EXPECT_EQ(r.refined_query(), "q2");
  EXPECT_EQ(r.reason(), "why");
  EXPECT_THROW(r.reranked_ids(), std::logic_error);

  const auto rr = Decision::rerank({"d2", "d1"});
  EXPECT_EQ(rr.reranked_ids(), (std::vector<std::string>{"d2", "d1"}));
  EXPECT_THROW(rr.refined_query(), std::logic_error);

  EXPECT_EQ(Decision::stop().action(), Action::kStop);
  EXPECT_FALSE(Decision::stop().reason().has_value());
}

TEST(StopCauseTest, NamesRoundTrip) {
  for (auto c : {StopCause::kPolicyStop, StopCause::kEquivalenceStop, StopCause::kStepCap,
                 StopCause::kPolicyFailureFallback}) {
    EXPECT_EQ(stop_cause_from_string(to_string(c)), c);
  }
  EXPECT_EQ(to_string(StopCause::kEquivalenceStop), "equivalence-stop");
  EXPECT_THROW(stop_cause_from_string("bored"), InvalidInput);
}

TEST(TrajectoryTest, FinalStateFollowsStopCause) {
  Trajectory t;
  t.initial = state("q0", {"d1"});
  EXPECT_EQ(&t.final_state(), &t.initial);

  Transition refine;
  refine.decision = Decision::refine("q1");
  refine.pre_state = t.initial;
  refine.post_state = state("q1", {"d1", "d2"});
  refine.output_tokens = 10;
  t.transitions.push_back(refine);
  t.stop_cause = StopCause::kStepCap;
  EXPECT_EQ(t.final_state().query, "q1");

  Transition noop;
  noop.decision = Decision::rerank({"d1", "d2"});
  noop.pre_state = refine.post_state;
  noop.post_state = refine.post_state;
  noop.output_tokens = 5;
  t.transitions.push_back(noop);
  t.stop_cause = StopCause::kEquivalenceStop;
  EXPECT_EQ(&t.final_state(), &t.transitions.back().pre_state);
  EXPECT_EQ(t.non_stop_count(), 2u);
  EXPECT_EQ(t.total_output_tokens(), 15u);
}

}  // namespace
}  // namespace smr
