#include <gtest/gtest.h>

#include <random>

#include "confspec/cascade.hpp"
#include "oracles/decision_rule.hpp"
#include "scripted.hpp"

using namespace confspec;
using scripted::FixedVerifier;

namespace {
const ReasoningContext& empty_ctx() {
  static const ReasoningContext c("p", 100);
  return c;
}
const Step kA = make_step("a");
const Step kB = make_step("b");
VerificationQuery query() { return {empty_ctx(), kA, kB}; }
}  // namespace

TEST(CascadedVerify, ConfidentDraftStands) {
  FixedVerifier d(scripted::v(true, 0.95)), t(scripted::v(false, 0.99, Tier::target));
  CostLedger l;
  const auto r = cascaded_verify(query(), 0.9, d, t, l);
  EXPECT_TRUE(r.accepted());
  EXPECT_EQ(r.tier, Tier::draft);
  EXPECT_EQ(t.calls, 0u);
  EXPECT_EQ(l.draft_verify_calls, 1u);
  EXPECT_EQ(l.target_verify_calls, 0u);
}

TEST(CascadedVerify, LowConfidenceEscalates) {
  FixedVerifier d(scripted::v(false, 0.60)), t(scripted::v(true, 0.8, Tier::target));
  CostLedger l;
  const auto r = cascaded_verify(query(), 0.9, d, t, l);
  EXPECT_TRUE(r.accepted());
  EXPECT_EQ(r.tier, Tier::target);
  EXPECT_EQ(l.target_verify_calls, 1u);
}

TEST(CascadedVerify, BoundaryIsInclusive) {
  FixedVerifier d(scripted::v(true, 0.90)), t(scripted::v(false, 1.0, Tier::target));
  EXPECT_EQ(cascaded_verify(query(), 0.90, d, t).tier, Tier::draft);
}

TEST(CascadedVerify, GammaZeroNeverEscalates) {
  for (int i = 50; i <= 100; ++i) {
    FixedVerifier d(scripted::v(i % 2 == 0, i / 100.0)), t(scripted::v(true, 1.0, Tier::target));
    EXPECT_EQ(cascaded_verify(query(), 0.0, d, t).tier, Tier::draft);
    EXPECT_EQ(t.calls, 0u);
  }
}

TEST(CascadedVerify, MatchesPiecewiseRuleOnGrid) {
  for (int pi = 0; pi <= 100; ++pi) {
    for (int gi = 0; gi <= 100; ++gi) {
      for (int combo = 0; combo < 4; ++combo) {
        const double p = pi / 100.0, g = gi / 100.0;
        const bool rd = combo & 1, rt = combo & 2;
        FixedVerifier d(scripted::v(rd, p)), t(scripted::v(rt, 0.7, Tier::target));
        const auto got = cascaded_verify(query(), g, d, t);
        const auto want = oracle::piecewise_decision(p, g, rd, rt);
        ASSERT_EQ(got.accepted(), want.accept);
        ASSERT_EQ(got.tier == Tier::draft, want.from_draft);
      }
    }
  }
}

TEST(CascadedVerify, AlwaysEscalate) {
  FixedVerifier d(scripted::v(true, 1.0)), t(scripted::v(false, 0.6, Tier::target));
  CostLedger l;
  const auto r = cascaded_verify(query(), 0.0, d, t, l, true);
  EXPECT_FALSE(r.accepted());
  EXPECT_EQ(d.calls, 1u);
  EXPECT_EQ(l.target_verify_calls, 1u);
}

TEST(CascadedVerify, DraftFailureEscalatesAndIsCounted) {
  FixedVerifier d(scripted::v(true, 1.0)), t(scripted::v(true, 0.7, Tier::target));
  d.fail = true;
  CostLedger l;
  const auto r = cascaded_verify(query(), 0.5, d, t, l);
  EXPECT_EQ(r.tier, Tier::target);
  EXPECT_EQ(l.draft_verify_failures, 1u);
  EXPECT_EQ(l.target_verify_calls, 1u);
}

TEST(CascadedVerify, TargetFailureIsEscalationError) {
  FixedVerifier d(scripted::v(true, 0.6)), t(scripted::v(true, 0.7, Tier::target));
  t.fail = true;
  try {
    cascaded_verify(query(), 0.9, d, t);
    FAIL();
  } catch (const EscalationError& e) {
    EXPECT_EQ(e.tier(), Tier::target);
  }
}

TEST(CascadedVerify, GammaOutOfRange) {
  FixedVerifier d(scripted::v(true, 0.6)), t(scripted::v(true, 0.7));
  EXPECT_THROW(cascaded_verify(query(), 1.2, d, t), ValidationError);
}

TEST(SelectBest, Argmax) {
  const std::vector<std::pair<Step, VerificationVerdict>> c{{make_step("A"), scripted::v(true, 0.91)},
                                                            {make_step("B"), scripted::v(true, 0.97)}};
  EXPECT_EQ(select_best_candidate(c).text, "B");
}

TEST(SelectBest, TieGoesToLowestIndex) {
  const std::vector<std::pair<Step, VerificationVerdict>> c{{make_step("A"), scripted::v(true, 0.95)},
                                                            {make_step("B"), scripted::v(true, 0.95)}};
  EXPECT_EQ(select_best_candidate(c).text, "A");
}

TEST(SelectBest, EmptyAndRejectedAreContractViolations) {
  EXPECT_THROW(select_best_candidate({}), ContractViolation);
  const std::vector<std::pair<Step, VerificationVerdict>> c{{make_step("A"), scripted::v(false, 0.95)}};
  EXPECT_THROW(select_best_candidate(c), ContractViolation);
}

TEST(SelectBest, MatchesReferenceScan) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 5000; ++trial) {
    std::vector<VerificationVerdict> vs;
    const int n = 1 + static_cast<int>(gen() % 4);
    for (int i = 0; i < n; ++i) vs.push_back(scripted::v(true, 0.5 + (gen() % 6) / 10.0));
    std::size_t want = 0;
    double best = -1;
    for (std::size_t i = 0; i < vs.size(); ++i) {
      if (vs[i].confidence > best) best = vs[i].confidence, want = i;
    }
    EXPECT_EQ(select_best_index(vs), want);
  }
}

namespace {
RunConfig config(std::size_t k = 5) {
  RunConfig c;
  c.draft_steps = k;
  c.gamma = 0.9;
  return c;
}
}  // namespace

TEST(Iteration, FullAcceptance) {
  scripted::Model d("d"), t("t");
  const auto out = run_iteration(ReasoningContext("p", 1000), config(), d, t);
  EXPECT_EQ(out.record.accepted_count, 5u);
  EXPECT_FALSE(out.record.fallback_used);
  EXPECT_EQ(out.context.size(), 5u);
  EXPECT_EQ(out.record.verdicts.size(), 5u);
  EXPECT_EQ(out.record.ledger.target_gen_forward_calls, 5u);
  EXPECT_EQ(out.record.ledger.target_gen_latency, 1u);
}

TEST(Iteration, RivalTargetSeesDraftPrefix) {
  scripted::Model d("d"), t("t");
  std::vector<std::size_t> seen;
  d.judge = [&](const VerificationQuery& q) {
    seen.push_back(q.context.size());
    EXPECT_EQ(q.draft_step.text.substr(1), q.target_step.text.substr(1));
    return scripted::v(true, 1.0);
  };
  run_iteration(ReasoningContext("p", 1000), config(), d, t);
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Iteration, FirstRejectFallsBackWithOneTargetStep) {
  scripted::Model d("d"), t("t");
  d.judge = [](const VerificationQuery&) { return scripted::v(false, 0.99); };
  const auto out = run_iteration(ReasoningContext("p", 1000), config(), d, t);
  EXPECT_EQ(out.record.accepted_count, 0u);
  EXPECT_TRUE(out.record.fallback_used);
  ASSERT_EQ(out.context.size(), 1u);
  EXPECT_EQ(out.context.steps()[0].origin, StepOrigin::fallback);
  EXPECT_EQ(out.context.steps()[0].text, "t1");
  EXPECT_EQ(out.record.verdicts.size(), 1u);
  EXPECT_EQ(out.record.ledger.fallbacks, 1u);
}

TEST(Iteration, StopsAtFirstRejection) {
  scripted::Model d("d"), t("t");
  d.judge = [](const VerificationQuery& q) { return scripted::v(q.context.size() < 2, 0.99); };
  const auto out = run_iteration(ReasoningContext("p", 1000), config(), d, t);
  EXPECT_EQ(out.record.accepted_count, 2u);
  EXPECT_EQ(out.record.verdicts.size(), 3u);
  EXPECT_EQ(d.verify_calls.load(), 3u);
  EXPECT_EQ(out.context.size(), 2u);
  EXPECT_TRUE(out.record.rejected());
}

TEST(Iteration, AdoptPolicyAppendsRivalStep) {
  scripted::Model d("d"), t("t");
  d.judge = [](const VerificationQuery& q) { return scripted::v(q.context.size() < 2, 0.99); };
  RunConfig c = config();
  c.reject_policy = RejectPolicy::adopt_target_step;
  const auto out = run_iteration(ReasoningContext("p", 1000), c, d, t);
  ASSERT_EQ(out.context.size(), 3u);
  EXPECT_EQ(out.context.steps()[2].text, "t3");
  EXPECT_EQ(out.record.ledger.target_steps_adopted, 1u);
}

TEST(Iteration, AdoptPolicyAtFirstRejectSkipsRegeneration) {
  scripted::Model d("d"), t("t");
  d.judge = [](const VerificationQuery&) { return scripted::v(false, 0.99); };
  RunConfig c = config();
  c.reject_policy = RejectPolicy::adopt_target_step;
  const auto out = run_iteration(ReasoningContext("p", 1000), c, d, t);
  ASSERT_EQ(out.context.size(), 1u);
  EXPECT_EQ(out.context.steps()[0].text, "t1");
  EXPECT_EQ(t.generate_calls.load(), 5u);
  EXPECT_EQ(out.record.ledger.fallback_gen_forward_calls, 0u);
}

TEST(Iteration, BudgetTruncation) {
  scripted::Model d("d"), t("t");
  const auto out = run_iteration(ReasoningContext("p", 4), config(), d, t);
  EXPECT_EQ(out.context.size(), 3u);
  EXPECT_TRUE(out.record.budget_truncated);
}

TEST(Iteration, DelimiterInStepIsContractViolation) {
  class Bad final : public Model {
   public:
    Step sample_step(const ReasoningContext&, std::size_t) override { return make_step("x\n\ny"); }
    VerificationVerdict verify(const VerificationQuery&) override { return scripted::v(true, 1); }
  } d;
  scripted::Model t("t");
  EXPECT_THROW(run_iteration(ReasoningContext("p", 100), config(), d, t), ContractViolation);
}

TEST(Trace, PerfectDraftTenSteps) {
  scripted::Model d("s"), t("s");
  d.eos_at = t.eos_at = 10;
  d.answer = t.answer = true;
  const auto trace = run_trace("p", config(), d, t);
  EXPECT_EQ(trace.context.size(), 10u);
  EXPECT_EQ(trace.iterations.size(), 2u);
  EXPECT_EQ(trace.ledger.fallbacks, 0u);
  EXPECT_EQ(trace.termination, Termination::answer);
  EXPECT_EQ(trace.final_answer, "10");
}

TEST(Trace, TinyBudgetIsExhaustedWithEmptyTrace) {
  scripted::Model d("d"), t("t");
  const auto trace = run_trace("p", [] {
    RunConfig c;
    c.token_budget = 1;
    return c;
  }(), d, t);
  EXPECT_TRUE(trace.context.steps().empty());
  EXPECT_TRUE(trace.budget_exhausted());
}

TEST(Trace, LedgerIsSumOfIterations) {
  scripted::Model d("d"), t("t");
  d.eos_at = t.eos_at = 23;
  d.judge = [](const VerificationQuery& q) { return scripted::v(q.context.size() % 3 != 2, 0.7); };
  t.judge = [](const VerificationQuery& q) { return scripted::v(q.context.size() % 4 != 1, 0.8, Tier::target); };
  const auto trace = run_trace("p", config(), d, t);
  CostLedger sum;
  for (const auto& it : trace.iterations) sum += it.ledger;
  EXPECT_EQ(sum, trace.ledger);
  EXPECT_EQ(trace.ledger.draft_verify_calls, trace.ledger.steps_accepted + trace.ledger.steps_rejected);
  EXPECT_LE(trace.ledger.target_verify_calls, trace.ledger.draft_verify_calls);
  for (const auto& it : trace.iterations) {
    EXPECT_EQ(it.fallback_used, it.accepted_count == 0);
    EXPECT_LE(it.accepted_count, it.drafted.size());
    EXPECT_EQ(it.verdicts.size(), it.accepted_count + (it.rejected() ? 1 : 0));
  }
}

TEST(Tree, WidthOneMatchesLinear) {
  scripted::Model d1("d"), t1("t"), d2("d"), t2("t");
  for (auto* m : {&d1, &d2}) {
    m->eos_at = 17;
    m->judge = [](const VerificationQuery& q) { return scripted::v(q.context.size() % 3 != 1, 0.95); };
  }
  t1.eos_at = t2.eos_at = 17;
  const RunConfig c = config();
  ReasoningContext ctx("p", 1000);
  const auto a = run_iteration(ctx, c, d1, t1);
  const auto b = run_tree_iteration(ctx, c, d2, t2);
  EXPECT_EQ(a.context, b.context);
  EXPECT_EQ(a.record, b.record);
}

TEST(Tree, HigherConfidenceAlternativeWins) {
  scripted::Model d("d"), t("t");
  d.judge = [](const VerificationQuery& q) {
    const bool alt = q.draft_step.text.find("_alt") != std::string::npos;
    return scripted::v(true, alt ? 0.92 : 0.8);
  };
  RunConfig c = config(1);
  c.tree_width = 2;
  c.gamma = 0.5;
  const auto out = run_tree_iteration(ReasoningContext("p", 1000), c, d, t);
  ASSERT_EQ(out.context.size(), 1u);
  EXPECT_EQ(out.context.steps()[0].text, "d1_alt1");
  ASSERT_EQ(out.record.layers.size(), 1u);
  EXPECT_EQ(out.record.layers[0].selected, 1u);
  EXPECT_EQ(out.record.ledger.draft_verify_calls, 2u);
}

TEST(Tree, DivergedPathRedraftsFromSelectedPrefix) {
  scripted::Model d("d"), t("t");
  d.judge = [](const VerificationQuery& q) {
    const bool alt = q.draft_step.text.find("_alt") != std::string::npos;
    return scripted::v(true, alt ? 0.99 : 0.9);
  };
  RunConfig c = config(3);
  c.tree_width = 2;
  c.gamma = 0.5;
  const auto out = run_tree_iteration(ReasoningContext("p", 1000), c, d, t);
  ASSERT_EQ(out.context.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out.context.steps()[i].text, "d" + std::to_string(i + 1) + "_alt1");
    EXPECT_EQ(out.record.layers[i].verdicts.size(), 2u);
  }
  EXPECT_EQ(out.record.ledger.draft_verify_calls, 6u);
}

TEST(Tree, AllRejectedFallsBack) {
  scripted::Model d("d"), t("t");
  d.judge = [](const VerificationQuery&) { return scripted::v(false, 0.99); };
  RunConfig c = config();
  c.tree_width = 4;
  const auto out = run_tree_iteration(ReasoningContext("p", 1000), c, d, t);
  EXPECT_EQ(out.record.accepted_count, 0u);
  EXPECT_TRUE(out.record.fallback_used);
  EXPECT_EQ(out.record.ledger.draft_verify_calls, 4u);
  ASSERT_EQ(out.context.size(), 1u);
  EXPECT_EQ(out.context.steps()[0].origin, StepOrigin::fallback);
}

TEST(Concurrency, DispatchGivesSameResult) {
  scripted::Model d1("d"), t1("t"), d2("d"), t2("t");
  RunConfig c = config();
  const auto a = run_iteration(ReasoningContext("p", 1000), c, d1, t1);
  c.concurrent_dispatch = true;
  const auto b = run_iteration(ReasoningContext("p", 1000), c, d2, t2);
  EXPECT_EQ(a.record, b.record);
}
