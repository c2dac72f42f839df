#include <gtest/gtest.h>

#include <random>

#include "confspec/cascade.hpp"
#include "confspec/simworld.hpp"

using namespace confspec;

namespace {

struct Case {
  sim::SimWorldSpec spec;
  RunConfig run;
  std::uint64_t task = 0;
};

Case random_case(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Case c;
  c.spec.seed = gen();
  c.spec.chain_length = 1 + gen() % 14;
  c.spec.draft_step_accuracy = u(gen);
  c.spec.difficulty_mix = u(gen);
  c.spec.style = gen() % 3 == 0 ? sim::StepStyle::verbose : sim::StepStyle::terse;
  c.spec.draft_verifier.leniency = gen() % 2 ? 0.0 : u(gen);
  c.run.gamma = gen() % 5 == 0 ? 1.0 : u(gen);
  c.run.draft_steps = 1 + gen() % 6;
  c.run.tree_width = gen() % 3 == 0 ? 1 + gen() % 4 : 1;
  c.run.token_budget = 20 + gen() % 400;
  c.run.reject_policy = gen() % 2 ? RejectPolicy::regenerate : RejectPolicy::adopt_target_step;
  c.run.always_escalate = gen() % 7 == 0;
  c.task = gen() % 1000;
  return c;
}

ReasoningTrace run(const Case& c) {
  sim::SimDraftModel draft(c.spec);
  sim::SimTargetModel target(c.spec);
  const sim::Task task = sim::make_task(c.spec, c.task);
  return run_trace(sim::task_prompt(task, c.spec), c.run, draft, target);
}

constexpr int kCases = 400;

}  // namespace

TEST(Properties, BudgetNeverExceeded) {
  std::mt19937_64 gen(1);
  for (int i = 0; i < kCases; ++i) {
    const Case c = random_case(gen);
    const ReasoningTrace t = run(c);
    ASSERT_LE(t.context.tokens_used(), c.run.token_budget);
    if (t.termination != Termination::budget_exhausted) continue;
    // A trace only stops on budget when it could not fit its next step.
    EXPECT_TRUE(t.iterations.back().budget_truncated || t.context.remaining() == 0);
  }
}

TEST(Properties, LedgerConservation) {
  std::mt19937_64 gen(2);
  for (int i = 0; i < kCases; ++i) {
    const Case c = random_case(gen);
    const ReasoningTrace t = run(c);
    const CostLedger& l = t.ledger;
    ASSERT_EQ(l.steps_accepted + l.steps_rejected, l.draft_verify_calls);
    ASSERT_LE(l.target_verify_calls, l.draft_verify_calls);
    ASSERT_EQ(l.iterations, t.iterations.size());
    CostLedger sum;
    std::size_t appended = 0;
    for (const IterationRecord& r : t.iterations) {
      sum += r.ledger;
      appended += r.steps_appended;
    }
    ASSERT_EQ(sum, l);
    ASSERT_EQ(appended, t.context.size());
    ASSERT_LE(l.drafts_committed + l.target_steps_adopted, t.context.size());
    if (c.run.always_escalate) {
      ASSERT_EQ(l.target_verify_calls, l.draft_verify_calls);
    }
    if (c.run.reject_policy == RejectPolicy::adopt_target_step) {
      ASSERT_EQ(l.fallback_gen_tokens, 0u);
    }
  }
}

TEST(Properties, LinearVerificationStopsAtFirstReject) {
  std::mt19937_64 gen(3);
  for (int i = 0; i < kCases; ++i) {
    Case c = random_case(gen);
    c.run.tree_width = 1;
    const ReasoningTrace t = run(c);
    for (const IterationRecord& r : t.iterations) {
      ASSERT_LE(r.verdicts.size(), r.drafted.size());
      for (std::size_t j = 0; j < r.verdicts.size(); ++j) {
        ASSERT_EQ(r.verdicts[j].accepted(), j < r.accepted_count);
      }
      ASSERT_TRUE(r.verdicts.size() == r.accepted_count || r.verdicts.size() == r.accepted_count + 1);
      ASSERT_EQ(r.fallback_used, r.accepted_count == 0);
    }
  }
}

TEST(Properties, CommittedDraftsWereAccepted) {
  std::mt19937_64 gen(4);
  for (int i = 0; i < kCases; ++i) {
    const Case c = random_case(gen);
    const ReasoningTrace t = run(c);
    std::size_t pos = 0;
    for (const IterationRecord& r : t.iterations) {
      for (std::size_t j = 0; j < r.steps_appended; ++j, ++pos) {
        const Step& s = t.context.steps()[pos];
        if (j < r.accepted_count) {
          ASSERT_EQ(s.origin, StepOrigin::draft);
          const LayerRecord& layer = r.layers[j];
          ASSERT_TRUE(layer.selected.has_value());
          ASSERT_EQ(layer.candidates[*layer.selected].text, s.text);
          ASSERT_TRUE(layer.verdicts[*layer.selected].accepted());
        } else {
          ASSERT_NE(s.origin, StepOrigin::draft);
        }
      }
    }
  }
}

TEST(Properties, TreeSelectionIsArgmaxOfAccepted) {
  std::mt19937_64 gen(5);
  for (int i = 0; i < kCases; ++i) {
    Case c = random_case(gen);
    c.run.tree_width = 2 + gen() % 3;
    const ReasoningTrace t = run(c);
    for (const IterationRecord& r : t.iterations) {
      for (const LayerRecord& layer : r.layers) {
        ASSERT_EQ(layer.candidates.size(), layer.verdicts.size());
        if (!layer.selected) {
          for (const auto& v : layer.verdicts) ASSERT_FALSE(v.accepted());
          continue;
        }
        const double best = layer.verdicts[*layer.selected].confidence;
        for (std::size_t k = 0; k < layer.verdicts.size(); ++k) {
          if (!layer.verdicts[k].accepted()) continue;
          ASSERT_LE(layer.verdicts[k].confidence, best);
          if (k < *layer.selected) {
            ASSERT_LT(layer.verdicts[k].confidence, best);
          }
        }
      }
    }
  }
}

TEST(Properties, EscalationMonotonicInGamma) {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  sim::SimWorldSpec spec;
  spec.draft_step_accuracy = 0.6;
  spec.draft_verifier.confidence_noise = 0.2;
  sim::SimDraftModel draft(spec);
  sim::SimTargetModel target(spec);
  for (int i = 0; i < 3000; ++i) {
    const sim::Task task = sim::make_task(spec, gen() % 500);
    ReasoningContext ctx(sim::task_prompt(task, spec), 10000);
    const std::size_t before = gen() % spec.chain_length;
    for (std::size_t p = 0; p < before; ++p) ctx.try_append(sim::sim_target_generate(ctx, spec).step);
    const Step d = draft.sample_step(ctx, 0), t = target.sample_step(ctx, 0);
    const VerificationQuery q{ctx, d, t};
    double g1 = u(gen), g2 = u(gen);
    if (g1 > g2) std::swap(g1, g2);
    CostLedger l1, l2;
    cascaded_verify(q, g1, draft, target, l1);
    cascaded_verify(q, g2, draft, target, l2);
    ASSERT_LE(l1.target_verify_calls, l2.target_verify_calls);
    // Escalation can only fix errors with a target tier at least as accurate.
    const bool truth = sim::query_truth(q, spec);
    if (cascaded_verify(q, g1, draft, target).accepted() == truth) {
      ASSERT_EQ(cascaded_verify(q, g2, draft, target).accepted(), truth);
    }
  }
}

TEST(Properties, Reproducible) {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 100; ++i) {
    const Case c = random_case(gen);
    ASSERT_EQ(run(c), run(c));
  }
}

TEST(Properties, ConcurrentDispatchMatchesSequential) {
  std::mt19937_64 gen(8);
  for (int i = 0; i < 60; ++i) {
    Case c = random_case(gen);
    const ReasoningTrace seq = run(c);
    c.run.concurrent_dispatch = true;
    ASSERT_EQ(run(c), seq);
  }
}

TEST(Properties, AlwaysEscalateWithPerfectTargetIsCorrect) {
  std::mt19937_64 gen(9);
  for (int i = 0; i < 200; ++i) {
    Case c = random_case(gen);
    c.run.always_escalate = true;
    c.run.token_budget = 1u << 16;
    const ReasoningTrace t = run(c);
    ASSERT_TRUE(sim::trace_correct(t, c.spec, sim::make_task(c.spec, c.task))) << i;
  }
}

TEST(Properties, SingleWidthTreeEqualsLinear) {
  std::mt19937_64 gen(10);
  for (int i = 0; i < 200; ++i) {
    Case c = random_case(gen);
    c.run.tree_width = 1;
    sim::SimDraftModel draft(c.spec);
    sim::SimTargetModel target(c.spec);
    const ReasoningContext ctx(sim::task_prompt(sim::make_task(c.spec, c.task), c.spec), c.run.token_budget);
    const IterationOutcome a = run_iteration(ctx, c.run, draft, target);
    const IterationOutcome b = run_tree_iteration(ctx, c.run, draft, target);
    ASSERT_EQ(a.context, b.context);
    ASSERT_EQ(a.record, b.record);
  }
}
