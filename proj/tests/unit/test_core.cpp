#include <gtest/gtest.h>

#include <random>

#include "confspec/core.hpp"
#include "oracles/reference_split.hpp"

using namespace confspec;

TEST(Split, ThreeClosedSteps) {
  const SplitResult r = split_into_steps("a\n\nb\n\nc\n\n");
  ASSERT_EQ(r.steps.size(), 3u);
  EXPECT_EQ(r.steps[0].text, "a");
  EXPECT_EQ(r.steps[1].text, "b");
  EXPECT_EQ(r.steps[2].text, "c");
  EXPECT_EQ(r.dropped_empty, 0u);
  for (const Step& s : r.steps) EXPECT_FALSE(s.incomplete);
}

TEST(Split, EmptyInput) {
  const SplitResult r = split_into_steps("");
  EXPECT_TRUE(r.steps.empty());
  EXPECT_EQ(r.dropped_empty, 0u);
}

TEST(Split, ConsecutiveDelimitersDropOneEmpty) {
  const SplitResult r = split_into_steps("x = 1\n\n\n\ny = 2\n\n");
  const oracle::RefSplit ref = oracle::reference_split("x = 1\n\n\n\ny = 2\n\n", "\n\n");
  ASSERT_EQ(r.steps.size(), 2u);
  EXPECT_EQ(r.steps[0].text, "x = 1");
  EXPECT_EQ(r.steps[1].text, "y = 2");
  EXPECT_EQ(r.dropped_empty, 1u);
  EXPECT_EQ(ref.dropped, 1u);
  EXPECT_EQ(ref.kept.size(), 2u);
}

TEST(Split, TrailingFragmentIsIncomplete) {
  const SplitResult r = split_into_steps("a\n\nhalf a st");
  ASSERT_EQ(r.steps.size(), 2u);
  EXPECT_FALSE(r.steps[0].incomplete);
  EXPECT_TRUE(r.steps[1].incomplete);
  EXPECT_EQ(r.steps[1].text, "half a st");
}

TEST(Split, MatchesReferenceScannerOnRandomText) {
  std::mt19937_64 gen(7);
  const char alphabet[] = {'a', 'b', ' ', '\n', '\n', '\n', 'c'};
  for (const std::string delim : {"\n\n", "##", "\n"}) {
    for (int trial = 0; trial < 2000; ++trial) {
      std::string text;
      const int len = static_cast<int>(gen() % 40);
      for (int i = 0; i < len; ++i) {
        text += gen() % 9 == 0 ? delim : std::string(1, alphabet[gen() % sizeof alphabet]);
      }
      const SplitResult got = split_into_steps(text, BoundaryDelimiter{delim});
      const oracle::RefSplit want = oracle::reference_split(text, delim);
      ASSERT_EQ(got.steps.size(), want.kept.size()) << text;
      ASSERT_EQ(got.dropped_empty, want.dropped) << text;
      for (std::size_t i = 0; i < got.steps.size(); ++i) {
        EXPECT_EQ(got.steps[i].text, want.kept[i].text);
        EXPECT_EQ(got.steps[i].incomplete, !want.kept[i].closed);
      }
    }
  }
}

TEST(Split, RoundTripWithoutEmptySegments) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 1000; ++trial) {
    std::string text;
    const int n = static_cast<int>(gen() % 6);
    for (int i = 0; i < n; ++i) {
      text += "w" + std::to_string(gen() % 100) + " x";
      text += "\n\n";
    }
    EXPECT_EQ(join_steps(split_into_steps(text).steps), text);
  }
}

TEST(Split, EmptyDelimiterRejected) {
  EXPECT_THROW(split_into_steps("abc", BoundaryDelimiter{""}), ValidationError);
}

TEST(Step, TokenEstimate) {
  EXPECT_EQ(make_step("a b c").estimated_tokens, 3u);
  EXPECT_EQ(make_step("  lead  and   trail ").estimated_tokens, 3u);
  EXPECT_EQ(make_step("").estimated_tokens, 0u);
}

TEST(Context, AppendAddsTokens) {
  ReasoningContext ctx("p1 p2 p3 p4 p5 p6 p7 p8 p9 p10", 100);
  ASSERT_EQ(ctx.tokens_used(), 10u);
  const ReasoningContext next = append_step(ctx, make_step("a b c"));
  EXPECT_EQ(next.size(), 1u);
  EXPECT_EQ(next.tokens_used(), 13u);
  EXPECT_EQ(ctx.size(), 0u);
}

TEST(Context, BudgetErrorLeavesContextUnchanged) {
  std::string prompt;
  for (int i = 0; i < 99; ++i) prompt += "t ";
  ReasoningContext ctx(prompt, 100);
  ASSERT_EQ(ctx.tokens_used(), 99u);
  const ReasoningContext before = ctx;
  EXPECT_THROW(append_step(ctx, make_step("two tokens")), BudgetError);
  EXPECT_FALSE(ctx.try_append(make_step("two tokens")));
  EXPECT_EQ(ctx, before);
}

TEST(Context, FiveStepsOfFourTokens) {
  ReasoningContext ctx("", 100);
  std::size_t expected = 0;
  for (int i = 0; i < 5; ++i) {
    ctx = append_step(ctx, make_step("one two three four"));
    expected += 4;
  }
  EXPECT_EQ(ctx.tokens_used(), expected);
  EXPECT_EQ(ctx.size(), 5u);
}

TEST(Context, EmptyStepIsContractViolation) {
  ReasoningContext ctx("p", 10);
  EXPECT_THROW(append_step(ctx, Step{}), ContractViolation);
}

TEST(Context, ZeroBudgetAndOversizedPrompt) {
  EXPECT_THROW(ReasoningContext("p", 0), ValidationError);
  EXPECT_THROW(ReasoningContext("a b c", 2), BudgetError);
}

TEST(Context, BudgetNeverExceeded) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 200; ++trial) {
    ReasoningContext ctx("p", 1 + gen() % 50);
    for (int i = 0; i < 30; ++i) {
      std::string text;
      const int words = 1 + static_cast<int>(gen() % 6);
      for (int w = 0; w < words; ++w) text += "w ";
      ctx.try_append(make_step(text));
      ASSERT_LE(ctx.tokens_used(), ctx.token_budget());
    }
  }
}

TEST(Context, SpeculateWidensBudgetOnCopy) {
  ReasoningContext ctx("p", 3);
  const std::vector<Step> prefix{make_step("a b"), make_step("c d e")};
  const ReasoningContext spec = ctx.speculate(prefix);
  EXPECT_EQ(spec.size(), 2u);
  EXPECT_EQ(ctx.size(), 0u);
  EXPECT_EQ(ctx.token_budget(), 3u);
}

TEST(Context, RenderJoinsWithDelimiter) {
  ReasoningContext ctx("q", 100);
  ctx.try_append(make_step("s1"));
  ctx.try_append(make_step("s2"));
  EXPECT_EQ(ctx.render(), "q\n\ns1\n\ns2\n\n");
}

TEST(RunConfigValidation, Ranges) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = RunConfig{};
  c.draft_steps = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = RunConfig{};
  c.tree_width = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Answer, ExtractsAfterLastMarker) {
  EXPECT_EQ(extract_answer("s9: add 1 -> 4 answer: 4", "answer:"), "4");
  EXPECT_EQ(extract_answer("no marker", "answer:"), "");
  EXPECT_EQ(extract_answer("answer: 1 answer:  22 ", "answer:"), "22");
}
