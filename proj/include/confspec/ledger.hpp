#pragma once

#include <cstddef>

namespace confspec {

/// Generation and verification counts for one trace (or a merged set of traces).
///
/// Generation is tracked twice: `*_tokens` / `*_forward_calls` count total work,
/// `*_latency` counts sequential forward passes on the critical path, where a
/// batch of generations dispatched together costs as much as its longest member.
struct CostLedger {
  std::size_t draft_gen_tokens = 0;
  std::size_t draft_gen_latency = 0;

  std::size_t target_gen_tokens = 0;
  std::size_t target_gen_forward_calls = 0;
  std::size_t target_gen_latency = 0;

  std::size_t fallback_gen_tokens = 0;
  std::size_t fallback_gen_forward_calls = 0;

  std::size_t draft_verify_calls = 0;
  std::size_t target_verify_calls = 0;
  std::size_t draft_verify_failures = 0;

  // Verdict outcomes; every draft verification ends in exactly one of these.
  std::size_t steps_accepted = 0;
  std::size_t steps_rejected = 0;

  std::size_t fallbacks = 0;
  std::size_t drafts_committed = 0;
  std::size_t target_steps_adopted = 0;
  std::size_t iterations = 0;

  CostLedger& operator+=(const CostLedger& o) {
    draft_gen_tokens += o.draft_gen_tokens;
    draft_gen_latency += o.draft_gen_latency;
    target_gen_tokens += o.target_gen_tokens;
    target_gen_forward_calls += o.target_gen_forward_calls;
    target_gen_latency += o.target_gen_latency;
    fallback_gen_tokens += o.fallback_gen_tokens;
    fallback_gen_forward_calls += o.fallback_gen_forward_calls;
    draft_verify_calls += o.draft_verify_calls;
    target_verify_calls += o.target_verify_calls;
    draft_verify_failures += o.draft_verify_failures;
    steps_accepted += o.steps_accepted;
    steps_rejected += o.steps_rejected;
    fallbacks += o.fallbacks;
    drafts_committed += o.drafts_committed;
    target_steps_adopted += o.target_steps_adopted;
    iterations += o.iterations;
    return *this;
  }

  friend CostLedger operator+(CostLedger a, const CostLedger& b) { return a += b; }
  friend bool operator==(const CostLedger&, const CostLedger&) = default;

  /// Total tokens produced by the target model, rival steps and fallbacks together.
  std::size_t target_tokens_total() const { return target_gen_tokens + fallback_gen_tokens; }
  std::size_t target_forward_calls_total() const { return target_gen_forward_calls + fallback_gen_forward_calls; }
};

}  // namespace confspec
