#pragma once

// Domain types shared by the engine, the simulated world and the backends:
// reasoning steps, the step boundary convention, the evolving reasoning
// context and the run configuration.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "confspec/errors.hpp"

namespace confspec {

enum class StepOrigin { draft, target, fallback };

inline const char* to_string(StepOrigin origin) {
  switch (origin) {
    case StepOrigin::draft: return "draft";
    case StepOrigin::target: return "target";
    case StepOrigin::fallback: return "fallback";
  }
  return "unknown";
}

/// Number of maximal runs of non-whitespace characters.
inline std::size_t count_whitespace_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

inline bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(),
                     [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; });
}

/// One reasoning unit. `text` never contains the boundary delimiter.
///
/// `forward_passes` is the number of sequential model forward passes spent
/// producing the text; it equals `estimated_tokens` for plain autoregressive
/// decoding and drops below it when token-level speculation is layered under
/// the generator.
struct Step {
  std::string text;
  std::size_t estimated_tokens = 0;
  StepOrigin origin = StepOrigin::draft;
  bool incomplete = false;
  bool end_of_sequence = false;
  std::size_t forward_passes = 0;

  bool empty() const noexcept { return text.empty(); }
  friend bool operator==(const Step&, const Step&) = default;
};

inline Step make_step(std::string text, StepOrigin origin = StepOrigin::draft) {
  Step step;
  step.estimated_tokens = count_whitespace_tokens(text);
  step.forward_passes = step.estimated_tokens;
  step.text = std::move(text);
  step.origin = origin;
  return step;
}

struct BoundaryDelimiter {
  std::string literal = "\n\n";

  void validate() const {
    if (literal.empty()) throw ValidationError("boundary delimiter must be non-empty");
  }
  bool occurs_in(std::string_view text) const { return text.find(literal) != std::string_view::npos; }
};

struct SplitResult {
  std::vector<Step> steps;
  std::size_t dropped_empty = 0;
};

/// Splits generated text at every occurrence of the delimiter. Blank segments
/// are dropped and counted; a trailing segment without a closing delimiter is
/// kept and flagged `incomplete`.
inline SplitResult split_into_steps(std::string_view text, const BoundaryDelimiter& delimiter = {}) {
  delimiter.validate();
  SplitResult result;
  std::size_t begin = 0;
  while (begin < text.size()) {
    const std::size_t hit = text.find(delimiter.literal, begin);
    const bool closed = hit != std::string_view::npos;
    const std::string_view piece = text.substr(begin, closed ? hit - begin : std::string_view::npos);
    if (is_blank(piece)) {
      ++result.dropped_empty;
    } else {
      Step step = make_step(std::string(piece));
      step.incomplete = !closed;
      result.steps.push_back(std::move(step));
    }
    if (!closed) break;
    begin = hit + delimiter.literal.size();
  }
  return result;
}

/// Inverse of split_into_steps for complete steps: every step followed by one delimiter.
inline std::string join_steps(std::span<const Step> steps, const BoundaryDelimiter& delimiter = {}) {
  std::string out;
  for (const Step& step : steps) {
    out += step.text;
    if (!step.incomplete) out += delimiter.literal;
  }
  return out;
}

/// The prompt plus every accepted step, with the token budget bookkeeping.
/// tokens_used always equals prompt tokens + sum of accepted step tokens and
/// never exceeds token_budget.
class ReasoningContext {
 public:
  ReasoningContext(std::string prompt, std::size_t token_budget)
      : prompt_(std::move(prompt)),
        prompt_tokens_(count_whitespace_tokens(prompt_)),
        tokens_used_(prompt_tokens_),
        token_budget_(token_budget) {
    if (token_budget_ == 0) throw ValidationError("token budget must be positive");
    if (prompt_tokens_ > token_budget_) throw BudgetError(0, prompt_tokens_, token_budget_);
  }

  const std::string& prompt() const noexcept { return prompt_; }
  const std::vector<Step>& steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return steps_.size(); }
  std::size_t prompt_tokens() const noexcept { return prompt_tokens_; }
  std::size_t tokens_used() const noexcept { return tokens_used_; }
  std::size_t token_budget() const noexcept { return token_budget_; }
  std::size_t remaining() const noexcept { return token_budget_ - tokens_used_; }

  bool fits(const Step& step) const noexcept { return step.estimated_tokens <= remaining(); }

  /// Appends in place. Returns false, leaving the context untouched, when the
  /// step does not fit the remaining budget.
  bool try_append(Step step) {
    if (step.empty()) throw ContractViolation("cannot append an empty step");
    if (!fits(step)) return false;
    tokens_used_ += step.estimated_tokens;
    steps_.push_back(std::move(step));
    return true;
  }

  /// A copy extended by a hypothetical prefix of steps that will never be
  /// committed as-is; the copy's budget is widened so the prefix always fits.
  ReasoningContext speculate(std::span<const Step> prefix) const {
    ReasoningContext copy = *this;
    std::size_t extra = 0;
    for (const Step& step : prefix) extra += step.estimated_tokens;
    copy.token_budget_ = std::max(copy.token_budget_, copy.tokens_used_ + extra);
    for (const Step& step : prefix) copy.try_append(step);
    return copy;
  }

  /// Text seen by a model: prompt, then every accepted step, each followed by the delimiter.
  std::string render(const BoundaryDelimiter& delimiter = {}) const {
    std::string out = prompt_;
    out += delimiter.literal;
    out += join_steps(steps_, delimiter);
    return out;
  }

  friend bool operator==(const ReasoningContext&, const ReasoningContext&) = default;

 private:
  std::string prompt_;
  std::vector<Step> steps_;
  std::size_t prompt_tokens_ = 0;
  std::size_t tokens_used_ = 0;
  std::size_t token_budget_ = 0;
};

/// Pure append; throws BudgetError when the step would overrun the budget.
inline ReasoningContext append_step(const ReasoningContext& context, Step step) {
  if (step.empty()) throw ContractViolation("cannot append an empty step");
  if (!context.fits(step)) throw BudgetError(context.tokens_used(), step.estimated_tokens, context.token_budget());
  ReasoningContext next = context;
  next.try_append(std::move(step));
  return next;
}

enum class RejectPolicy { regenerate, adopt_target_step };

inline const char* to_string(RejectPolicy policy) {
  return policy == RejectPolicy::regenerate ? "regenerate" : "adopt_target_step";
}

struct RunConfig {
  double gamma = 0.9;
  std::size_t draft_steps = 5;
  std::size_t tree_width = 1;
  std::size_t token_budget = 32768;
  std::uint64_t seed = 0;
  RejectPolicy reject_policy = RejectPolicy::regenerate;
  // Escalate every verification regardless of confidence (target-only verification).
  bool always_escalate = false;
  BoundaryDelimiter delimiter;
  std::string answer_marker = "answer:";
  // Dispatch the k rival target generations (and W candidate verifications) concurrently.
  bool concurrent_dispatch = false;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in [0, 1]");
    if (draft_steps < 1) throw ValidationError("draft_steps must be >= 1");
    if (tree_width < 1) throw ValidationError("tree_width must be >= 1");
    if (token_budget < 1) throw ValidationError("token_budget must be >= 1");
    delimiter.validate();
  }
};

/// Text following the last occurrence of `marker` in `text`, trimmed; empty if absent.
inline std::string extract_answer(std::string_view text, std::string_view marker) {
  if (marker.empty()) return {};
  const std::size_t pos = text.rfind(marker);
  if (pos == std::string_view::npos) return {};
  std::string_view rest = text.substr(pos + marker.size());
  while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.front()))) rest.remove_prefix(1);
  while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.back()))) rest.remove_suffix(1);
  return std::string(rest);
}

}  // namespace confspec
