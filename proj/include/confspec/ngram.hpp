#pragma once

// Prompt-lookup decoding: token-level speculation from an n-gram cache of the
// tokens emitted so far, layered beneath a step generator.
//
// Tokens are whitespace-delimited words. Step boundaries appear in the cache as
// a separator token so that n-grams spanning a boundary can still match.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "confspec/core.hpp"
#include "confspec/errors.hpp"
#include "confspec/oracle.hpp"

namespace confspec {

using Token = std::string;

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

inline const Token& boundary_token() {
  static const Token t = "\n\n";
  return t;
}

struct NgramConfig {
  std::size_t n = 2;
  std::size_t max_draft = 8;

  void validate() const {
    if (n < 1) throw ValidationError("ngram n must be >= 1");
    if (max_draft < 1) throw ValidationError("ngram max_draft must be >= 1");
  }
};

/// Append-only token cache with a lookup from each n-gram to the start of its
/// most recent occurrence that has at least one following token.
class NgramIndex {
 public:
  explicit NgramIndex(NgramConfig config = {}) : config_(config) { config_.validate(); }

  const NgramConfig& config() const noexcept { return config_; }
  const std::vector<Token>& cache() const noexcept { return cache_; }
  std::size_t size() const noexcept { return cache_.size(); }

  void append(Token token) {
    cache_.push_back(std::move(token));
    // The n-gram ending just before the new token now has a continuation.
    if (cache_.size() > config_.n) {
      const std::size_t start = cache_.size() - 1 - config_.n;
      latest_[key(start)] = start;
    }
  }

  void append(std::span<const Token> tokens) {
    for (const Token& t : tokens) append(t);
  }

  /// Up to max_draft tokens that followed the most recent earlier occurrence
  /// of `suffix`; empty when there is none.
  std::vector<Token> propose(std::span<const Token> suffix) const {
    if (suffix.size() != config_.n) throw ValidationError("suffix length must equal n");
    const auto it = latest_.find(std::vector<Token>(suffix.begin(), suffix.end()));
    if (it == latest_.end()) return {};
    const std::size_t from = it->second + config_.n;
    const std::size_t to = std::min(cache_.size(), from + config_.max_draft);
    return {cache_.begin() + static_cast<std::ptrdiff_t>(from), cache_.begin() + static_cast<std::ptrdiff_t>(to)};
  }

  /// Proposal for the cache's own last n tokens.
  std::vector<Token> propose_next() const {
    if (cache_.size() < config_.n) return {};
    return propose(std::span<const Token>(cache_).subspan(cache_.size() - config_.n));
  }

 private:
  std::vector<Token> key(std::size_t start) const {
    return {cache_.begin() + static_cast<std::ptrdiff_t>(start),
            cache_.begin() + static_cast<std::ptrdiff_t>(start + config_.n)};
  }

  NgramConfig config_;
  std::vector<Token> cache_;
  std::map<std::vector<Token>, std::size_t> latest_;
};

/// Length of the longest prefix of `proposal` that the target stream agrees
/// with. `next_true(i)` is the target's token i positions ahead, or nullopt
/// past the end of the stream.
inline std::size_t verify_tokens(std::span<const Token> proposal,
                                 const std::function<std::optional<Token>(std::size_t)>& next_true) {
  std::size_t i = 0;
  while (i < proposal.size()) {
    const std::optional<Token> t = next_true(i);
    if (!t || *t != proposal[i]) break;
    ++i;
  }
  return i;
}

inline std::size_t verify_tokens(std::span<const Token> proposal, std::span<const Token> truth) {
  return verify_tokens(proposal, [&](std::size_t i) -> std::optional<Token> {
    if (i >= truth.size()) return std::nullopt;
    return truth[i];
  });
}

/// Cache contents for a context: prompt tokens, then each step's tokens, with
/// a boundary token after the prompt and after every step.
inline NgramIndex index_context(const ReasoningContext& context, const NgramConfig& config) {
  NgramIndex index(config);
  index.append(tokenize(context.prompt()));
  index.append(boundary_token());
  for (const Step& s : context.steps()) {
    index.append(tokenize(s.text));
    index.append(boundary_token());
  }
  return index;
}

struct PldDecode {
  std::vector<Token> emitted;
  std::size_t forward_passes = 0;
  std::size_t proposed = 0;
  std::size_t accepted = 0;
};

/// Replays decoding of `truth` with prompt lookup: each pass verifies the
/// current proposal and emits the accepted tokens plus one target token.
inline PldDecode pld_decode(NgramIndex index, std::span<const Token> truth) {
  PldDecode out;
  std::size_t pos = 0;
  while (pos < truth.size()) {
    const std::vector<Token> proposal = index.propose_next();
    const std::size_t ok = verify_tokens(proposal, truth.subspan(pos));
    const std::size_t emit = std::min(ok + 1, truth.size() - pos);
    for (std::size_t i = 0; i < emit; ++i) {
      out.emitted.push_back(truth[pos + i]);
      index.append(truth[pos + i]);
    }
    out.proposed += proposal.size();
    out.accepted += ok;
    pos += emit;
    ++out.forward_passes;
  }
  return out;
}

/// Wraps a deterministic generator so each step is decoded with prompt
/// lookup. The step text is unchanged; forward_passes drops to the number of
/// verification passes. The cache is rebuilt from the context on every call,
/// so the wrapper holds no per-trace state.
class PromptLookupGenerator final : public Generator {
 public:
  PromptLookupGenerator(Generator& inner, NgramConfig config = {}) : inner_(inner), config_(config) {
    config_.validate();
  }

  Step sample_step(const ReasoningContext& context, std::size_t sample_index) override {
    Step step = inner_.sample_step(context, sample_index);
    if (step.empty()) return step;
    const std::vector<Token> truth = tokenize(step.text);
    const PldDecode d = pld_decode(index_context(context, config_), truth);
    if (d.emitted != truth) throw ContractViolation("prompt lookup changed the token stream");
    step.forward_passes = d.forward_passes;
    return step;
  }

  const NgramConfig& config() const noexcept { return config_; }

 private:
  Generator& inner_;
  NgramConfig config_;
};

/// A model whose generation goes through prompt lookup and whose verification
/// is delegated unchanged.
class PromptLookupModel final : public Model {
 public:
  PromptLookupModel(Model& inner, NgramConfig config = {}) : inner_(inner), generator_(inner, config) {}

  Step sample_step(const ReasoningContext& context, std::size_t sample_index) override {
    return generator_.sample_step(context, sample_index);
  }
  VerificationVerdict verify(const VerificationQuery& query) override { return inner_.verify(query); }

 private:
  Model& inner_;
  PromptLookupGenerator generator_;
};

/// Emitted target tokens per target forward pass.
inline double tokens_per_target_call(std::size_t target_tokens, std::size_t target_forward_calls) {
  if (target_forward_calls == 0) throw UndefinedRateError("no target forward passes");
  return static_cast<double>(target_tokens) / static_cast<double>(target_forward_calls);
}

}  // namespace confspec
