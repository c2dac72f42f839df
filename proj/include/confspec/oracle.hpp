#pragma once

// The generator/verifier contract every model backend implements, plus the
// verification query and verdict types.

#include <cstddef>
#include <string>
#include <vector>

#include "confspec/core.hpp"

namespace confspec {

enum class Decision { accept, reject };
enum class Tier { draft, target };

inline const char* to_string(Decision d) { return d == Decision::accept ? "accept" : "reject"; }
inline const char* to_string(Tier t) { return t == Tier::draft ? "draft" : "target"; }

struct VerificationVerdict {
  Decision decision = Decision::reject;
  double confidence = 0.5;  // probability mass of the returned decision
  Tier tier = Tier::draft;

  bool accepted() const noexcept { return decision == Decision::accept; }
  friend bool operator==(const VerificationVerdict&, const VerificationVerdict&) = default;
};

/// Builds a verdict from the probability of the accept class. The decision is
/// the majority class (ties at exactly 0.5 go to accept) and the confidence is
/// the probability of that decision, so it always lies in [0.5, 1].
inline VerificationVerdict verdict_from_decision_probability(double p_accept, Tier tier) {
  if (!(p_accept >= 0.0 && p_accept <= 1.0)) {
    throw ValidationError("decision probability outside [0, 1]: " + std::to_string(p_accept));
  }
  VerificationVerdict v;
  v.decision = p_accept >= 0.5 ? Decision::accept : Decision::reject;
  v.confidence = p_accept >= 0.5 ? p_accept : 1.0 - p_accept;
  v.tier = tier;
  return v;
}

/// Asks whether `draft_step` and `target_step` are interchangeable as the
/// next step after `context` (which already includes any accepted draft prefix).
struct VerificationQuery {
  const ReasoningContext& context;
  const Step& draft_step;
  const Step& target_step;
};

class Generator {
 public:
  virtual ~Generator() = default;

  /// Draws sample `sample_index` of the next step. Index 0 is the model's
  /// primary (greedy) continuation; other indices give alternative candidates
  /// for tree drafting.
  virtual Step sample_step(const ReasoningContext& context, std::size_t sample_index) = 0;

  Step generate_step(const ReasoningContext& context) { return sample_step(context, 0); }

  /// k steps, each conditioned on the ones before it. Stops early after a step
  /// flagged end_of_sequence.
  virtual std::vector<Step> generate_steps(const ReasoningContext& context, std::size_t k) {
    std::vector<Step> out;
    out.reserve(k);
    ReasoningContext running = context;
    for (std::size_t i = 0; i < k; ++i) {
      Step step = generate_step(running);
      const bool eos = step.end_of_sequence;
      if (step.empty()) {
        if (eos) break;
        throw ContractViolation("generator produced an empty step");
      }
      running = running.speculate(std::span<const Step>(&step, 1));
      out.push_back(std::move(step));
      if (eos) break;
    }
    return out;
  }
};

class Verifier {
 public:
  virtual ~Verifier() = default;
  virtual VerificationVerdict verify(const VerificationQuery& query) = 0;
};

/// A model that can both propose steps and judge step pairs.
class Model : public Generator, public Verifier {};

}  // namespace confspec
