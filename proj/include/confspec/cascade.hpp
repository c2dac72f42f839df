#pragma once

// Confidence-gated cascaded verification engine.
//
// One iteration drafts k steps with the draft model, lets the target model
// produce its own rival version of each step (conditioned on the draft prefix
// before it), then walks the pairs in order: the draft model judges each pair
// and its verdict stands when its confidence reaches gamma, otherwise the
// target model judges. The first rejection ends verification. Accepted drafts
// are committed; if none was accepted, the target model supplies the next step.
//
// Tree mode drafts W candidates per layer and keeps the accepted candidate with
// the highest verification confidence.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <future>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "confspec/core.hpp"
#include "confspec/ledger.hpp"
#include "confspec/oracle.hpp"

namespace confspec {

/// A verifier tier failed in a way the cascade could not absorb.
class EscalationError : public Error {
 public:
  EscalationError(Tier tier, const std::string& what)
      : Error(ErrorKind::escalation, std::string(to_string(tier)) + "-tier verification failed: " + what),
        tier_(tier) {}
  Tier tier() const noexcept { return tier_; }

 private:
  Tier tier_;
};

/// Candidates and verdicts at one drafting layer. Linear mode has exactly one
/// candidate per layer.
struct LayerRecord {
  std::vector<Step> candidates;
  std::vector<VerificationVerdict> verdicts;
  Step target_step;
  std::optional<std::size_t> selected;

  friend bool operator==(const LayerRecord&, const LayerRecord&) = default;
};

struct IterationRecord {
  std::vector<Step> drafted;
  std::vector<Step> target_steps;
  // Verdicts along the committed path; ends with the rejecting verdict if any.
  std::vector<VerificationVerdict> verdicts;
  std::vector<LayerRecord> layers;
  std::size_t accepted_count = 0;
  bool fallback_used = false;
  std::size_t candidate_set_size = 1;
  bool budget_truncated = false;
  std::size_t steps_appended = 0;
  CostLedger ledger;

  bool rejected() const noexcept { return verdicts.size() > accepted_count; }
  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

enum class Termination { answer, end_of_sequence, budget_exhausted };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::answer: return "answer";
    case Termination::end_of_sequence: return "end_of_sequence";
    case Termination::budget_exhausted: return "budget_exhausted";
  }
  return "unknown";
}

struct ReasoningTrace {
  ReasoningContext context;
  std::string final_answer;
  std::vector<IterationRecord> iterations;
  CostLedger ledger;
  Termination termination = Termination::end_of_sequence;

  bool budget_exhausted() const noexcept { return termination == Termination::budget_exhausted; }
  friend bool operator==(const ReasoningTrace&, const ReasoningTrace&) = default;
};

struct IterationOutcome {
  ReasoningContext context;
  IterationRecord record;
};

/// Two-tier decision: the draft verdict stands when its confidence is at least
/// gamma; otherwise (or always, with `always_escalate`) the target verifier
/// decides. A failing draft tier is counted and escalated; a failing target
/// tier raises EscalationError.
inline VerificationVerdict cascaded_verify(const VerificationQuery& query, double gamma, Verifier& draft_verifier,
                                           Verifier& target_verifier, CostLedger& ledger,
                                           bool always_escalate = false) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in [0, 1]");
  ++ledger.draft_verify_calls;
  std::optional<VerificationVerdict> draft_verdict;
  try {
    draft_verdict = draft_verifier.verify(query);
    draft_verdict->tier = Tier::draft;
  } catch (const Error&) {
    ++ledger.draft_verify_failures;
  }
  if (draft_verdict && !always_escalate && draft_verdict->confidence >= gamma) return *draft_verdict;

  ++ledger.target_verify_calls;
  try {
    VerificationVerdict v = target_verifier.verify(query);
    v.tier = Tier::target;
    return v;
  } catch (const EscalationError&) {
    throw;
  } catch (const Error& e) {
    throw EscalationError(Tier::target, e.what());
  }
}

inline VerificationVerdict cascaded_verify(const VerificationQuery& query, double gamma, Verifier& draft_verifier,
                                           Verifier& target_verifier) {
  CostLedger scratch;
  return cascaded_verify(query, gamma, draft_verifier, target_verifier, scratch);
}

/// Index of the highest-confidence verdict; ties go to the lowest index.
inline std::size_t select_best_index(std::span<const VerificationVerdict> verdicts) {
  if (verdicts.empty()) throw ContractViolation("candidate set is empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < verdicts.size(); ++i) {
    if (verdicts[i].confidence > verdicts[best].confidence) best = i;
  }
  return best;
}

inline Step select_best_candidate(std::span<const std::pair<Step, VerificationVerdict>> candidates) {
  if (candidates.empty()) throw ContractViolation("candidate set is empty");
  std::vector<VerificationVerdict> verdicts;
  verdicts.reserve(candidates.size());
  for (const auto& [step, verdict] : candidates) {
    if (!verdict.accepted()) throw ContractViolation("select_best_candidate requires accepted candidates only");
    verdicts.push_back(verdict);
  }
  return candidates[select_best_index(verdicts)].first;
}

namespace detail {

inline void check_generated(const Step& step, const RunConfig& config) {
  if (step.empty() && !step.end_of_sequence) throw ContractViolation("generator produced an empty step");
  if (config.delimiter.occurs_in(step.text)) {
    throw ContractViolation("generated step contains the boundary delimiter");
  }
}

inline Step stamped(Step step, StepOrigin origin, const RunConfig& config) {
  check_generated(step, config);
  step.origin = origin;
  return step;
}

/// Runs `jobs` and returns their results in order, concurrently when asked to.
template <typename T>
std::vector<T> dispatch(std::vector<std::function<T()>>& jobs, bool concurrent) {
  std::vector<T> out;
  out.reserve(jobs.size());
  if (!concurrent || jobs.size() < 2) {
    for (auto& job : jobs) out.push_back(job());
    return out;
  }
  std::vector<std::future<T>> pending;
  pending.reserve(jobs.size());
  for (auto& job : jobs) pending.push_back(std::async(std::launch::async, job));
  for (auto& f : pending) out.push_back(f.get());
  return out;
}

inline bool ends_generation(const Step& step, const RunConfig& config) {
  if (step.end_of_sequence) return true;
  return !config.answer_marker.empty() && step.text.find(config.answer_marker) != std::string::npos;
}

/// Context snapshots: element j is `context` extended by drafted[0..j).
inline std::vector<ReasoningContext> prefix_contexts(const ReasoningContext& context, std::span<const Step> drafted) {
  std::vector<ReasoningContext> out;
  if (drafted.empty()) return out;
  out.reserve(drafted.size());
  out.push_back(context);
  for (std::size_t j = 1; j < drafted.size(); ++j) {
    out.push_back(out.back().speculate(drafted.subspan(j - 1, 1)));
  }
  return out;
}

inline std::vector<Step> draft_principal_chain(const ReasoningContext& context, const RunConfig& config,
                                               Generator& draft, CostLedger& ledger) {
  std::vector<Step> drafted = draft.generate_steps(context, config.draft_steps);
  if (drafted.size() > config.draft_steps) throw ContractViolation("draft produced more than k steps");
  for (Step& s : drafted) {
    s = stamped(std::move(s), StepOrigin::draft, config);
    ledger.draft_gen_tokens += s.estimated_tokens;
    ledger.draft_gen_latency += s.forward_passes;
  }
  return drafted;
}

/// The k rival target generations; dispatched as one batch.
inline std::vector<Step> rival_target_steps(std::span<const ReasoningContext> prefixes, const RunConfig& config,
                                            Generator& target, CostLedger& ledger) {
  std::vector<std::function<Step()>> jobs;
  jobs.reserve(prefixes.size());
  for (const ReasoningContext& prefix : prefixes) {
    jobs.emplace_back([&target, &prefix] { return target.generate_step(prefix); });
  }
  std::vector<Step> targets = dispatch(jobs, config.concurrent_dispatch);
  std::size_t longest = 0;
  for (Step& s : targets) {
    s = stamped(std::move(s), StepOrigin::target, config);
    ledger.target_gen_tokens += s.estimated_tokens;
    ledger.target_gen_forward_calls += s.forward_passes;
    longest = std::max(longest, s.forward_passes);
  }
  ledger.target_gen_latency += longest;
  return targets;
}

inline void count_verdict(const VerificationVerdict& v, CostLedger& ledger) {
  if (v.accepted()) {
    ++ledger.steps_accepted;
  } else {
    ++ledger.steps_rejected;
  }
}

/// Stage 3: commit the accepted prefix, or fall back to the target model.
/// `rejected_target` is the target's step at the rejected position, if any.
inline ReasoningContext commit(const ReasoningContext& context, std::span<const Step> accepted,
                               const Step* rejected_target, const RunConfig& config, Generator& target,
                               IterationRecord& record) {
  ReasoningContext next = context;
  record.accepted_count = accepted.size();
  record.fallback_used = accepted.empty();

  auto append = [&](const Step& step) {
    if (step.empty()) return false;
    if (!next.try_append(step)) {
      record.budget_truncated = true;
      return false;
    }
    ++record.steps_appended;
    return true;
  };

  if (!accepted.empty()) {
    bool open = true;
    for (const Step& s : accepted) {
      if (!append(s)) {
        open = false;
        break;
      }
      ++record.ledger.drafts_committed;
      if (ends_generation(s, config)) {
        open = false;
        break;
      }
    }
    if (open && rejected_target != nullptr && config.reject_policy == RejectPolicy::adopt_target_step) {
      if (append(*rejected_target)) ++record.ledger.target_steps_adopted;
    }
    return next;
  }

  ++record.ledger.fallbacks;
  if (config.reject_policy == RejectPolicy::adopt_target_step && rejected_target != nullptr) {
    if (append(*rejected_target)) ++record.ledger.target_steps_adopted;
    return next;
  }
  Step fresh = stamped(target.generate_step(context), StepOrigin::fallback, config);
  record.ledger.fallback_gen_tokens += fresh.estimated_tokens;
  record.ledger.fallback_gen_forward_calls += fresh.forward_passes;
  append(std::move(fresh));
  return next;
}

}  // namespace detail

/// One linear iteration (W = 1).
inline IterationOutcome run_iteration(const ReasoningContext& context, const RunConfig& config, Model& draft,
                                      Model& target) {
  config.validate();
  IterationRecord record;
  CostLedger& ledger = record.ledger;
  ledger.iterations = 1;

  record.drafted = detail::draft_principal_chain(context, config, draft, ledger);
  const std::vector<ReasoningContext> prefixes = detail::prefix_contexts(context, record.drafted);
  record.target_steps = detail::rival_target_steps(prefixes, config, target, ledger);

  std::vector<Step> accepted;
  const Step* rejected_target = nullptr;
  for (std::size_t j = 0; j < record.drafted.size(); ++j) {
    const VerificationQuery query{prefixes[j], record.drafted[j], record.target_steps[j]};
    const VerificationVerdict v = cascaded_verify(query, config.gamma, draft, target, ledger, config.always_escalate);
    detail::count_verdict(v, ledger);
    record.verdicts.push_back(v);
    LayerRecord layer{{record.drafted[j]}, {v}, record.target_steps[j], std::nullopt};
    if (v.accepted()) layer.selected = 0;
    record.layers.push_back(std::move(layer));
    if (!v.accepted()) {
      rejected_target = &record.target_steps[j];
      break;
    }
    accepted.push_back(record.drafted[j]);
  }

  ReasoningContext next = detail::commit(context, accepted, rejected_target, config, target, record);
  return {std::move(next), std::move(record)};
}

/// One tree-structured iteration. The draft's primary chain and its rival
/// target steps are produced up front exactly as in linear mode; at each layer
/// W - 1 alternative candidates are sampled from the selected prefix and all W
/// candidates are verified against the layer's target step. Once an
/// alternative is selected the precomputed chain no longer applies and later
/// layers are drafted and answered one at a time. With W = 1 the result is
/// identical to run_iteration.
inline IterationOutcome run_tree_iteration(const ReasoningContext& context, const RunConfig& config, Model& draft,
                                           Model& target) {
  config.validate();
  const std::size_t width = config.tree_width;
  IterationRecord record;
  record.candidate_set_size = width;
  CostLedger& ledger = record.ledger;
  ledger.iterations = 1;

  record.drafted = detail::draft_principal_chain(context, config, draft, ledger);
  const std::vector<ReasoningContext> prefixes = detail::prefix_contexts(context, record.drafted);
  record.target_steps = detail::rival_target_steps(prefixes, config, target, ledger);

  std::vector<Step> selected_path;
  std::optional<Step> rejected_target;
  bool diverged = false;

  for (std::size_t layer_index = 0; layer_index < config.draft_steps; ++layer_index) {
    if (!diverged && layer_index >= record.drafted.size()) break;
    LayerRecord layer;
    ReasoningContext layer_context =
        diverged ? context.speculate(selected_path) : prefixes[layer_index];

    // Candidates: index 0 is the primary continuation, the rest are alternatives.
    std::size_t batch_latency = 0;
    if (diverged) {
      Step primary = detail::stamped(draft.sample_step(layer_context, 0), StepOrigin::draft, config);
      if (primary.empty()) break;
      ledger.draft_gen_tokens += primary.estimated_tokens;
      batch_latency = primary.forward_passes;
      layer.candidates.push_back(std::move(primary));
    } else {
      layer.candidates.push_back(record.drafted[layer_index]);
    }
    for (std::size_t i = 1; i < width; ++i) {
      Step alt = detail::stamped(draft.sample_step(layer_context, i), StepOrigin::draft, config);
      ledger.draft_gen_tokens += alt.estimated_tokens;
      batch_latency = std::max(batch_latency, alt.forward_passes);
      if (!alt.empty()) layer.candidates.push_back(std::move(alt));
    }
    ledger.draft_gen_latency += batch_latency;

    if (diverged) {
      Step t = detail::stamped(target.generate_step(layer_context), StepOrigin::target, config);
      ledger.target_gen_tokens += t.estimated_tokens;
      ledger.target_gen_forward_calls += t.forward_passes;
      ledger.target_gen_latency += t.forward_passes;
      layer.target_step = t;
      record.target_steps.push_back(std::move(t));
    } else {
      layer.target_step = record.target_steps[layer_index];
    }

    std::vector<std::function<VerificationVerdict()>> jobs;
    std::vector<CostLedger> job_ledgers(layer.candidates.size());
    for (std::size_t i = 0; i < layer.candidates.size(); ++i) {
      jobs.emplace_back([&, i] {
        const VerificationQuery query{layer_context, layer.candidates[i], layer.target_step};
        return cascaded_verify(query, config.gamma, draft, target, job_ledgers[i], config.always_escalate);
      });
    }
    layer.verdicts = detail::dispatch(jobs, config.concurrent_dispatch);
    for (std::size_t i = 0; i < layer.verdicts.size(); ++i) {
      ledger += job_ledgers[i];
      detail::count_verdict(layer.verdicts[i], ledger);
    }

    std::vector<std::size_t> accepted_indices;
    std::vector<VerificationVerdict> accepted_verdicts;
    for (std::size_t i = 0; i < layer.verdicts.size(); ++i) {
      if (layer.verdicts[i].accepted()) {
        accepted_indices.push_back(i);
        accepted_verdicts.push_back(layer.verdicts[i]);
      }
    }
    if (accepted_indices.empty()) {
      record.verdicts.push_back(layer.verdicts.front());
      rejected_target = layer.target_step;
      record.layers.push_back(std::move(layer));
      break;
    }
    const std::size_t choice = accepted_indices[select_best_index(accepted_verdicts)];
    layer.selected = choice;
    record.verdicts.push_back(layer.verdicts[choice]);
    const Step chosen = layer.candidates[choice];
    if (!diverged && chosen.text != record.drafted[layer_index].text) diverged = true;
    selected_path.push_back(chosen);
    record.layers.push_back(std::move(layer));
    if (detail::ends_generation(chosen, config)) break;
  }

  const Step* rejected = rejected_target ? &*rejected_target : nullptr;
  ReasoningContext next = detail::commit(context, selected_path, rejected, config, target, record);
  return {std::move(next), std::move(record)};
}

/// Iterates until the latest step carries the answer marker, a generator
/// signals end of sequence, or the token budget is exhausted.
inline ReasoningTrace run_trace(const std::string& prompt, const RunConfig& config, Model& draft, Model& target) {
  config.validate();
  if (prompt.empty()) throw ValidationError("prompt must be non-empty");
  ReasoningTrace trace{ReasoningContext(prompt, config.token_budget), {}, {}, {}, Termination::budget_exhausted};
  while (trace.context.remaining() > 0) {
    IterationOutcome outcome = config.tree_width > 1 ? run_tree_iteration(trace.context, config, draft, target)
                                                     : run_iteration(trace.context, config, draft, target);
    trace.ledger += outcome.record.ledger;
    const bool truncated = outcome.record.budget_truncated;
    const std::size_t appended = outcome.record.steps_appended;
    trace.iterations.push_back(std::move(outcome.record));
    trace.context = std::move(outcome.context);

    if (appended > 0) {
      const Step& last = trace.context.steps().back();
      if (!config.answer_marker.empty() && last.text.find(config.answer_marker) != std::string::npos) {
        trace.termination = Termination::answer;
        trace.final_answer = extract_answer(last.text, config.answer_marker);
        return trace;
      }
      if (last.end_of_sequence) {
        trace.termination = Termination::end_of_sequence;
        return trace;
      }
    }
    if (truncated) {
      trace.termination = Termination::budget_exhausted;
      return trace;
    }
    if (appended == 0) {
      trace.termination = Termination::end_of_sequence;
      return trace;
    }
  }
  trace.termination = Termination::budget_exhausted;
  return trace;
}

/// Reference run without speculation: the target model generates every step.
inline ReasoningTrace run_target_only(const std::string& prompt, const RunConfig& config, Generator& target) {
  config.validate();
  if (prompt.empty()) throw ValidationError("prompt must be non-empty");
  ReasoningTrace trace{ReasoningContext(prompt, config.token_budget), {}, {}, {}, Termination::budget_exhausted};
  while (trace.context.remaining() > 0) {
    IterationRecord record;
    record.ledger.iterations = 1;
    Step s = detail::stamped(target.generate_step(trace.context), StepOrigin::target, config);
    record.ledger.target_gen_tokens += s.estimated_tokens;
    record.ledger.target_gen_forward_calls += s.forward_passes;
    record.ledger.target_gen_latency += s.forward_passes;
    record.target_steps.push_back(s);
    const bool eos = s.end_of_sequence;
    if (!s.empty()) {
      if (trace.context.try_append(s)) {
        record.steps_appended = 1;
      } else {
        record.budget_truncated = true;
      }
    }
    trace.ledger += record.ledger;
    const bool truncated = record.budget_truncated;
    trace.iterations.push_back(std::move(record));
    if (truncated) break;
    if (!trace.context.steps().empty()) {
      const Step& last = trace.context.steps().back();
      if (!config.answer_marker.empty() && last.text.find(config.answer_marker) != std::string::npos) {
        trace.termination = Termination::answer;
        trace.final_answer = extract_answer(last.text, config.answer_marker);
        return trace;
      }
    }
    if (eos || s.empty()) {
      trace.termination = Termination::end_of_sequence;
      return trace;
    }
  }
  trace.termination = Termination::budget_exhausted;
  return trace;
}

}  // namespace confspec
