#pragma once

// A synthetic reasoning environment with computable ground truth.
//
// A task is a chain of modular-arithmetic transitions from a start state. Each
// step text names an operation, its operand and the resulting state, e.g.
// "s3: add 5 -> 10". Two steps are equivalent when they reach the same state
// from the same prior state, which the oracle decides exactly.
//
// The target generator always emits the ground-truth transition. The draft
// generator is right with probability draft_step_accuracy, sometimes phrasing a
// right step with a different but equivalent operation. Verifiers are right
// with a per-difficulty-class probability and report a confidence centred on a
// per-class value. All randomness is keyed by (seed, event coordinates).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "confspec/core.hpp"
#include "confspec/errors.hpp"
#include "confspec/metrics.hpp"
#include "confspec/oracle.hpp"
#include "confspec/rng.hpp"

namespace confspec::sim {

enum class Operation { add, mul };

inline const char* to_string(Operation op) { return op == Operation::add ? "add" : "mul"; }

struct Transition {
  Operation op = Operation::add;
  std::int64_t operand = 0;
  friend bool operator==(const Transition&, const Transition&) = default;
};

inline std::int64_t apply(const Transition& t, std::int64_t state, std::int64_t modulus) {
  const std::int64_t v = t.op == Operation::add ? state + t.operand : state * t.operand;
  return ((v % modulus) + modulus) % modulus;
}

/// Verifier behaviour for one tier. Confidence centres default to the class
/// accuracy, which makes the verifier calibrated when confidence_noise is 0.
struct CalibrationProfile {
  double easy_accuracy = 1.0;
  double hard_accuracy = 1.0;
  double confidence_noise = 0.0;
  std::optional<double> easy_confidence;
  std::optional<double> hard_confidence;
  // Probability that a would-be false rejection of an equivalent pair comes
  // out as an accept instead. Zero keeps decisions right with exactly the
  // class accuracy.
  double leniency = 0.0;

  double easy_center() const { return easy_confidence.value_or(easy_accuracy); }
  double hard_center() const { return hard_confidence.value_or(hard_accuracy); }

  void validate() const {
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!unit(easy_accuracy) || !unit(hard_accuracy)) throw ValidationError("profile accuracies must lie in [0, 1]");
    if (easy_accuracy < hard_accuracy) throw ValidationError("easy_accuracy must be >= hard_accuracy");
    if (!(confidence_noise >= 0.0 && confidence_noise <= 0.5)) {
      throw ValidationError("confidence_noise must lie in [0, 0.5]");
    }
    if (!unit(easy_center()) || !unit(hard_center())) throw ValidationError("confidence centres must lie in [0, 1]");
    if (!unit(leniency)) throw ValidationError("leniency must lie in [0, 1]");
  }

  static CalibrationProfile perfect() { return {}; }
};

enum class StepStyle { terse, verbose };

struct SimWorldSpec {
  std::size_t chain_length = 10;
  std::int64_t modulus = 97;
  double draft_step_accuracy = 0.8;
  CalibrationProfile draft_verifier{0.95, 0.6, 0.03, std::nullopt, std::nullopt};
  CalibrationProfile target_verifier = CalibrationProfile::perfect();
  double difficulty_mix = 0.3;  // fraction of steps classed hard
  std::uint64_t seed = 0;
  StepStyle style = StepStyle::terse;
  // Fraction of right drafts phrased with an equivalent, different operation.
  double paraphrase_rate = 0.25;

  void validate() const {
    if (chain_length < 1) throw ValidationError("chain_length must be >= 1");
    if (modulus < 2) throw ValidationError("modulus must be >= 2");
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!unit(draft_step_accuracy)) throw ValidationError("draft_step_accuracy must lie in [0, 1]");
    if (!unit(difficulty_mix)) throw ValidationError("difficulty_mix must lie in [0, 1]");
    if (!unit(paraphrase_rate)) throw ValidationError("paraphrase_rate must lie in [0, 1]");
    draft_verifier.validate();
    target_verifier.validate();
  }
};

/// A step whose text encodes a state transition.
struct SimStep {
  Step step;
  Transition transition;
  std::int64_t resulting_state = 0;
};

struct Task {
  std::uint64_t id = 0;
  std::int64_t start = 0;
  std::size_t length = 0;
};

namespace tags {
inline constexpr std::uint64_t start = 0x5354;
inline constexpr std::uint64_t truth = 0x4754;
inline constexpr std::uint64_t difficulty = 0x4446;
inline constexpr std::uint64_t draft_gen = 0x4447;
inline constexpr std::uint64_t verify = 0x5646;
inline constexpr std::uint64_t leniency = 0x4c4e;
}  // namespace tags

inline Task make_task(const SimWorldSpec& spec, std::uint64_t id) {
  rng::CounterStream s(rng::hash_words({spec.seed, tags::start, id}));
  return Task{id, static_cast<std::int64_t>(s.below(static_cast<std::uint64_t>(spec.modulus))), spec.chain_length};
}

inline std::string task_prompt(const Task& task, const SimWorldSpec& spec) {
  std::ostringstream os;
  os << "task " << task.id << " start " << task.start << " mod " << spec.modulus << " steps " << task.length;
  return os.str();
}

namespace detail {

inline std::vector<std::string_view> words(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<std::int64_t> parse_int(std::string_view w) {
  if (w.empty()) return std::nullopt;
  std::int64_t v = 0;
  bool neg = false;
  std::size_t i = 0;
  if (w[0] == '-') {
    neg = true;
    i = 1;
    if (w.size() == 1) return std::nullopt;
  }
  for (; i < w.size(); ++i) {
    if (w[i] < '0' || w[i] > '9') return std::nullopt;
    v = v * 10 + (w[i] - '0');
  }
  return neg ? -v : v;
}

}  // namespace detail

/// Reads task id, start state, modulus and length back from a task prompt.
inline Task parse_prompt(std::string_view prompt, std::int64_t* modulus_out = nullptr) {
  const auto w = detail::words(prompt);
  Task task;
  bool have_id = false, have_start = false, have_len = false;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const auto v = detail::parse_int(w[i + 1]);
    if (!v) continue;
    if (w[i] == "task") task.id = static_cast<std::uint64_t>(*v), have_id = true;
    if (w[i] == "start") task.start = *v, have_start = true;
    if (w[i] == "steps") task.length = static_cast<std::size_t>(*v), have_len = true;
    if (w[i] == "mod" && modulus_out) *modulus_out = *v;
  }
  if (!have_id || !have_start || !have_len) throw OracleError("not a simulated-world task prompt: " + std::string(prompt));
  return task;
}

/// Parses "<op> <operand>" and the state after "->" or "becomes".
inline SimStep parse_sim_step(const Step& step) {
  const auto w = detail::words(step.text);
  std::optional<Transition> transition;
  std::optional<std::int64_t> result;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    if (!transition && (w[i] == "add" || w[i] == "mul")) {
      if (auto v = detail::parse_int(w[i + 1])) {
        transition = Transition{w[i] == "add" ? Operation::add : Operation::mul, *v};
      }
    }
    if (!result && (w[i] == "->" || w[i] == "becomes")) result = detail::parse_int(w[i + 1]);
  }
  if (!transition || !result) throw OracleError("unparseable state transition: \"" + step.text + "\"");
  return SimStep{step, *transition, *result};
}

/// Exact equivalence: both steps reach the same state from `prior_state`.
inline bool ground_truth_equivalent(const SimStep& a, const SimStep& b, std::int64_t prior_state,
                                    std::int64_t modulus) {
  return apply(a.transition, prior_state, modulus) == apply(b.transition, prior_state, modulus);
}

/// Parses both steps first; throws OracleError on malformed text.
inline bool ground_truth_equivalent(const Step& a, const Step& b, std::int64_t prior_state, std::int64_t modulus) {
  return ground_truth_equivalent(parse_sim_step(a), parse_sim_step(b), prior_state, modulus);
}

inline Transition ground_truth_transition(const SimWorldSpec& spec, std::uint64_t task, std::size_t position) {
  rng::CounterStream s(rng::hash_words({spec.seed, tags::truth, task, position}));
  const bool add = s.uniform() < 0.5 || spec.modulus < 3;
  const auto m = static_cast<std::uint64_t>(spec.modulus);
  if (add) return {Operation::add, static_cast<std::int64_t>(1 + s.below(m - 1))};
  return {Operation::mul, static_cast<std::int64_t>(2 + s.below(m - 2))};
}

inline bool step_is_hard(const SimWorldSpec& spec, std::uint64_t task, std::size_t position) {
  return rng::to_unit(rng::hash_words({spec.seed, tags::difficulty, task, position})) < spec.difficulty_mix;
}

/// Where a context stands: the next position (1-based) and the current state.
struct Cursor {
  Task task;
  std::size_t position = 1;
  std::int64_t state = 0;
};

inline Cursor locate(const ReasoningContext& context, const SimWorldSpec& spec) {
  Cursor c;
  c.task = parse_prompt(context.prompt());
  c.position = context.size() + 1;
  c.state = context.steps().empty() ? c.task.start : parse_sim_step(context.steps().back()).resulting_state;
  c.state = ((c.state % spec.modulus) + spec.modulus) % spec.modulus;
  return c;
}

inline std::string render_step(const SimWorldSpec& spec, std::size_t position, std::int64_t prior,
                               const Transition& t, std::int64_t result, bool final_step) {
  std::ostringstream os;
  if (spec.style == StepStyle::terse) {
    os << 's' << position << ": " << to_string(t.op) << ' ' << t.operand << " -> " << result;
    if (final_step) os << " answer: " << result;
  } else {
    os << "step " << position << " : now we take the current value " << prior << " and " << to_string(t.op) << ' '
       << t.operand << " to it , so the current value becomes " << result;
    if (final_step) os << " , answer: " << result;
  }
  return os.str();
}

inline SimStep make_sim_step(const SimWorldSpec& spec, const Cursor& at, const Transition& t) {
  const std::int64_t result = apply(t, at.state, spec.modulus);
  const bool final_step = at.position == at.task.length;
  Step step = make_step(render_step(spec, at.position, at.state, t, result, final_step));
  step.end_of_sequence = final_step;
  return SimStep{std::move(step), t, result};
}

namespace detail {

inline std::int64_t mod_inverse(std::int64_t a, std::int64_t m) {
  std::int64_t t = 0, new_t = 1, r = m, new_r = ((a % m) + m) % m;
  while (new_r != 0) {
    const std::int64_t q = r / new_r;
    t -= q * new_t;
    std::swap(t, new_t);
    r -= q * new_r;
    std::swap(r, new_r);
  }
  if (r != 1) return 0;
  return ((t % m) + m) % m;
}

/// A different operation that reaches `result` from `state`, if one exists.
inline std::optional<Transition> paraphrase(const Transition& t, std::int64_t state, std::int64_t result,
                                            std::int64_t m) {
  if (t.op == Operation::mul) return Transition{Operation::add, ((result - state) % m + m) % m};
  const std::int64_t inv = mod_inverse(state, m);
  if (inv == 0) return std::nullopt;
  return Transition{Operation::mul, (result * inv) % m};
}

}  // namespace detail

/// Draft sample `sample_index` of the next step; empty with end_of_sequence past the chain end.
inline SimStep sim_draft_generate(const ReasoningContext& context, const SimWorldSpec& spec,
                                  std::size_t sample_index = 0) {
  const Cursor at = locate(context, spec);
  if (at.position > at.task.length) {
    Step eos;
    eos.end_of_sequence = true;
    return SimStep{eos, {}, at.state};
  }
  const Transition truth = ground_truth_transition(spec, at.task.id, at.position);
  const std::int64_t m = spec.modulus;
  const std::int64_t right = apply(truth, at.state, m);
  rng::CounterStream s(rng::hash_words({spec.seed, tags::draft_gen, at.task.id, at.position,
                                        static_cast<std::uint64_t>(at.state), sample_index}));
  Transition chosen = truth;
  if (s.uniform() < spec.draft_step_accuracy) {
    if (s.uniform() < spec.paraphrase_rate) {
      if (auto alt = detail::paraphrase(truth, at.state, right, m)) chosen = *alt;
    }
  } else {
    const std::int64_t wrong = (right + 1 + static_cast<std::int64_t>(s.below(static_cast<std::uint64_t>(m - 1)))) % m;
    chosen = Transition{Operation::add, ((wrong - at.state) % m + m) % m};
  }
  SimStep out = make_sim_step(spec, at, chosen);
  out.step.origin = StepOrigin::draft;
  return out;
}

/// The ground-truth next step.
inline SimStep sim_target_generate(const ReasoningContext& context, const SimWorldSpec& spec) {
  const Cursor at = locate(context, spec);
  if (at.position > at.task.length) {
    Step eos;
    eos.end_of_sequence = true;
    return SimStep{eos, {}, at.state};
  }
  SimStep out = make_sim_step(spec, at, ground_truth_transition(spec, at.task.id, at.position));
  out.step.origin = StepOrigin::target;
  return out;
}

/// Whether the query's draft step is equivalent to its target step, from the
/// state the query's context ends in.
inline bool query_truth(const VerificationQuery& query, const SimWorldSpec& spec) {
  const Cursor at = locate(query.context, spec);
  return ground_truth_equivalent(parse_sim_step(query.draft_step), parse_sim_step(query.target_step), at.state,
                                 spec.modulus);
}

/// Simulated verdict: right with the class accuracy, confidence drawn
/// uniformly within +-confidence_noise of the class centre, clamped to [0.5, 1].
inline VerificationVerdict sim_verify(const VerificationQuery& query, const CalibrationProfile& profile,
                                      const SimWorldSpec& spec, Tier tier) {
  const Cursor at = locate(query.context, spec);
  const bool truth = ground_truth_equivalent(parse_sim_step(query.draft_step), parse_sim_step(query.target_step),
                                             at.state, spec.modulus);
  const bool hard = step_is_hard(spec, at.task.id, at.position);
  const std::uint64_t key = rng::hash_words({spec.seed, tags::verify, at.task.id, at.position,
                                             static_cast<std::uint64_t>(at.state),
                                             rng::hash_text(query.draft_step.text),
                                             rng::hash_text(query.target_step.text)});
  // Both tiers share the correctness draw, so a tier with higher accuracy is
  // right whenever a less accurate one is. The confidence draw is per tier.
  const bool right = rng::to_unit(key) < (hard ? profile.hard_accuracy : profile.easy_accuracy);
  const double u = rng::to_unit(rng::hash_words({key, static_cast<std::uint64_t>(tier)}));
  const double centre = hard ? profile.hard_center() : profile.easy_center();
  const double confidence = std::clamp(centre + profile.confidence_noise * (2.0 * u - 1.0), 0.5, 1.0);
  bool accept = right ? truth : !truth;
  if (!accept && truth && profile.leniency > 0.0) {
    accept = rng::to_unit(rng::hash_words({key, tags::leniency})) < profile.leniency;
  }
  return VerificationVerdict{accept ? Decision::accept : Decision::reject, confidence, tier};
}

/// The simulated draft model: noisy generator and draft-tier verifier.
class SimDraftModel final : public Model {
 public:
  explicit SimDraftModel(SimWorldSpec spec) : spec_(std::move(spec)) { spec_.validate(); }
  Step sample_step(const ReasoningContext& context, std::size_t sample_index) override {
    return sim_draft_generate(context, spec_, sample_index).step;
  }
  VerificationVerdict verify(const VerificationQuery& query) override {
    return sim_verify(query, spec_.draft_verifier, spec_, Tier::draft);
  }
  const SimWorldSpec& spec() const { return spec_; }

 private:
  SimWorldSpec spec_;
};

/// The simulated target model: ground-truth generator and target-tier verifier.
class SimTargetModel final : public Model {
 public:
  explicit SimTargetModel(SimWorldSpec spec) : spec_(std::move(spec)) { spec_.validate(); }
  Step sample_step(const ReasoningContext& context, std::size_t) override {
    return sim_target_generate(context, spec_).step;
  }
  VerificationVerdict verify(const VerificationQuery& query) override {
    return sim_verify(query, spec_.target_verifier, spec_, Tier::target);
  }
  const SimWorldSpec& spec() const { return spec_; }

 private:
  SimWorldSpec spec_;
};

/// Verifier that consults the equivalence oracle directly, with confidence 1.
class GroundTruthVerifier final : public Verifier {
 public:
  GroundTruthVerifier(SimWorldSpec spec, Tier tier) : spec_(std::move(spec)), tier_(tier) {}
  VerificationVerdict verify(const VerificationQuery& query) override {
    return VerificationVerdict{query_truth(query, spec_) ? Decision::accept : Decision::reject, 1.0, tier_};
  }

 private:
  SimWorldSpec spec_;
  Tier tier_;
};

/// Pairs any generator with any verifier.
class ComposedModel final : public Model {
 public:
  ComposedModel(Generator& generator, Verifier& verifier) : generator_(generator), verifier_(verifier) {}
  Step sample_step(const ReasoningContext& context, std::size_t sample_index) override {
    return generator_.sample_step(context, sample_index);
  }
  std::vector<Step> generate_steps(const ReasoningContext& context, std::size_t k) override {
    return generator_.generate_steps(context, k);
  }
  VerificationVerdict verify(const VerificationQuery& query) override { return verifier_.verify(query); }

 private:
  Generator& generator_;
  Verifier& verifier_;
};

/// Final state of the ground-truth chain for `task`.
inline std::int64_t expected_answer(const SimWorldSpec& spec, const Task& task) {
  std::int64_t state = task.start;
  for (std::size_t p = 1; p <= task.length; ++p) state = apply(ground_truth_transition(spec, task.id, p), state, spec.modulus);
  return state;
}

inline bool trace_correct(const ReasoningTrace& trace, const SimWorldSpec& spec, const Task& task) {
  return trace.termination == Termination::answer && trace.final_answer == std::to_string(expected_answer(spec, task));
}

/// Random draft-tier verification instances scored against the oracle: task,
/// position and state are drawn per sample, the draft step comes from the
/// draft generator and the target step is the ground truth.
inline std::vector<CalibrationRecord> sample_calibration_records(const SimWorldSpec& spec,
                                                                 const CalibrationProfile& profile, Tier tier,
                                                                 std::size_t n) {
  std::vector<CalibrationRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Task task = make_task(spec, 1'000'000 + i);
    rng::CounterStream s(rng::hash_words({spec.seed, 0xCA1B, i}));
    const std::size_t steps_before = static_cast<std::size_t>(s.below(task.length));
    ReasoningContext ctx(task_prompt(task, spec), 1u << 20);
    for (std::size_t p = 0; p < steps_before; ++p) ctx.try_append(sim_target_generate(ctx, spec).step);
    const Step draft = sim_draft_generate(ctx, spec).step;
    const Step target = sim_target_generate(ctx, spec).step;
    const VerificationQuery q{ctx, draft, target};
    const VerificationVerdict v = sim_verify(q, profile, spec, tier);
    out.push_back(CalibrationRecord{v.confidence, v.accepted() == query_truth(q, spec)});
  }
  return out;
}

/// Expected (overall accuracy, hi-confidence accuracy, coverage) of a profile
/// over the easy/hard mixture, in closed form.
struct CalibrationPoint {
  double overall = 0.0;
  double hiconf = 0.0;
  double coverage = 0.0;
};

inline double pass_probability(double centre, double noise, double gamma) {
  const double lo = std::clamp(centre - noise, 0.5, 1.0);
  const double hi = std::clamp(centre + noise, 0.5, 1.0);
  if (noise == 0.0 || hi == lo) return lo >= gamma ? 1.0 : 0.0;
  // Confidence is uniform on [centre - noise, centre + noise] before clamping.
  if (gamma <= lo) return 1.0;
  if (gamma > hi) return 0.0;
  return std::clamp((centre + noise - gamma) / (2.0 * noise), 0.0, 1.0);
}

inline CalibrationPoint expected_calibration(const CalibrationProfile& p, double hard_fraction, double gamma) {
  const double e = 1.0 - hard_fraction, h = hard_fraction;
  const double pe = pass_probability(p.easy_center(), p.confidence_noise, gamma);
  const double ph = pass_probability(p.hard_center(), p.confidence_noise, gamma);
  CalibrationPoint out;
  out.overall = e * p.easy_accuracy + h * p.hard_accuracy;
  out.coverage = e * pe + h * ph;
  out.hiconf = out.coverage > 0 ? (e * pe * p.easy_accuracy + h * ph * p.hard_accuracy) / out.coverage : 0.0;
  return out;
}

struct ProfileFit {
  CalibrationProfile profile;
  double hard_fraction = 0.0;
  CalibrationPoint expected;
  double max_deviation = 0.0;
};

/// Grid search (step 0.01) over hard fraction and the two class accuracies,
/// with confidence centres fixed either side of gamma, minimising squared
/// distance to the target point.
inline ProfileFit fit_calibration_profile(const CalibrationPoint& target, double gamma, double easy_confidence = 0.95,
                                          double hard_confidence = 0.6, double noise = 0.03) {
  ProfileFit best;
  double best_err = 1e300;
  for (int hf = 0; hf <= 100; ++hf) {
    for (int ea = 0; ea <= 100; ++ea) {
      for (int ha = 0; ha <= ea; ++ha) {
        CalibrationProfile p{ea / 100.0, ha / 100.0, noise, easy_confidence, hard_confidence, 0.0};
        const CalibrationPoint c = expected_calibration(p, hf / 100.0, gamma);
        const double d0 = c.overall - target.overall, d1 = c.hiconf - target.hiconf, d2 = c.coverage - target.coverage;
        const double err = d0 * d0 + d1 * d1 + d2 * d2;
        if (err < best_err) {
          best_err = err;
          best.profile = p;
          best.hard_fraction = hf / 100.0;
          best.expected = c;
          best.max_deviation = std::max({std::abs(d0), std::abs(d1), std::abs(d2)});
        }
      }
    }
  }
  return best;
}

}  // namespace confspec::sim
