#pragma once

// Direct piecewise evaluation of the cascaded decision: the draft's verdict if
// its confidence is at least gamma, else the target's.

namespace oracle {

struct RefOutcome {
  bool accept;
  bool from_draft;
};

inline RefOutcome piecewise_decision(double p_draft, double gamma, bool draft_accepts, bool target_accepts) {
  if (p_draft >= gamma) return {draft_accepts, true};
  return {target_accepts, false};
}

}  // namespace oracle
