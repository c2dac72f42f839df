#pragma once

// Cost accounting on top of CostLedger: cascade rate, the expected
// verification cost per step, a run-cost model for speedup estimates, and the
// confidence/accuracy calibration report.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "confspec/cascade.hpp"
#include "confspec/errors.hpp"
#include "confspec/ledger.hpp"

namespace confspec {

/// Abstract cost units: generation costs are per forward pass, verification
/// costs per call.
struct CostModel {
  double c_gen_draft = 1.0;
  double c_gen_target = 20.0;
  double c_verify_draft = 1.0;
  double c_verify_target = 20.0;

  void validate() const {
    if (!(c_gen_draft > 0 && c_gen_target > 0 && c_verify_draft > 0 && c_verify_target > 0)) {
      throw ValidationError("cost model entries must be positive");
    }
    if (!(c_verify_draft < c_verify_target)) {
      throw ValidationError("draft verification must be cheaper than target verification");
    }
  }
};

/// Escalations per draft verification.
inline double cascade_rate(const CostLedger& ledger) {
  if (ledger.draft_verify_calls == 0) throw UndefinedRateError("cascade rate undefined without draft verifications");
  return static_cast<double>(ledger.target_verify_calls) / static_cast<double>(ledger.draft_verify_calls);
}

/// Fraction of draft verifications that ended in accept.
inline double acceptance_rate(const CostLedger& ledger) {
  if (ledger.draft_verify_calls == 0) throw UndefinedRateError("acceptance rate undefined without verifications");
  return static_cast<double>(ledger.steps_accepted) / static_cast<double>(ledger.draft_verify_calls);
}

inline double expected_verification_cost(const CostModel& model, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("cascade rate must lie in [0, 1]");
  return model.c_verify_draft + alpha * model.c_verify_target;
}

inline double verification_cost(const CostLedger& ledger, const CostModel& model) {
  return model.c_verify_draft * static_cast<double>(ledger.draft_verify_calls) +
         model.c_verify_target * static_cast<double>(ledger.target_verify_calls);
}

/// Critical-path cost of a run: sequential draft passes, one batch of rival
/// target passes per iteration (its longest member), sequential fallback
/// passes, and every verification call.
inline double run_cost(const CostLedger& ledger, const CostModel& model) {
  return model.c_gen_draft * static_cast<double>(ledger.draft_gen_latency) +
         model.c_gen_target * static_cast<double>(ledger.target_gen_latency + ledger.fallback_gen_forward_calls) +
         verification_cost(ledger, model);
}

inline std::size_t trace_tokens(const ReasoningTrace& trace) {
  std::size_t n = 0;
  for (const Step& s : trace.context.steps()) n += s.estimated_tokens;
  return n;
}

/// Target-only cost of producing `accepted_tokens`, divided by the run's cost.
inline double speedup_estimate(const CostLedger& ledger, std::size_t accepted_tokens, const CostModel& model) {
  const double cost = run_cost(ledger, model);
  const double baseline = static_cast<double>(accepted_tokens) * model.c_gen_target;
  if (cost <= 0.0) throw ValidationError("run cost is zero; speedup undefined");
  if (baseline <= 0.0) throw ValidationError("trace has no tokens; speedup undefined");
  return baseline / cost;
}

inline double speedup_estimate(const ReasoningTrace& trace, const CostModel& model) {
  return speedup_estimate(trace.ledger, trace_tokens(trace), model);
}

struct CalibrationRecord {
  double confidence = 0.0;
  bool correct = false;
};

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::optional<double> mean_confidence;
  std::optional<double> accuracy;
};

struct CalibrationReport {
  double gamma = 0.0;
  std::size_t total = 0;
  double overall_accuracy = 0.0;
  double coverage = 0.0;
  std::optional<double> hiconf_accuracy;
  std::optional<double> lowconf_accuracy;
  std::array<ReliabilityBin, 10> bins{};
};

/// Bucket of a confidence: [0, 0.1), ..., [0.8, 0.9), [0.9, 1.0].
inline std::size_t reliability_bin(double confidence) {
  std::size_t bin = 0;
  for (std::size_t i = 1; i < 10; ++i) {
    if (confidence >= static_cast<double>(i) / 10.0) bin = i;
  }
  return bin;
}

inline CalibrationReport calibration_report(std::span<const CalibrationRecord> records, double gamma) {
  if (records.empty()) throw ValidationError("calibration report needs at least one record");
  CalibrationReport report;
  report.gamma = gamma;
  report.total = records.size();

  std::size_t correct = 0, hi = 0, hi_correct = 0;
  std::array<double, 10> conf_sum{};
  std::array<std::size_t, 10> bin_correct{};
  for (const CalibrationRecord& r : records) {
    correct += r.correct;
    if (r.confidence >= gamma) {
      ++hi;
      hi_correct += r.correct;
    }
    const std::size_t b = reliability_bin(r.confidence);
    ++report.bins[b].count;
    conf_sum[b] += r.confidence;
    bin_correct[b] += r.correct;
  }
  const double n = static_cast<double>(records.size());
  report.overall_accuracy = static_cast<double>(correct) / n;
  report.coverage = static_cast<double>(hi) / n;
  if (hi > 0) report.hiconf_accuracy = static_cast<double>(hi_correct) / static_cast<double>(hi);
  if (hi < records.size()) {
    report.lowconf_accuracy =
        static_cast<double>(correct - hi_correct) / static_cast<double>(records.size() - hi);
  }
  for (std::size_t b = 0; b < 10; ++b) {
    ReliabilityBin& bin = report.bins[b];
    bin.lower = static_cast<double>(b) / 10.0;
    bin.upper = static_cast<double>(b + 1) / 10.0;
    if (bin.count > 0) {
      bin.mean_confidence = conf_sum[b] / static_cast<double>(bin.count);
      bin.accuracy = static_cast<double>(bin_correct[b]) / static_cast<double>(bin.count);
    }
  }
  return report;
}

}  // namespace confspec
