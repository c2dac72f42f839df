#pragma once

// JSON and CSV renderings of traces, ledgers, sweep summaries and calibration
// reports. Every JSON document carries schema_version.

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "confspec/cascade.hpp"
#include "confspec/ledger.hpp"
#include "confspec/metrics.hpp"

namespace confspec {

inline constexpr int schema_version = 1;

using Json = nlohmann::ordered_json;

inline Json to_json(const CostLedger& l) {
  return Json{{"draft_gen_tokens", l.draft_gen_tokens},
              {"draft_gen_latency", l.draft_gen_latency},
              {"target_gen_tokens", l.target_gen_tokens},
              {"target_gen_forward_calls", l.target_gen_forward_calls},
              {"target_gen_latency", l.target_gen_latency},
              {"fallback_gen_tokens", l.fallback_gen_tokens},
              {"fallback_gen_forward_calls", l.fallback_gen_forward_calls},
              {"draft_verify_calls", l.draft_verify_calls},
              {"target_verify_calls", l.target_verify_calls},
              {"draft_verify_failures", l.draft_verify_failures},
              {"steps_accepted", l.steps_accepted},
              {"steps_rejected", l.steps_rejected},
              {"fallbacks", l.fallbacks},
              {"drafts_committed", l.drafts_committed},
              {"target_steps_adopted", l.target_steps_adopted},
              {"iterations", l.iterations}};
}

inline CostLedger ledger_from_json(const Json& j) {
  CostLedger l;
  auto get = [&](const char* k) { return j.at(k).get<std::size_t>(); };
  l.draft_gen_tokens = get("draft_gen_tokens");
  l.draft_gen_latency = get("draft_gen_latency");
  l.target_gen_tokens = get("target_gen_tokens");
  l.target_gen_forward_calls = get("target_gen_forward_calls");
  l.target_gen_latency = get("target_gen_latency");
  l.fallback_gen_tokens = get("fallback_gen_tokens");
  l.fallback_gen_forward_calls = get("fallback_gen_forward_calls");
  l.draft_verify_calls = get("draft_verify_calls");
  l.target_verify_calls = get("target_verify_calls");
  l.draft_verify_failures = get("draft_verify_failures");
  l.steps_accepted = get("steps_accepted");
  l.steps_rejected = get("steps_rejected");
  l.fallbacks = get("fallbacks");
  l.drafts_committed = get("drafts_committed");
  l.target_steps_adopted = get("target_steps_adopted");
  l.iterations = get("iterations");
  return l;
}

inline Json to_json(const VerificationVerdict& v) {
  return Json{{"decision", to_string(v.decision)}, {"confidence", v.confidence}, {"tier", to_string(v.tier)}};
}

inline Json to_json(const Step& s) {
  Json j{{"text", s.text}, {"tokens", s.estimated_tokens}, {"origin", to_string(s.origin)}};
  if (s.forward_passes != s.estimated_tokens) j["forward_passes"] = s.forward_passes;
  if (s.incomplete) j["incomplete"] = true;
  if (s.end_of_sequence) j["end_of_sequence"] = true;
  return j;
}

inline Json to_json(const IterationRecord& r) {
  Json verdicts = Json::array();
  for (const auto& v : r.verdicts) verdicts.push_back(to_json(v));
  Json j{{"drafted", r.drafted.size()},
         {"accepted", r.accepted_count},
         {"fallback", r.fallback_used},
         {"steps_appended", r.steps_appended},
         {"verdicts", verdicts}};
  if (r.candidate_set_size > 1) {
    Json layers = Json::array();
    for (const auto& layer : r.layers) {
      Json conf = Json::array();
      for (const auto& v : layer.verdicts) conf.push_back(to_json(v));
      layers.push_back(Json{{"candidates", layer.candidates.size()},
                            {"verdicts", conf},
                            {"selected", layer.selected ? Json(*layer.selected) : Json(nullptr)}});
    }
    j["layers"] = layers;
  }
  if (r.budget_truncated) j["budget_truncated"] = true;
  return j;
}

inline Json to_json(const ReasoningTrace& t, bool with_iterations = true) {
  Json steps = Json::array();
  for (const Step& s : t.context.steps()) steps.push_back(to_json(s));
  Json j{{"termination", to_string(t.termination)},
         {"final_answer", t.final_answer},
         {"tokens_used", t.context.tokens_used()},
         {"steps", steps},
         {"ledger", to_json(t.ledger)}};
  if (with_iterations) {
    Json its = Json::array();
    for (const auto& r : t.iterations) its.push_back(to_json(r));
    j["iterations"] = its;
  }
  return j;
}

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json to_json(const CalibrationReport& r) {
  Json bins = Json::array();
  for (const auto& b : r.bins) {
    bins.push_back(Json{{"lower", b.lower},
                        {"upper", b.upper},
                        {"count", b.count},
                        {"mean_confidence", optional_json(b.mean_confidence)},
                        {"accuracy", optional_json(b.accuracy)}});
  }
  return Json{{"gamma", r.gamma},
              {"total", r.total},
              {"overall_accuracy", r.overall_accuracy},
              {"hiconf_accuracy", optional_json(r.hiconf_accuracy)},
              {"lowconf_accuracy", optional_json(r.lowconf_accuracy)},
              {"coverage", r.coverage},
              {"bins", bins}};
}

/// Aggregate over the traces of one sweep point.
struct SummaryRow {
  std::string axis;
  std::string value;
  std::size_t traces = 0;
  std::size_t correct = 0;
  std::size_t tokens = 0;
  CostLedger ledger;
  CostModel cost;

  double accuracy() const { return traces ? static_cast<double>(correct) / static_cast<double>(traces) : 0.0; }
  std::optional<double> alpha() const {
    if (ledger.draft_verify_calls == 0) return std::nullopt;
    return cascade_rate(ledger);
  }
  std::optional<double> acceptance() const {
    if (ledger.draft_verify_calls == 0) return std::nullopt;
    return acceptance_rate(ledger);
  }
  double baseline_cost() const { return static_cast<double>(tokens) * cost.c_gen_target; }
  double cost_total() const { return run_cost(ledger, cost); }
  std::optional<double> speedup() const {
    if (tokens == 0 || cost_total() <= 0) return std::nullopt;
    return baseline_cost() / cost_total();
  }
  double accepted_per_iteration() const {
    return ledger.iterations ? static_cast<double>(ledger.steps_accepted) / static_cast<double>(ledger.iterations)
                             : 0.0;
  }
  std::optional<double> tokens_per_target_call() const {
    const std::size_t calls = ledger.target_forward_calls_total();
    if (calls == 0) return std::nullopt;
    return static_cast<double>(ledger.target_tokens_total()) / static_cast<double>(calls);
  }
};

inline Json to_json(const SummaryRow& r) {
  return Json{{"axis", r.axis},
              {"value", r.value},
              {"traces", r.traces},
              {"correct", r.correct},
              {"tokens", r.tokens},
              {"accuracy", r.accuracy()},
              {"alpha", optional_json(r.alpha())},
              {"acceptance_rate", optional_json(r.acceptance())},
              {"speedup", optional_json(r.speedup())},
              {"accepted_per_iteration", r.accepted_per_iteration()},
              {"tokens_per_target_call", optional_json(r.tokens_per_target_call())},
              {"run_cost", r.cost_total()},
              {"baseline_cost", r.baseline_cost()},
              {"cost_model",
               Json{{"c_gen_draft", r.cost.c_gen_draft},
                    {"c_gen_target", r.cost.c_gen_target},
                    {"c_verify_draft", r.cost.c_verify_draft},
                    {"c_verify_target", r.cost.c_verify_target}}},
              {"ledger", to_json(r.ledger)}};
}

inline SummaryRow summary_row_from_json(const Json& j) {
  SummaryRow r;
  r.axis = j.at("axis").get<std::string>();
  r.value = j.at("value").get<std::string>();
  r.traces = j.at("traces").get<std::size_t>();
  r.correct = j.at("correct").get<std::size_t>();
  r.tokens = j.at("tokens").get<std::size_t>();
  r.ledger = ledger_from_json(j.at("ledger"));
  const Json& c = j.at("cost_model");
  r.cost = CostModel{c.at("c_gen_draft"), c.at("c_gen_target"), c.at("c_verify_draft"), c.at("c_verify_target")};
  return r;
}

/// Shortest decimal that round-trips.
inline std::string format_number(double v) {
  char buf[32];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string csv_cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "axis,value,traces,accuracy,alpha,acceptance_rate,speedup,draft_verify_calls,target_verify_calls,"
        "fallbacks,iterations,accepted_per_iteration,tokens_per_target_call,run_cost,baseline_cost\n";
  for (const SummaryRow& r : rows) {
    os << r.axis << ',' << r.value << ',' << r.traces << ',' << format_number(r.accuracy()) << ','
       << csv_cell(r.alpha()) << ',' << csv_cell(r.acceptance()) << ',' << csv_cell(r.speedup()) << ','
       << r.ledger.draft_verify_calls << ',' << r.ledger.target_verify_calls << ',' << r.ledger.fallbacks << ','
       << r.ledger.iterations << ',' << format_number(r.accepted_per_iteration()) << ','
       << csv_cell(r.tokens_per_target_call()) << ',' << format_number(r.cost_total()) << ','
       << format_number(r.baseline_cost()) << '\n';
  }
  return os.str();
}

/// One row per (profile, bucket), plus the headline numbers repeated per row.
inline std::string calibration_csv(const std::vector<std::pair<std::string, CalibrationReport>>& reports) {
  std::ostringstream os;
  os << "profile,gamma,overall_accuracy,hiconf_accuracy,coverage,bucket_lower,bucket_upper,count,mean_confidence,"
        "accuracy\n";
  for (const auto& [name, r] : reports) {
    for (const auto& b : r.bins) {
      os << name << ',' << format_number(r.gamma) << ',' << format_number(r.overall_accuracy) << ','
         << csv_cell(r.hiconf_accuracy) << ',' << format_number(r.coverage) << ',' << format_number(b.lower) << ','
         << format_number(b.upper) << ',' << b.count << ',' << csv_cell(b.mean_confidence) << ','
         << csv_cell(b.accuracy) << '\n';
    }
  }
  return os.str();
}

}  // namespace confspec
