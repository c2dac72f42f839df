#pragma once

// Simulated runs over many tasks: model construction from a config, a bounded
// worker pool, sweep-axis application and per-point aggregation.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "confspec/cascade.hpp"
#include "confspec/config.hpp"
#include "confspec/metrics.hpp"
#include "confspec/ngram.hpp"
#include "confspec/report.hpp"
#include "confspec/simworld.hpp"

namespace confspec {

/// Calls fn(i) for i in [0, n) on up to `workers` threads. The first exception
/// thrown by any call is rethrown after all threads finish.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct TraceResult {
  sim::Task task;
  std::string expected;
  bool correct = false;
  ReasoningTrace trace;
};

/// Runs one trace per task id in [0, config.traces). Results are ordered by task id.
inline std::vector<TraceResult> simulate_traces(const AppConfig& config, std::size_t workers = 1) {
  sim::SimDraftModel draft(config.sim);
  sim::SimTargetModel target(config.sim);
  PromptLookupModel target_pld(target, config.pld.ngram);
  Model& target_model = config.pld.enabled ? static_cast<Model&>(target_pld) : static_cast<Model&>(target);

  std::vector<std::optional<TraceResult>> slots(config.traces);
  parallel_for(config.traces, workers, [&](std::size_t i) {
    const sim::Task task = sim::make_task(config.sim, i);
    ReasoningTrace trace = run_trace(sim::task_prompt(task, config.sim), config.run, draft, target_model);
    TraceResult r{task, std::to_string(sim::expected_answer(config.sim, task)), false, std::move(trace)};
    r.correct = sim::trace_correct(r.trace, config.sim, task);
    slots[i] = std::move(r);
  });
  std::vector<TraceResult> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline std::string sweep_label(const ConfigJson& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return format_number(v.get<double>());
  return v.dump();
}

/// A copy of `base` with one sweep axis set to `value`.
inline AppConfig apply_sweep_value(AppConfig base, const std::string& axis, const ConfigJson& value) {
  const std::string path = "sweep.values";
  auto count = [&](std::size_t& out) {
    if (!value.is_number_integer() || value.get<long long>() < 0) {
      throw ConfigError(path, "axis " + axis + " needs non-negative integers");
    }
    out = value.get<std::size_t>();
  };
  if (axis == "gamma") {
    apply_gamma(base.run, value, path);
  } else if (axis == "draft_steps") {
    count(base.run.draft_steps);
  } else if (axis == "tree_width") {
    count(base.run.tree_width);
  } else if (axis == "draft_step_accuracy") {
    if (!value.is_number()) throw ConfigError(path, "axis draft_step_accuracy needs numbers");
    base.sim.draft_step_accuracy = value.get<double>();
  } else if (axis == "pld") {
    if (!value.is_boolean()) throw ConfigError(path, "axis pld needs true/false");
    base.pld.enabled = value.get<bool>();
  } else if (axis == "reject_policy") {
    if (!value.is_string()) throw ConfigError(path, "axis reject_policy needs strings");
    base.run.reject_policy = config_detail::parse_policy(value.get<std::string>(), path);
  } else {
    throw ConfigError("sweep.axis", "unknown sweep axis \"" + axis + "\"");
  }
  config_detail::checked(path, [&] {
    base.run.validate();
    base.sim.validate();
  });
  return base;
}

inline SummaryRow summarize(const std::string& axis, const std::string& value, const std::vector<TraceResult>& results,
                            const CostModel& cost) {
  SummaryRow row;
  row.axis = axis;
  row.value = value;
  row.cost = cost;
  for (const TraceResult& r : results) {
    ++row.traces;
    row.correct += r.correct;
    row.tokens += trace_tokens(r.trace);
    row.ledger += r.trace.ledger;
  }
  return row;
}

struct SweepPoint {
  std::string label;
  AppConfig config;
  std::vector<TraceResult> results;
  SummaryRow row;
};

/// One point per sweep value, or a single point labelled "base" without a sweep.
inline std::vector<SweepPoint> run_sweep(const AppConfig& config, std::size_t workers = 1) {
  std::vector<SweepPoint> points;
  if (!config.sweep) {
    points.push_back({"base", config, {}, {}});
  } else {
    for (const ConfigJson& v : config.sweep->values) {
      points.push_back({sweep_label(v), apply_sweep_value(config, config.sweep->axis, v), {}, {}});
    }
  }
  const std::string axis = config.sweep ? config.sweep->axis : "none";
  for (SweepPoint& p : points) {
    p.results = simulate_traces(p.config, workers);
    p.row = summarize(axis, p.label, p.results, p.config.cost);
  }
  return points;
}

}  // namespace confspec
