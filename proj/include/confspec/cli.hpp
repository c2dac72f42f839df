#pragma once

// Command-line front end: simulate, calibrate, bench and report.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 backend failure,
// 4 any other runtime failure.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "confspec/backend.hpp"
#include "confspec/config.hpp"
#include "confspec/experiment.hpp"
#include "confspec/report.hpp"
#include "confspec/rng.hpp"
#include "confspec/simworld.hpp"

namespace confspec::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_backend = 3;
inline constexpr int exit_runtime = 4;

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "confspec-out";
  std::size_t workers = 1;
};

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Loads the config file (or an empty document), applies --set and --seed.
inline AppConfig resolve_config(const Options& o) {
  ConfigJson root = o.config_path.empty() ? ConfigJson::object() : load_config_json(o.config_path);
  for (const std::string& s : o.overrides) apply_override(root, s);
  if (o.seed) root["seed"] = *o.seed;
  return parse_config(root);
}

class RunOutput {
 public:
  RunOutput(std::string command, const AppConfig& config, const std::string& out_dir)
      : command_(std::move(command)), snapshot_(config_snapshot(config)), dir_(out_dir), started_(utc_now()) {
    std::filesystem::create_directories(dir_);
    run_id_ = hex64(rng::hash_text(command_ + "\n" + snapshot_.dump()));
  }

  const std::string& run_id() const { return run_id_; }
  const ConfigJson& snapshot() const { return snapshot_; }

  void write(const std::string& name, const std::string& content) {
    write_file(dir_ / name, content);
    outputs_.push_back(name);
  }

  void finish() {
    Json manifest{{"schema_version", schema_version},
                  {"run_id", run_id_},
                  {"command", command_},
                  {"config", snapshot_},
                  {"started_at", started_},
                  {"finished_at", utc_now()},
                  {"outputs", outputs_}};
    write_file(dir_ / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  std::string command_;
  ConfigJson snapshot_;
  std::filesystem::path dir_;
  std::string started_;
  std::string run_id_;
  std::vector<std::string> outputs_;
};

inline int cmd_simulate(const Options& o, std::ostream& log) {
  const AppConfig config = resolve_config(o);
  RunOutput out("simulate", config, o.out_dir);
  const std::vector<SweepPoint> points = run_sweep(config, o.workers);

  std::string traces;
  std::vector<SummaryRow> rows;
  Json rows_json = Json::array();
  for (const SweepPoint& p : points) {
    for (const TraceResult& r : p.results) {
      Json line{{"schema_version", schema_version},
                {"point", p.label},
                {"task", r.task.id},
                {"expected", r.expected},
                {"correct", r.correct},
                {"trace", to_json(r.trace, config.write_iterations)}};
      traces += line.dump() + "\n";
    }
    rows.push_back(p.row);
    rows_json.push_back(to_json(p.row));
    log << p.row.axis << '=' << p.label << ": accuracy " << format_number(p.row.accuracy()) << ", alpha "
        << csv_cell(p.row.alpha()) << ", speedup " << csv_cell(p.row.speedup()) << '\n';
  }
  out.write("traces.jsonl", traces);
  out.write("summary.csv", summary_csv(rows));
  Json summary{{"schema_version", schema_version},
               {"run_id", out.run_id()},
               {"command", "simulate"},
               {"config", out.snapshot()},
               {"rows", rows_json}};
  out.write("summary.json", summary.dump(2) + "\n");
  out.finish();
  return exit_ok;
}

inline CalibrationReport calibration_report_from_json(const Json& j) {
  CalibrationReport r;
  auto opt = [](const Json& v) { return v.is_null() ? std::optional<double>() : std::optional<double>(v.get<double>()); };
  r.gamma = j.at("gamma");
  r.total = j.at("total");
  r.overall_accuracy = j.at("overall_accuracy");
  r.hiconf_accuracy = opt(j.at("hiconf_accuracy"));
  r.lowconf_accuracy = opt(j.at("lowconf_accuracy"));
  r.coverage = j.at("coverage");
  const Json& bins = j.at("bins");
  for (std::size_t b = 0; b < r.bins.size() && b < bins.size(); ++b) {
    r.bins[b].lower = bins[b].at("lower");
    r.bins[b].upper = bins[b].at("upper");
    r.bins[b].count = bins[b].at("count");
    r.bins[b].mean_confidence = opt(bins[b].at("mean_confidence"));
    r.bins[b].accuracy = opt(bins[b].at("accuracy"));
  }
  return r;
}

inline int cmd_calibrate(const Options& o, std::ostream& log) {
  const AppConfig config = resolve_config(o);
  RunOutput out("calibrate", config, o.out_dir);
  const CalibrateSpec& cal = config.calibrate;
  if (cal.samples < 1) throw ConfigError("calibrate.samples", "must be >= 1");

  struct Entry {
    std::string name;
    sim::CalibrationProfile profile;
    double difficulty_mix;
    std::optional<CalibrationTarget> target;
  };
  std::vector<Entry> entries;
  for (const NamedProfile& p : cal.profiles) entries.push_back({p.name, p.profile, p.difficulty_mix, std::nullopt});
  for (const CalibrationTarget& t : cal.fit) {
    const sim::ProfileFit fit = sim::fit_calibration_profile(t.point, cal.gamma);
    entries.push_back({t.name, fit.profile, fit.hard_fraction, t});
  }
  if (entries.empty()) {
    entries.push_back({"perfect", sim::CalibrationProfile::perfect(), config.sim.difficulty_mix, std::nullopt});
    entries.push_back({"draft_verifier", config.sim.draft_verifier, config.sim.difficulty_mix, std::nullopt});
  }

  std::vector<std::pair<std::string, CalibrationReport>> reports(entries.size());
  parallel_for(entries.size(), o.workers, [&](std::size_t i) {
    sim::SimWorldSpec spec = config.sim;
    spec.difficulty_mix = entries[i].difficulty_mix;
    const auto records = sim::sample_calibration_records(spec, entries[i].profile, Tier::draft, cal.samples);
    reports[i] = {entries[i].name, calibration_report(records, cal.gamma)};
  });

  Json list = Json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    const CalibrationReport& r = reports[i].second;
    Json item{{"name", e.name},
              {"profile", config_detail::profile_json(e.profile)},
              {"difficulty_mix", e.difficulty_mix},
              {"report", to_json(r)}};
    if (e.target) {
      item["target"] = {{"overall", e.target->point.overall},
                        {"hiconf", e.target->point.hiconf},
                        {"coverage", e.target->point.coverage}};
    }
    list.push_back(item);
    log << e.name << ": overall " << format_number(r.overall_accuracy) << ", hiconf "
        << csv_cell(r.hiconf_accuracy) << ", coverage " << format_number(r.coverage) << '\n';
  }
  out.write("calibration.csv", calibration_csv(reports));
  Json doc{{"schema_version", schema_version},
           {"run_id", out.run_id()},
           {"command", "calibrate"},
           {"config", out.snapshot()},
           {"gamma", cal.gamma},
           {"samples", cal.samples},
           {"reports", list}};
  out.write("calibration.json", doc.dump(2) + "\n");
  out.finish();
  return exit_ok;
}

inline int cmd_bench(const Options& o, std::ostream& log) {
  const AppConfig config = resolve_config(o);
  if (!config.bench.draft) throw ConfigError("bench.draft", "endpoint required");
  if (!config.bench.target) throw ConfigError("bench.target", "endpoint required");
  if (config.bench.prompts.empty()) throw ConfigError("bench.prompts", "prompt file required");

  std::vector<std::string> prompts;
  {
    std::ifstream in(config.bench.prompts);
    if (!in) throw ConfigError("bench.prompts", "cannot open " + config.bench.prompts);
    std::string line;
    while (std::getline(in, line)) {
      if (!is_blank(line)) prompts.push_back(line);
    }
  }
  if (prompts.empty()) throw ConfigError("bench.prompts", "no prompts in " + config.bench.prompts);

  RemoteModel draft(*config.bench.draft, Tier::draft, {}, config.run.delimiter);
  RemoteModel target(*config.bench.target, Tier::target, {}, config.run.delimiter);
  for (auto [name, model] : {std::pair<const char*, RemoteModel*>{"draft", &draft}, {"target", &target}}) {
    try {
      model->probe();
    } catch (const BackendError& e) {
      throw BackendError(std::string(name) + " endpoint failed the startup probe: " + e.what(), e.attempts());
    } catch (const ProtocolError& e) {
      throw BackendError(std::string(name) + " endpoint failed the startup probe: " + e.what(), {});
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("bench.") + name, e.what());
    }
  }

  RunOutput out("bench", config, o.out_dir);
  std::vector<ReasoningTrace> traces(prompts.size(), ReasoningTrace{ReasoningContext("x", 1), {}, {}, {}, {}});
  std::vector<double> wall_ms(prompts.size());
  parallel_for(prompts.size(), o.workers, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    traces[i] = run_trace(prompts[i], config.run, draft, target);
    wall_ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  });

  std::ostringstream csv, timings;
  csv << "trace,termination,final_answer,iterations,steps,tokens,alpha,acceptance_rate,fallbacks,"
         "draft_verify_calls,target_verify_calls,draft_verify_failures,speedup\n";
  timings << "trace,wall_clock_ms\n";
  Json items = Json::array();
  SummaryRow total;
  total.axis = "bench";
  total.value = "all";
  total.cost = config.cost;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const ReasoningTrace& t = traces[i];
    SummaryRow row;
    row.cost = config.cost;
    row.traces = 1;
    row.tokens = trace_tokens(t);
    row.ledger = t.ledger;
    total.traces += 1;
    total.tokens += row.tokens;
    total.ledger += t.ledger;
    csv << i << ',' << to_string(t.termination) << ',' << '"' << t.final_answer << '"' << ',' << t.ledger.iterations
        << ',' << t.context.size() << ',' << row.tokens << ',' << csv_cell(row.alpha()) << ','
        << csv_cell(row.acceptance()) << ',' << t.ledger.fallbacks << ',' << t.ledger.draft_verify_calls << ','
        << t.ledger.target_verify_calls << ',' << t.ledger.draft_verify_failures << ',' << csv_cell(row.speedup())
        << '\n';
    timings << i << ',' << format_number(wall_ms[i]) << '\n';
    items.push_back(Json{{"trace", i}, {"prompt", prompts[i]}, {"result", to_json(t, config.write_iterations)}});
  }
  log << "bench: " << traces.size() << " traces, alpha " << csv_cell(total.alpha()) << ", speedup "
      << csv_cell(total.speedup()) << '\n';
  out.write("bench.csv", csv.str());
  out.write("timings.csv", timings.str());
  Json doc{{"schema_version", schema_version},
           {"run_id", out.run_id()},
           {"command", "bench"},
           {"config", out.snapshot()},
           {"summary", to_json(total)},
           {"traces", items}};
  out.write("bench.json", doc.dump(2) + "\n");
  out.finish();
  return exit_ok;
}

/// Re-renders the CSV files in --out-dir from the JSON reports stored there.
inline int cmd_report(const Options& o, std::ostream& log) {
  const std::filesystem::path dir(o.out_dir);
  bool any = false;
  if (std::filesystem::exists(dir / "summary.json")) {
    const Json doc = Json::parse(read_file(dir / "summary.json"));
    std::vector<SummaryRow> rows;
    for (const Json& r : doc.at("rows")) rows.push_back(summary_row_from_json(r));
    write_file(dir / "summary.csv", summary_csv(rows));
    log << "wrote " << (dir / "summary.csv").string() << '\n';
    any = true;
  }
  if (std::filesystem::exists(dir / "calibration.json")) {
    const Json doc = Json::parse(read_file(dir / "calibration.json"));
    std::vector<std::pair<std::string, CalibrationReport>> reports;
    for (const Json& r : doc.at("reports")) {
      reports.emplace_back(r.at("name").get<std::string>(), calibration_report_from_json(r.at("report")));
    }
    write_file(dir / "calibration.csv", calibration_csv(reports));
    log << "wrote " << (dir / "calibration.csv").string() << '\n';
    any = true;
  }
  if (!any) throw ConfigError("--out-dir", "no summary.json or calibration.json in " + dir.string());
  return exit_ok;
}

/// Entry point for the confspec executable. Diagnostics go to `err`.
inline int run_cli(int argc, char** argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Confidence-gated cascaded verification for step-level speculative reasoning"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file");
    sub->add_option("--set", o.overrides, "override a field, key.path=value")->take_all();
    sub->add_option("--seed", o.seed, "seed for every simulated draw");
    sub->add_option("--out-dir", o.out_dir, "output directory");
    sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  };
  CLI::App* simulate = app.add_subcommand("simulate", "run simulated traces, optionally over a sweep");
  CLI::App* calibrate = app.add_subcommand("calibrate", "confidence/accuracy reports for verifier profiles");
  CLI::App* bench = app.add_subcommand("bench", "run traces against two completions endpoints");
  CLI::App* report = app.add_subcommand("report", "re-render CSV files from stored JSON reports");
  for (CLI::App* s : {simulate, calibrate, bench}) add_common(s);
  report->add_option("--out-dir", o.out_dir, "directory holding summary.json or calibration.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    log << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "confspec: " << e.what() << '\n';
    return exit_config;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(o, log);
    if (calibrate->parsed()) return cmd_calibrate(o, log);
    if (bench->parsed()) return cmd_bench(o, log);
    return cmd_report(o, log);
  } catch (const ConfigError& e) {
    err << "confspec: config error at " << e.what() << '\n';
    return exit_config;
  } catch (const ValidationError& e) {
    err << "confspec: invalid value: " << e.what() << '\n';
    return exit_config;
  } catch (const BackendError& e) {
    err << "confspec: backend error: " << e.what() << '\n';
    for (const std::string& a : e.attempts()) err << "  " << a << '\n';
    return exit_backend;
  } catch (const ProtocolError& e) {
    err << "confspec: protocol error: " << e.what() << '\n';
    return exit_backend;
  } catch (const EscalationError& e) {
    err << "confspec: " << e.what() << '\n';
    return exit_backend;
  } catch (const std::exception& e) {
    err << "confspec: " << e.what() << '\n';
    return exit_runtime;
  }
}

}  // namespace confspec::cli
