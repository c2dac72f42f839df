#pragma once

// The run configuration file: one JSON document with sections run, sim, cost,
// pld, calibrate, bench and sweep. Command-line overrides address fields by
// dotted path. Every parse error names the offending field.

#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "confspec/backend.hpp"
#include "confspec/core.hpp"
#include "confspec/metrics.hpp"
#include "confspec/ngram.hpp"
#include "confspec/simworld.hpp"

namespace confspec {

using ConfigJson = nlohmann::ordered_json;

struct SweepSpec {
  std::string axis;  // gamma, draft_steps, tree_width, draft_step_accuracy, pld, reject_policy
  std::vector<ConfigJson> values;
};

struct CalibrationTarget {
  std::string name;
  sim::CalibrationPoint point;
};

struct NamedProfile {
  std::string name;
  sim::CalibrationProfile profile;
  double difficulty_mix = 0.3;
};

struct CalibrateSpec {
  double gamma = 0.9;
  std::size_t samples = 100000;
  std::vector<NamedProfile> profiles;
  std::vector<CalibrationTarget> fit;
};

struct BenchSpec {
  std::optional<EndpointConfig> draft;
  std::optional<EndpointConfig> target;
  std::string prompts;  // one prompt per line
};

struct PldSpec {
  bool enabled = false;
  NgramConfig ngram;
};

struct AppConfig {
  RunConfig run;
  sim::SimWorldSpec sim;
  CostModel cost;
  PldSpec pld;
  std::size_t traces = 100;
  std::uint64_t seed = 0;
  std::optional<SweepSpec> sweep;
  CalibrateSpec calibrate;
  BenchSpec bench;
  bool write_iterations = true;
};

namespace config_detail {

inline std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

class Reader {
 public:
  Reader(const ConfigJson& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) throw ConfigError(join(path_, it.key()), "unknown field");
    }
  }

  bool has(const char* key) const { return j_.contains(key) && !j_[key].is_null(); }
  const ConfigJson& raw(const char* key) const { return j_[key]; }
  std::string path(const char* key) const { return join(path_, key); }

  void number(const char* key, double& out) const {
    if (!has(key)) return;
    if (!j_[key].is_number()) throw ConfigError(path(key), "expected a number");
    out = j_[key].get<double>();
  }
  template <typename T>
  void count(const char* key, T& out) const {
    if (!has(key)) return;
    if (!j_[key].is_number_integer() || j_[key].get<long long>() < 0) {
      throw ConfigError(path(key), "expected a non-negative integer");
    }
    out = static_cast<T>(j_[key].get<unsigned long long>());
  }
  void flag(const char* key, bool& out) const {
    if (!has(key)) return;
    if (!j_[key].is_boolean()) throw ConfigError(path(key), "expected true or false");
    out = j_[key].get<bool>();
  }
  void text(const char* key, std::string& out) const {
    if (!has(key)) return;
    if (!j_[key].is_string()) throw ConfigError(path(key), "expected a string");
    out = j_[key].get<std::string>();
  }
  void optional_number(const char* key, std::optional<double>& out) const {
    if (!has(key)) return;
    double v = 0;
    number(key, v);
    out = v;
  }
  Reader child(const char* key) const { return Reader(j_[key], path(key)); }

 private:
  const ConfigJson& j_;
  std::string path_;
};

template <typename F>
void checked(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError(path, e.what());
  }
}

inline sim::CalibrationProfile read_profile(const Reader& r, sim::CalibrationProfile p = {}) {
  r.allow({"easy_accuracy", "hard_accuracy", "confidence_noise", "easy_confidence", "hard_confidence", "leniency"});
  r.number("easy_accuracy", p.easy_accuracy);
  r.number("hard_accuracy", p.hard_accuracy);
  r.number("confidence_noise", p.confidence_noise);
  r.optional_number("easy_confidence", p.easy_confidence);
  r.optional_number("hard_confidence", p.hard_confidence);
  r.number("leniency", p.leniency);
  return p;
}

inline ConfigJson profile_json(const sim::CalibrationProfile& p) {
  ConfigJson j{{"easy_accuracy", p.easy_accuracy},
               {"hard_accuracy", p.hard_accuracy},
               {"confidence_noise", p.confidence_noise}};
  if (p.easy_confidence) j["easy_confidence"] = *p.easy_confidence;
  if (p.hard_confidence) j["hard_confidence"] = *p.hard_confidence;
  if (p.leniency > 0.0) j["leniency"] = p.leniency;
  return j;
}

inline EndpointConfig read_endpoint(const Reader& r) {
  r.allow({"base_url", "model_name", "api_key_env", "request_timeout_ms", "max_retries", "retry_backoff_ms",
           "stop_sequences", "max_step_tokens", "logprob_top_k", "temperature", "sample_temperature",
           "max_in_flight"});
  EndpointConfig e;
  r.text("base_url", e.base_url);
  r.text("model_name", e.model_name);
  std::string env = "CONFSPEC_API_KEY";
  r.text("api_key_env", env);
  if (const char* key = std::getenv(env.c_str())) e.api_key = key;
  std::size_t ms = static_cast<std::size_t>(e.request_timeout.count());
  r.count("request_timeout_ms", ms);
  e.request_timeout = std::chrono::milliseconds(ms);
  std::size_t backoff = static_cast<std::size_t>(e.retry_backoff.count());
  r.count("retry_backoff_ms", backoff);
  e.retry_backoff = std::chrono::milliseconds(backoff);
  r.count("max_retries", e.max_retries);
  if (r.has("stop_sequences")) {
    const ConfigJson& s = r.raw("stop_sequences");
    if (!s.is_array()) throw ConfigError(r.path("stop_sequences"), "expected an array of strings");
    e.stop_sequences.clear();
    for (const auto& v : s) {
      if (!v.is_string()) throw ConfigError(r.path("stop_sequences"), "expected an array of strings");
      e.stop_sequences.push_back(v.get<std::string>());
    }
  }
  r.count("max_step_tokens", e.max_step_tokens);
  r.count("logprob_top_k", e.logprob_top_k);
  r.number("temperature", e.temperature);
  r.number("sample_temperature", e.sample_temperature);
  r.count("max_in_flight", e.max_in_flight);
  try {
    e.validate();
  } catch (const ConfigError& err) {
    throw ConfigError(r.path(err.field_path().c_str()), std::string(err.what()).substr(err.field_path().size() + 2));
  }
  return e;
}

inline ConfigJson endpoint_json(const EndpointConfig& e) {
  return ConfigJson{{"base_url", e.base_url},
                    {"model_name", e.model_name},
                    {"request_timeout_ms", e.request_timeout.count()},
                    {"max_retries", e.max_retries},
                    {"retry_backoff_ms", e.retry_backoff.count()},
                    {"stop_sequences", e.stop_sequences},
                    {"max_step_tokens", e.max_step_tokens},
                    {"logprob_top_k", e.logprob_top_k},
                    {"temperature", e.temperature},
                    {"sample_temperature", e.sample_temperature},
                    {"max_in_flight", e.max_in_flight}};
}

inline RejectPolicy parse_policy(const std::string& s, const std::string& path) {
  if (s == "regenerate") return RejectPolicy::regenerate;
  if (s == "adopt_target_step") return RejectPolicy::adopt_target_step;
  throw ConfigError(path, "expected \"regenerate\" or \"adopt_target_step\"");
}

}  // namespace config_detail

/// Sets `gamma` from a number or the string "always" (always escalate).
inline void apply_gamma(RunConfig& run, const ConfigJson& v, const std::string& path) {
  if (v.is_string() && v.get<std::string>() == "always") {
    run.always_escalate = true;
    run.gamma = 1.0;
    return;
  }
  if (!v.is_number()) throw ConfigError(path, "expected a number in [0, 1] or \"always\"");
  run.always_escalate = false;
  run.gamma = v.get<double>();
  if (!(run.gamma >= 0.0 && run.gamma <= 1.0)) throw ConfigError(path, "must lie in [0, 1]");
}

inline AppConfig parse_config(const ConfigJson& root) {
  using config_detail::Reader;
  const Reader top(root, "");
  top.allow({"run", "sim", "cost", "pld", "traces", "seed", "sweep", "calibrate", "bench", "write_iterations"});
  AppConfig cfg;
  top.count("traces", cfg.traces);
  top.count("seed", cfg.seed);
  top.flag("write_iterations", cfg.write_iterations);

  if (top.has("run")) {
    const Reader r = top.child("run");
    r.allow({"gamma", "draft_steps", "tree_width", "token_budget", "reject_policy", "delimiter", "answer_marker",
             "concurrent_dispatch"});
    if (r.has("gamma")) apply_gamma(cfg.run, r.raw("gamma"), r.path("gamma"));
    r.count("draft_steps", cfg.run.draft_steps);
    r.count("tree_width", cfg.run.tree_width);
    r.count("token_budget", cfg.run.token_budget);
    std::string policy = to_string(cfg.run.reject_policy);
    r.text("reject_policy", policy);
    cfg.run.reject_policy = config_detail::parse_policy(policy, r.path("reject_policy"));
    r.text("delimiter", cfg.run.delimiter.literal);
    r.text("answer_marker", cfg.run.answer_marker);
    r.flag("concurrent_dispatch", cfg.run.concurrent_dispatch);
  }
  if (top.has("sim")) {
    const Reader r = top.child("sim");
    r.allow({"chain_length", "modulus", "draft_step_accuracy", "difficulty_mix", "paraphrase_rate", "style",
             "draft_verifier", "target_verifier"});
    r.count("chain_length", cfg.sim.chain_length);
    r.count("modulus", cfg.sim.modulus);
    r.number("draft_step_accuracy", cfg.sim.draft_step_accuracy);
    r.number("difficulty_mix", cfg.sim.difficulty_mix);
    r.number("paraphrase_rate", cfg.sim.paraphrase_rate);
    std::string style = cfg.sim.style == sim::StepStyle::terse ? "terse" : "verbose";
    r.text("style", style);
    if (style == "terse") {
      cfg.sim.style = sim::StepStyle::terse;
    } else if (style == "verbose") {
      cfg.sim.style = sim::StepStyle::verbose;
    } else {
      throw ConfigError(r.path("style"), "expected \"terse\" or \"verbose\"");
    }
    if (r.has("draft_verifier")) cfg.sim.draft_verifier = config_detail::read_profile(r.child("draft_verifier"), cfg.sim.draft_verifier);
    if (r.has("target_verifier")) cfg.sim.target_verifier = config_detail::read_profile(r.child("target_verifier"), cfg.sim.target_verifier);
  }
  if (top.has("cost")) {
    const Reader r = top.child("cost");
    r.allow({"c_gen_draft", "c_gen_target", "c_verify_draft", "c_verify_target"});
    r.number("c_gen_draft", cfg.cost.c_gen_draft);
    r.number("c_gen_target", cfg.cost.c_gen_target);
    r.number("c_verify_draft", cfg.cost.c_verify_draft);
    r.number("c_verify_target", cfg.cost.c_verify_target);
  }
  if (top.has("pld")) {
    const Reader r = top.child("pld");
    r.allow({"enabled", "n", "max_draft"});
    r.flag("enabled", cfg.pld.enabled);
    r.count("n", cfg.pld.ngram.n);
    r.count("max_draft", cfg.pld.ngram.max_draft);
  }
  if (top.has("sweep")) {
    const Reader r = top.child("sweep");
    r.allow({"axis", "values"});
    SweepSpec s;
    r.text("axis", s.axis);
    static const char* axes[] = {"gamma", "draft_steps", "tree_width", "draft_step_accuracy", "pld", "reject_policy"};
    bool known = false;
    for (const char* a : axes) known = known || s.axis == a;
    if (!known) throw ConfigError(r.path("axis"), "unknown sweep axis \"" + s.axis + "\"");
    if (!r.has("values") || !r.raw("values").is_array() || r.raw("values").empty()) {
      throw ConfigError(r.path("values"), "expected a non-empty array");
    }
    for (const auto& v : r.raw("values")) s.values.push_back(v);
    cfg.sweep = std::move(s);
  }
  if (top.has("calibrate")) {
    const Reader r = top.child("calibrate");
    r.allow({"gamma", "samples", "profiles", "fit"});
    r.number("gamma", cfg.calibrate.gamma);
    r.count("samples", cfg.calibrate.samples);
    if (r.has("profiles")) {
      if (!r.raw("profiles").is_array()) throw ConfigError(r.path("profiles"), "expected an array");
      std::size_t i = 0;
      for (const auto& p : r.raw("profiles")) {
        const Reader pr(p, r.path("profiles") + "[" + std::to_string(i++) + "]");
        pr.allow({"name", "profile", "difficulty_mix"});
        NamedProfile np;
        pr.text("name", np.name);
        pr.number("difficulty_mix", np.difficulty_mix);
        if (pr.has("profile")) np.profile = config_detail::read_profile(pr.child("profile"));
        config_detail::checked(pr.path("profile"), [&] { np.profile.validate(); });
        cfg.calibrate.profiles.push_back(np);
      }
    }
    if (r.has("fit")) {
      if (!r.raw("fit").is_array()) throw ConfigError(r.path("fit"), "expected an array");
      std::size_t i = 0;
      for (const auto& p : r.raw("fit")) {
        const Reader fr(p, r.path("fit") + "[" + std::to_string(i++) + "]");
        fr.allow({"name", "overall", "hiconf", "coverage"});
        CalibrationTarget t;
        fr.text("name", t.name);
        fr.number("overall", t.point.overall);
        fr.number("hiconf", t.point.hiconf);
        fr.number("coverage", t.point.coverage);
        cfg.calibrate.fit.push_back(t);
      }
    }
  }
  if (top.has("bench")) {
    const Reader r = top.child("bench");
    r.allow({"draft", "target", "prompts"});
    if (r.has("draft")) cfg.bench.draft = config_detail::read_endpoint(r.child("draft"));
    if (r.has("target")) cfg.bench.target = config_detail::read_endpoint(r.child("target"));
    r.text("prompts", cfg.bench.prompts);
  }

  cfg.run.seed = cfg.seed;
  cfg.sim.seed = cfg.seed;
  config_detail::checked("run", [&] { cfg.run.validate(); });
  config_detail::checked("sim", [&] { cfg.sim.validate(); });
  config_detail::checked("cost", [&] { cfg.cost.validate(); });
  config_detail::checked("pld", [&] { cfg.pld.ngram.validate(); });
  if (cfg.traces < 1) throw ConfigError("traces", "must be >= 1");
  return cfg;
}

/// The complete configuration as JSON, enough to reproduce a simulated run.
inline ConfigJson config_snapshot(const AppConfig& c) {
  ConfigJson run{{"gamma", c.run.always_escalate ? ConfigJson("always") : ConfigJson(c.run.gamma)},
                 {"draft_steps", c.run.draft_steps},
                 {"tree_width", c.run.tree_width},
                 {"token_budget", c.run.token_budget},
                 {"reject_policy", to_string(c.run.reject_policy)},
                 {"delimiter", c.run.delimiter.literal},
                 {"answer_marker", c.run.answer_marker},
                 {"concurrent_dispatch", c.run.concurrent_dispatch}};
  ConfigJson simj{{"chain_length", c.sim.chain_length},
                  {"modulus", c.sim.modulus},
                  {"draft_step_accuracy", c.sim.draft_step_accuracy},
                  {"difficulty_mix", c.sim.difficulty_mix},
                  {"paraphrase_rate", c.sim.paraphrase_rate},
                  {"style", c.sim.style == sim::StepStyle::terse ? "terse" : "verbose"},
                  {"draft_verifier", config_detail::profile_json(c.sim.draft_verifier)},
                  {"target_verifier", config_detail::profile_json(c.sim.target_verifier)}};
  ConfigJson cost{{"c_gen_draft", c.cost.c_gen_draft},
                  {"c_gen_target", c.cost.c_gen_target},
                  {"c_verify_draft", c.cost.c_verify_draft},
                  {"c_verify_target", c.cost.c_verify_target}};
  ConfigJson out{{"run", run},
                 {"sim", simj},
                 {"cost", cost},
                 {"pld", {{"enabled", c.pld.enabled}, {"n", c.pld.ngram.n}, {"max_draft", c.pld.ngram.max_draft}}},
                 {"traces", c.traces},
                 {"seed", c.seed},
                 {"write_iterations", c.write_iterations}};
  if (c.sweep) out["sweep"] = {{"axis", c.sweep->axis}, {"values", c.sweep->values}};
  ConfigJson profiles = ConfigJson::array();
  for (const auto& p : c.calibrate.profiles) {
    profiles.push_back(
        {{"name", p.name}, {"profile", config_detail::profile_json(p.profile)}, {"difficulty_mix", p.difficulty_mix}});
  }
  ConfigJson fit = ConfigJson::array();
  for (const auto& f : c.calibrate.fit) {
    fit.push_back(
        {{"name", f.name}, {"overall", f.point.overall}, {"hiconf", f.point.hiconf}, {"coverage", f.point.coverage}});
  }
  out["calibrate"] = {{"gamma", c.calibrate.gamma}, {"samples", c.calibrate.samples}, {"profiles", profiles},
                      {"fit", fit}};
  ConfigJson bench{{"prompts", c.bench.prompts}};
  if (c.bench.draft) bench["draft"] = config_detail::endpoint_json(*c.bench.draft);
  if (c.bench.target) bench["target"] = config_detail::endpoint_json(*c.bench.target);
  out["bench"] = bench;
  return out;
}

/// Applies "a.b.c=value". The value is parsed as JSON when it parses, else
/// taken as a string. Intermediate objects are created as needed.
inline void apply_override(ConfigJson& root, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  ConfigJson value;
  try {
    value = ConfigJson::parse(raw);
  } catch (const ConfigJson::exception&) {
    value = raw;
  }
  ConfigJson* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(path, "empty path component");
    if (!node->is_object()) throw ConfigError(path, "cannot descend into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = ConfigJson::object();
    start = dot + 1;
  }
}

inline ConfigJson load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return ConfigJson::parse(buf.str());
  } catch (const ConfigJson::exception& e) {
    throw ConfigError("--config", std::string("not valid JSON: ") + e.what());
  }
}

}  // namespace confspec
