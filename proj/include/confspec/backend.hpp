#pragma once

// Generator and verifier backed by an inference server that speaks the
// OpenAI-compatible /v1/completions protocol.
//
// Needs httplib.h and json.hpp (nlohmann) on the include path. Plain http only.

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "confspec/core.hpp"
#include "confspec/errors.hpp"
#include "confspec/oracle.hpp"

namespace confspec {

struct EndpointConfig {
  std::string base_url;
  std::string model_name;
  std::optional<std::string> api_key;
  std::chrono::milliseconds request_timeout{30000};
  std::size_t max_retries = 2;
  std::chrono::milliseconds retry_backoff{100};
  std::vector<std::string> stop_sequences{"\n\n"};
  std::size_t max_step_tokens = 256;
  std::size_t logprob_top_k = 5;
  double temperature = 0.0;
  // Temperature for alternative samples (sample_index > 0).
  double sample_temperature = 0.7;
  std::size_t max_in_flight = 8;

  void validate() const {
    if (base_url.empty()) throw ConfigError("base_url", "must be set");
    if (base_url.rfind("http://", 0) != 0) throw ConfigError("base_url", "only http:// endpoints are supported");
    if (request_timeout.count() <= 0) throw ConfigError("request_timeout_ms", "must be positive");
    if (stop_sequences.empty()) throw ConfigError("stop_sequences", "must be non-empty");
    if (max_step_tokens < 1) throw ConfigError("max_step_tokens", "must be positive");
    if (logprob_top_k < 2) throw ConfigError("logprob_top_k", "must be >= 2");
    if (max_in_flight < 1) throw ConfigError("max_in_flight", "must be positive");
  }
};

struct CompletionRequest {
  std::string prompt;
  std::size_t max_tokens = 1;
  double temperature = 0.0;
  std::vector<std::string> stop;
  std::optional<std::size_t> logprobs;
  std::optional<std::uint64_t> seed;
};

struct CompletionResult {
  std::string text;
  std::string finish_reason;
  bool has_stop_reason = false;
  bool stop_reason_null = false;
  std::optional<std::size_t> completion_tokens;
  // Alternatives for the first generated token, when logprobs were requested.
  std::optional<std::map<std::string, double>> first_token_logprobs;
  std::size_t attempts = 0;
};

inline nlohmann::json to_json(const CompletionRequest& r, const std::string& model) {
  nlohmann::json j = {{"model", model}, {"prompt", r.prompt}, {"max_tokens", r.max_tokens},
                      {"temperature", r.temperature}};
  if (!r.stop.empty()) j["stop"] = r.stop;
  if (r.logprobs) j["logprobs"] = *r.logprobs;
  if (r.seed) j["seed"] = *r.seed;
  return j;
}

/// Parses the first choice of a completions response.
inline CompletionResult parse_completion(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw ProtocolError("response has no choices");
  }
  const nlohmann::json& c = j["choices"][0];
  if (!c.contains("text") || !c["text"].is_string()) throw ProtocolError("choice has no text");
  CompletionResult out;
  out.text = c["text"].get<std::string>();
  if (c.contains("finish_reason") && c["finish_reason"].is_string()) out.finish_reason = c["finish_reason"];
  if (c.contains("stop_reason")) {
    out.has_stop_reason = true;
    out.stop_reason_null = c["stop_reason"].is_null();
  }
  if (j.contains("usage") && j["usage"].is_object() && j["usage"].contains("completion_tokens") &&
      j["usage"]["completion_tokens"].is_number_unsigned()) {
    out.completion_tokens = j["usage"]["completion_tokens"].get<std::size_t>();
  }
  if (c.contains("logprobs") && c["logprobs"].is_object()) {
    const nlohmann::json& lp = c["logprobs"];
    if (lp.contains("top_logprobs") && lp["top_logprobs"].is_array() && !lp["top_logprobs"].empty()) {
      const nlohmann::json& first = lp["top_logprobs"][0];
      if (!first.is_object()) throw ProtocolError("top_logprobs entry is not an object");
      std::map<std::string, double> alts;
      for (auto it = first.begin(); it != first.end(); ++it) {
        if (!it.value().is_number()) throw ProtocolError("logprob for \"" + it.key() + "\" is not a number");
        alts[it.key()] = it.value().get<double>();
      }
      out.first_token_logprobs = std::move(alts);
    }
  }
  return out;
}

/// Endpoints that already passed the startup probe, shared by the process.
class ProbeRegistry {
 public:
  static ProbeRegistry& instance() {
    static ProbeRegistry r;
    return r;
  }
  bool contains(const std::string& key) {
    std::lock_guard lock(mu_);
    return done_.count(key) > 0;
  }
  void insert(const std::string& key) {
    std::lock_guard lock(mu_);
    done_.insert(key);
  }
  void clear() {
    std::lock_guard lock(mu_);
    done_.clear();
  }

 private:
  std::mutex mu_;
  std::set<std::string> done_;
};

class CompletionClient {
 public:
  explicit CompletionClient(EndpointConfig config) : config_(std::move(config)) { config_.validate(); }

  const EndpointConfig& config() const noexcept { return config_; }

  /// Sends one request, retrying transport failures, 429 and 5xx responses.
  CompletionResult complete(const CompletionRequest& request) {
    InFlight slot(*this);
    const std::string body = to_json(request, config_.model_name).dump();
    httplib::Headers headers;
    if (config_.api_key && !config_.api_key->empty()) {
      headers.emplace("Authorization", "Bearer " + *config_.api_key);
    }
    std::vector<std::string> trace;
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        ++retries_;
        std::this_thread::sleep_for(config_.retry_backoff * (1u << std::min<std::size_t>(attempt - 1, 6)));
      }
      ++requests_;
      httplib::Client client(config_.base_url);
      client.set_connection_timeout(config_.request_timeout);
      client.set_read_timeout(config_.request_timeout);
      client.set_write_timeout(config_.request_timeout);
      const httplib::Result res = client.Post("/v1/completions", headers, body, "application/json");
      if (!res) {
        trace.push_back("attempt " + std::to_string(attempt + 1) + ": " + httplib::to_string(res.error()));
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        trace.push_back("attempt " + std::to_string(attempt + 1) + ": HTTP " + std::to_string(res->status));
        continue;
      }
      if (res->status != 200) {
        trace.push_back("attempt " + std::to_string(attempt + 1) + ": HTTP " + std::to_string(res->status));
        throw BackendError(config_.base_url + " rejected the request with HTTP " + std::to_string(res->status),
                           trace);
      }
      CompletionResult out = parse_completion(res->body);
      out.attempts = attempt + 1;
      return out;
    }
    throw BackendError(config_.base_url + " unreachable after " + std::to_string(trace.size()) + " attempts", trace);
  }

  /// One-token request asking for log-probabilities; run once per endpoint
  /// and model per process. Throws ConfigError if logprobs are not returned.
  void probe() {
    const std::string key = config_.base_url + "|" + config_.model_name;
    if (ProbeRegistry::instance().contains(key)) return;
    CompletionRequest req;
    req.prompt = "Answer Yes or No. Is 2 greater than 1?";
    req.max_tokens = 1;
    req.logprobs = config_.logprob_top_k;
    const CompletionResult r = complete(req);
    if (!r.first_token_logprobs) {
      throw ConfigError(config_.base_url, "endpoint does not return per-token log-probabilities");
    }
    ProbeRegistry::instance().insert(key);
  }

  std::size_t requests() const noexcept { return requests_; }
  std::size_t retries() const noexcept { return retries_; }

 private:
  struct InFlight {
    explicit InFlight(CompletionClient& c) : c_(c) {
      std::unique_lock lock(c_.mu_);
      c_.cv_.wait(lock, [&] { return c_.in_flight_ < c_.config_.max_in_flight; });
      ++c_.in_flight_;
    }
    ~InFlight() {
      {
        std::lock_guard lock(c_.mu_);
        --c_.in_flight_;
      }
      c_.cv_.notify_one();
    }
    CompletionClient& c_;
  };

  EndpointConfig config_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> retries_{0};
};

/// The yes/no equivalence prompt sent to a verifier.
struct VerificationPromptTemplate {
  std::string version = "v1";
  std::string text =
      "{context}\n\n"
      "Candidate A: {target}\n"
      "Candidate B: {draft}\n"
      "Are these two steps semantically equivalent as the next reasoning step? Answer Yes or No.\n"
      "Answer:";
  std::vector<std::string> yes_variants{"Yes", " Yes", "yes", " yes"};
  std::vector<std::string> no_variants{"No", " No", "no", " no"};
  std::size_t context_steps = 2;
  std::size_t prompt_tail_tokens = 512;

  /// The last prompt_tail_tokens whitespace tokens of the prompt, then the
  /// last context_steps accepted steps.
  std::string context_tail(const ReasoningContext& context) const {
    std::vector<std::string_view> words;
    const std::string& p = context.prompt();
    std::size_t i = 0;
    while (i < p.size()) {
      while (i < p.size() && std::isspace(static_cast<unsigned char>(p[i]))) ++i;
      std::size_t j = i;
      while (j < p.size() && !std::isspace(static_cast<unsigned char>(p[j]))) ++j;
      if (j > i) words.emplace_back(std::string_view(p).substr(i, j - i));
      i = j;
    }
    std::string out;
    if (words.size() <= prompt_tail_tokens) {
      out = p;
    } else {
      const std::size_t from = words[words.size() - prompt_tail_tokens].data() - p.data();
      out = p.substr(from);
    }
    const auto& steps = context.steps();
    const std::size_t first = steps.size() > context_steps ? steps.size() - context_steps : 0;
    for (std::size_t s = first; s < steps.size(); ++s) out += "\n\n" + steps[s].text;
    return out;
  }

  std::string render(const VerificationQuery& query) const {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
      if (text.compare(i, 9, "{context}") == 0) {
        out += context_tail(query.context);
        i += 9;
      } else if (text.compare(i, 8, "{target}") == 0) {
        out += query.target_step.text;
        i += 8;
      } else if (text.compare(i, 7, "{draft}") == 0) {
        out += query.draft_step.text;
        i += 7;
      } else {
        out += text[i++];
      }
    }
    return out;
  }
};

/// Probability of the accept class: the exp(logprob) mass of the yes variants
/// over the mass of both classes. Throws UnverifiableError if neither appears.
inline double accept_probability(const std::map<std::string, double>& top_logprobs,
                                 const VerificationPromptTemplate& tmpl) {
  double yes = 0.0, no = 0.0;
  bool any = false;
  for (const std::string& v : tmpl.yes_variants) {
    if (auto it = top_logprobs.find(v); it != top_logprobs.end()) yes += std::exp(it->second), any = true;
  }
  for (const std::string& v : tmpl.no_variants) {
    if (auto it = top_logprobs.find(v); it != top_logprobs.end()) no += std::exp(it->second), any = true;
  }
  if (!any || yes + no <= 0.0) throw UnverifiableError("no Yes/No token among the returned alternatives");
  return yes / (yes + no);
}

inline VerificationVerdict verdict_from_logprobs(const std::map<std::string, double>& top_logprobs,
                                                 const VerificationPromptTemplate& tmpl, Tier tier) {
  return verdict_from_decision_probability(accept_probability(top_logprobs, tmpl), tier);
}

/// Generation request for the next step after `context`.
inline Step remote_generate_step(CompletionClient& client, const ReasoningContext& context,
                                 const BoundaryDelimiter& delimiter = {}, std::size_t sample_index = 0) {
  const EndpointConfig& cfg = client.config();
  CompletionRequest req;
  req.prompt = context.render(delimiter);
  req.max_tokens = cfg.max_step_tokens;
  req.stop = cfg.stop_sequences;
  req.temperature = sample_index == 0 ? cfg.temperature : cfg.sample_temperature;
  if (sample_index > 0) req.seed = sample_index;
  const CompletionResult r = client.complete(req);

  std::string text = r.text;
  bool cut = false;
  if (const std::size_t at = text.find(delimiter.literal); at != std::string::npos) {
    text.resize(at);
    cut = true;
  }
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
  std::size_t lead = 0;
  while (lead < text.size() && std::isspace(static_cast<unsigned char>(text[lead]))) ++lead;
  text.erase(0, lead);

  Step step = make_step(text);
  step.incomplete = !cut && r.finish_reason == "length";
  step.end_of_sequence = text.empty() || (!cut && r.finish_reason == "stop" && r.has_stop_reason && r.stop_reason_null);
  if (r.completion_tokens) step.forward_passes = *r.completion_tokens;
  return step;
}

inline VerificationVerdict remote_verify(CompletionClient& client, const VerificationQuery& query,
                                         const VerificationPromptTemplate& tmpl, Tier tier) {
  CompletionRequest req;
  req.prompt = tmpl.render(query);
  req.max_tokens = 1;
  req.temperature = 0.0;
  req.logprobs = client.config().logprob_top_k;
  const CompletionResult r = client.complete(req);
  if (!r.first_token_logprobs) throw ProtocolError("verification response carries no logprobs");
  return verdict_from_logprobs(*r.first_token_logprobs, tmpl, tier);
}

class RemoteModel final : public Model {
 public:
  RemoteModel(EndpointConfig config, Tier tier, VerificationPromptTemplate tmpl = {}, BoundaryDelimiter delimiter = {})
      : client_(std::move(config)), tier_(tier), template_(std::move(tmpl)), delimiter_(std::move(delimiter)) {}

  void probe() { client_.probe(); }

  Step sample_step(const ReasoningContext& context, std::size_t sample_index) override {
    return remote_generate_step(client_, context, delimiter_, sample_index);
  }
  VerificationVerdict verify(const VerificationQuery& query) override {
    return remote_verify(client_, query, template_, tier_);
  }

  CompletionClient& client() noexcept { return client_; }

 private:
  CompletionClient client_;
  Tier tier_;
  VerificationPromptTemplate template_;
  BoundaryDelimiter delimiter_;
};

}  // namespace confspec
