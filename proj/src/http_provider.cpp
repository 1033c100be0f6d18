#include "protoeval/http_provider.hpp"

#include <algorithm>
#include <cstdlib>

#include <fmt/format.h>

#include "protoeval/error.hpp"
#include "protoeval/mock_provider.hpp"
#include "text_util.hpp"

namespace protoeval::providers {

using nlohmann::json;

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
}

namespace wire {
namespace {

std::vector<TokenLogprob> parse_openai_logprobs(const json& lp) {
  std::vector<TokenLogprob> out;
  if (!lp.is_object() || !lp.contains("content") || !lp["content"].is_array()) return out;
  for (const auto& t : lp["content"]) {
    TokenLogprob tl;
    tl.token = t.value("token", "");
    tl.logprob = t.value("logprob", 0.0);
    if (t.contains("top_logprobs") && t["top_logprobs"].is_array()) {
      for (const auto& alt : t["top_logprobs"]) {
        tl.alternatives.emplace_back(alt.value("token", ""), alt.value("logprob", 0.0));
      }
    }
    std::stable_sort(tl.alternatives.begin(), tl.alternatives.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    out.push_back(std::move(tl));
  }
  return out;
}

std::string text_of_parts(const json& parts) {
  std::string out;
  if (!parts.is_array()) return out;
  for (const auto& p : parts) {
    if (p.is_object() && p.contains("text") && p["text"].is_string()) out += p["text"].get<std::string>();
  }
  return out;
}

}  // namespace

std::string request_url(const ProviderConfig& cfg) {
  return detail::replace_all(cfg.endpoint, "{model}", cfg.model_id);
}

std::vector<std::pair<std::string, std::string>> request_headers(const ProviderConfig& cfg,
                                                                 const std::string& api_key) {
  std::vector<std::pair<std::string, std::string>> h{{"Content-Type", "application/json"}};
  if (api_key.empty()) return h;
  if (cfg.dialect == "gemini") {
    h.emplace_back("x-goog-api-key", api_key);
  } else {
    h.emplace_back("Authorization", "Bearer " + api_key);
  }
  return h;
}

json build_request(const ProviderConfig& cfg, const ChatRequest& req, int n, bool logprobs) {
  auto messages = cfg.supports_system_role ? req.messages : merge_system_into_user(req.messages);
  if (cfg.dialect == "gemini") {
    json body = json::object();
    json contents = json::array();
    for (const auto& m : messages) {
      if (m.role == Role::system) {
        body["systemInstruction"] = {{"parts", json::array({{{"text", m.content}}})}};
        continue;
      }
      contents.push_back({{"role", m.role == Role::assistant ? "model" : "user"},
                          {"parts", json::array({{{"text", m.content}}})}});
    }
    body["contents"] = std::move(contents);
    json gen = json::object();
    if (req.temperature) gen["temperature"] = *req.temperature;
    if (req.max_tokens) gen["maxOutputTokens"] = *req.max_tokens;
    if (n > 1) gen["candidateCount"] = n;
    if (req.seed) gen["seed"] = *req.seed;
    if (!gen.empty()) body["generationConfig"] = std::move(gen);
    return body;
  }

  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  json body = {{"model", cfg.model_id}, {"messages", std::move(msgs)}};
  if (req.temperature) body["temperature"] = *req.temperature;
  if (req.max_tokens) body["max_tokens"] = *req.max_tokens;
  if (req.seed) body["seed"] = *req.seed;
  if (cfg.dialect == "openai") {
    if (n > 1) body["n"] = n;
    if (logprobs) {
      body["logprobs"] = true;
      body["top_logprobs"] = req.top_logprobs;
    }
  }
  return body;
}

std::vector<Sample> parse_response(const ProviderConfig& cfg, const json& body) {
  std::vector<Sample> out;
  try {
    if (cfg.dialect == "gemini") {
      for (const auto& c : body.at("candidates")) {
        Sample s;
        if (c.contains("content")) s.text = text_of_parts(c["content"].value("parts", json::array()));
        out.push_back(std::move(s));
      }
    } else if (cfg.dialect == "cohere") {
      Sample s;
      s.text = text_of_parts(body.at("message").at("content"));
      out.push_back(std::move(s));
    } else {
      for (const auto& c : body.at("choices")) {
        Sample s;
        const auto& content = c.at("message").at("content");
        s.text = content.is_string() ? content.get<std::string>() : std::string();
        if (c.contains("logprobs") && !c["logprobs"].is_null()) s.logprobs = parse_openai_logprobs(c["logprobs"]);
        out.push_back(std::move(s));
      }
    }
  } catch (const json::exception& e) {
    throw ProviderError(fmt::format("unexpected {} response shape: {}", cfg.dialect, e.what()));
  }
  return out;
}

}  // namespace wire

HttpChatProvider::HttpChatProvider(ProviderConfig cfg, std::shared_ptr<Transport> transport,
                                   HttpProviderOptions options)
    : cfg_(std::move(cfg)),
      transport_(std::move(transport)),
      options_(std::move(options)),
      clock_(options_.clock ? *options_.clock : system_clock()),
      limiter_(cfg_.requests_per_minute, cfg_.max_parallel, clock_),
      gate_(cfg_.max_parallel) {
  cfg_.validate();
  if (!transport_) throw ConfigError("HTTP provider needs a transport");
  if (!options_.env) options_.env = process_env();
  if (!cfg_.api_key_env.empty()) {
    auto key = options_.env(cfg_.api_key_env);
    if (!key || key->empty()) {
      throw ConfigError(fmt::format("provider {}: environment variable {} is not set", cfg_.name, cfg_.api_key_env));
    }
    api_key_ = *key;
  }
}

json HttpChatProvider::send_json(const json& body) {
  HttpRequest req;
  req.method = "POST";
  req.url = wire::request_url(cfg_);
  req.headers = wire::request_headers(cfg_, api_key_);
  req.body = body.dump();
  req.timeout = cfg_.timeout;

  // Each attempt is throttled separately, so retries count toward the rate.
  struct ThrottledTransport final : Transport {
    HttpChatProvider& self;
    explicit ThrottledTransport(HttpChatProvider& s) : self(s) {}
    HttpResponse send(const HttpRequest& r) override {
      self.limiter_.acquire();
      ConcurrencyGate::Permit permit(self.gate_);
      return self.transport_->send(r);
    }
  } throttled(*this);

  auto resp = send_with_retries(throttled, req, options_.retry, clock_, options_.notice);
  try {
    return json::parse(resp.body);
  } catch (const json::exception& e) {
    throw ProviderError(fmt::format("{}: malformed response body: {}", cfg_.name, e.what()), resp.status);
  }
}

ChatResponse HttpChatProvider::complete(const ChatRequest& request) {
  ChatResponse out;
  bool logprobs = request.want_logprobs && cfg_.supports_logprobs;
  if (request.want_logprobs && !cfg_.supports_logprobs) {
    out.notices.push_back(fmt::format("{} does not support logprobs; samples returned without them", cfg_.name));
  }
  int per_request = cfg_.supports_n ? request.n_samples : 1;
  int issued = 0;
  json metas = json::array();
  while (static_cast<int>(out.samples.size()) < request.n_samples) {
    int want = std::min(per_request, request.n_samples - static_cast<int>(out.samples.size()));
    ChatRequest r = request;
    // Distinct seeds keep looped samples from collapsing onto one output.
    if (r.seed && !cfg_.supports_n) r.seed = *r.seed + issued;
    json body = send_json(wire::build_request(cfg_, r, want, logprobs));
    auto samples = wire::parse_response(cfg_, body);
    if (samples.empty()) throw ProviderError(fmt::format("{} returned no samples", cfg_.name));
    ++issued;
    for (auto& s : samples) {
      if (static_cast<int>(out.samples.size()) < request.n_samples) out.samples.push_back(std::move(s));
    }
    json meta = json::object();
    for (const char* k : {"id", "model", "usage", "usageMetadata", "system_fingerprint"}) {
      if (body.contains(k)) meta[k] = body[k];
    }
    metas.push_back(std::move(meta));
    if (issued > request.n_samples * 2) throw ProviderError(fmt::format("{} keeps returning too few samples", cfg_.name));
  }
  out.provider_meta = {{"provider", cfg_.name}, {"model_id", cfg_.model_id}, {"requests", issued}, {"responses", metas}};
  for (const auto& n : out.notices) {
    if (options_.notice) options_.notice(n);
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url, std::shared_ptr<Transport> transport,
                                             std::chrono::milliseconds timeout, RetryPolicy retry, Clock* clock)
    : base_url_(std::move(base_url)),
      transport_(std::move(transport)),
      timeout_(timeout),
      retry_(retry),
      clock_(clock ? *clock : system_clock()) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  if (base_url_.empty()) throw ConfigError("embedding endpoint missing");
  if (!transport_) throw ConfigError("embedding provider needs a transport");
}

int HttpEmbeddingProvider::health() {
  HttpRequest req;
  req.method = "GET";
  req.url = base_url_ + "/health";
  req.timeout = timeout_;
  auto resp = send_with_retries(*transport_, req, retry_, clock_);
  json body;
  try {
    body = json::parse(resp.body);
  } catch (const json::exception& e) {
    throw ProviderError(fmt::format("embedding health: malformed body: {}", e.what()));
  }
  if (!body.is_object() || body.value("status", "") != "ok" || !body.contains("dim") ||
      !body["dim"].is_number_integer() || body["dim"].get<int>() < 1) {
    throw ProviderError(fmt::format("embedding service unhealthy: {}", resp.body));
  }
  dim_ = body["dim"].get<int>();
  return *dim_;
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts) {
  if (!dim_) health();
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += kMaxBatch) {
    std::size_t end = std::min(texts.size(), start + kMaxBatch);
    json batch = json::array();
    for (std::size_t i = start; i < end; ++i) batch.push_back(texts[i]);
    HttpRequest req;
    req.url = base_url_ + "/embed";
    req.headers = {{"Content-Type", "application/json"}};
    req.body = json{{"texts", std::move(batch)}}.dump();
    req.timeout = timeout_;
    auto resp = send_with_retries(*transport_, req, retry_, clock_);
    try {
      auto body = json::parse(resp.body);
      int dim = body.at("dim").get<int>();
      const auto& vectors = body.at("vectors");
      if (dim != *dim_) throw ProviderError(fmt::format("embedding dim {} differs from advertised {}", dim, *dim_));
      if (vectors.size() != end - start) {
        throw ProviderError(fmt::format("embedding service returned {} vectors for {} texts", vectors.size(),
                                        end - start));
      }
      for (const auto& v : vectors) {
        auto vec = v.get<std::vector<double>>();
        if (static_cast<int>(vec.size()) != dim) throw ProviderError("embedding dimension mismatch within batch");
        out.push_back(std::move(vec));
      }
    } catch (const json::exception& e) {
      throw ProviderError(fmt::format("embedding service: malformed body: {}", e.what()));
    }
  }
  return out;
}

std::shared_ptr<ChatProvider> make_chat_provider(const ProviderConfig& cfg, std::shared_ptr<Transport> transport,
                                                 HttpProviderOptions options) {
  if (cfg.dialect == "mock") return make_mock_provider(cfg);
  if (!transport) transport = make_http_transport();
  return std::make_shared<HttpChatProvider>(cfg, std::move(transport), std::move(options));
}

}  // namespace protoeval::providers
