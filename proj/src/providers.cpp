#include "protoeval/providers.hpp"

#include <fmt/format.h>

#include "protoeval/embedded_data.hpp"
#include "protoeval/error.hpp"

namespace protoeval::providers {

void ProviderConfig::validate() const {
  if (name.empty()) throw ConfigError("provider name must not be empty");
  if (max_parallel < 1) throw ConfigError(fmt::format("provider {}: max_parallel must be at least 1", name));
  if (timeout.count() <= 0) throw ConfigError(fmt::format("provider {}: timeout must be positive", name));
  if (!(requests_per_minute > 0)) {
    throw ConfigError(fmt::format("provider {}: requests_per_minute must be positive", name));
  }
  static const char* kDialects[] = {"openai", "cohere", "gemini", "mock"};
  bool known = false;
  for (const char* d : kDialects) known = known || dialect == d;
  if (!known) throw ConfigError(fmt::format("provider {}: unknown dialect '{}'", name, dialect));
  if (dialect != "mock" && endpoint.empty()) throw ConfigError(fmt::format("provider {}: endpoint missing", name));
}

ProviderConfig ProviderConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("provider entry must be an object");
  ProviderConfig c;
  try {
    c.name = j.at("name").get<std::string>();
    c.dialect = j.value("dialect", c.dialect);
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model_id = j.value("model_id", c.name);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.max_parallel = j.value("max_parallel", c.max_parallel);
    c.requests_per_minute = j.value("requests_per_minute", c.requests_per_minute);
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long long>(c.timeout.count())));
    c.supports_logprobs = j.value("supports_logprobs", c.supports_logprobs);
    c.supports_system_role = j.value("supports_system_role", c.supports_system_role);
    c.supports_n = j.value("supports_n", c.supports_n);
    if (j.contains("mock")) c.mock = j.at("mock");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad provider entry: {}", e.what()));
  }
  c.validate();
  return c;
}

nlohmann::json ProviderConfig::to_json() const {
  nlohmann::json j = {{"name", name},
                      {"dialect", dialect},
                      {"endpoint", endpoint},
                      {"model_id", model_id},
                      {"api_key_env", api_key_env},
                      {"max_parallel", max_parallel},
                      {"requests_per_minute", requests_per_minute},
                      {"timeout_ms", timeout.count()},
                      {"supports_logprobs", supports_logprobs},
                      {"supports_system_role", supports_system_role},
                      {"supports_n", supports_n}};
  if (!mock.empty()) j["mock"] = mock;
  return j;
}

const std::vector<ProviderConfig>& default_provider_configs() {
  static const std::vector<ProviderConfig> configs = [] {
    auto text = embedded_file("providers.json");
    if (!text) throw Error("missing embedded providers.json");
    std::vector<ProviderConfig> out;
    const auto doc = nlohmann::json::parse(*text);
    for (const auto& p : doc.at("providers")) out.push_back(ProviderConfig::from_json(p));
    return out;
  }();
  return configs;
}

ChatResponse chat_complete(ChatProvider& provider, const ChatRequest& request) {
  if (request.n_samples < 1) throw ConfigError("n_samples must be at least 1");
  if (request.max_tokens && *request.max_tokens < 1) throw ConfigError("max_tokens must be positive");
  if (request.messages.empty()) throw ConfigError("chat request has no messages");
  ChatResponse resp = provider.complete(request);
  if (resp.samples.size() != static_cast<std::size_t>(request.n_samples)) {
    throw ProviderError(fmt::format("{} returned {} samples, expected {}", provider.config().name,
                                    resp.samples.size(), request.n_samples));
  }
  return resp;
}

std::vector<std::vector<double>> embed(EmbeddingProvider& provider, const std::vector<std::string>& texts) {
  if (texts.empty()) throw ConfigError("embed needs at least one text");
  auto vectors = provider.embed(texts);
  if (vectors.size() != texts.size()) {
    throw ProviderError(fmt::format("{} returned {} vectors for {} texts", provider.name(), vectors.size(),
                                    texts.size()));
  }
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size()) throw ProviderError("embedding dimension mismatch within batch");
  }
  if (vectors.front().empty()) throw ProviderError("embedding dimension is zero");
  return vectors;
}

}  // namespace protoeval::providers
