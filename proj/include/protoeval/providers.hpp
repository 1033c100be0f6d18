#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "protoeval/chat.hpp"

namespace protoeval::providers {

/// One chat (or embedding) backend. `dialect` selects the wire adapter:
/// "openai" (also OpenAI-compatible hosts), "cohere", "gemini", or "mock"
/// for the offline simulators configured through `mock`.
struct ProviderConfig {
  std::string name;
  std::string dialect = "openai";
  std::string endpoint;
  std::string model_id;
  std::string api_key_env;
  int max_parallel = 4;
  double requests_per_minute = 60.0;
  std::chrono::milliseconds timeout{60'000};
  bool supports_logprobs = false;
  bool supports_system_role = true;
  /// Whether one request may ask for several samples; otherwise the client
  /// issues one request per sample.
  bool supports_n = true;
  nlohmann::json mock = nlohmann::json::object();

  /// Throws ConfigError on max_parallel < 1, timeout <= 0, rpm <= 0, empty name.
  void validate() const;

  static ProviderConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// The twelve model call strings the evaluation used, with their hosts.
const std::vector<ProviderConfig>& default_provider_configs();

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
  /// Sorted by descending logprob.
  std::vector<std::pair<std::string, double>> alternatives;
};

struct Sample {
  std::string text;
  std::optional<std::vector<TokenLogprob>> logprobs;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  /// Unset means the provider's default.
  std::optional<double> temperature;
  std::optional<int> max_tokens;
  int n_samples = 1;
  std::optional<std::int64_t> seed;
  bool want_logprobs = false;
  int top_logprobs = 5;
};

struct ChatResponse {
  std::vector<Sample> samples;
  nlohmann::json provider_meta = nlohmann::json::object();
  /// Capability notices, e.g. logprobs requested but unsupported.
  std::vector<std::string> notices;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual const ProviderConfig& config() const = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
  virtual std::string name() const = 0;
};

/// Checks the request, calls the provider, and verifies that exactly
/// n_samples samples came back. Throws ProviderError otherwise.
ChatResponse chat_complete(ChatProvider& provider, const ChatRequest& request);

/// Rejects an empty input and a response whose vectors differ in dimension
/// or count. Order of outputs follows order of inputs.
std::vector<std::vector<double>> embed(EmbeddingProvider& provider,
                                       const std::vector<std::string>& texts);

using NoticeSink = std::function<void(const std::string&)>;

}  // namespace protoeval::providers
