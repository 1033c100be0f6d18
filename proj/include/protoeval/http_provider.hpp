#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "protoeval/providers.hpp"
#include "protoeval/transport.hpp"

namespace protoeval::providers {

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
EnvLookup process_env();

/// Request and response adapters for each dialect.
namespace wire {

std::string request_url(const ProviderConfig& cfg);
std::vector<std::pair<std::string, std::string>> request_headers(const ProviderConfig& cfg,
                                                                 const std::string& api_key);
/// `n` is the number of samples this one request asks for.
nlohmann::json build_request(const ProviderConfig& cfg, const ChatRequest& req, int n, bool logprobs);
/// Throws ProviderError on an unexpected shape.
std::vector<Sample> parse_response(const ProviderConfig& cfg, const nlohmann::json& body);

}  // namespace wire

struct HttpProviderOptions {
  RetryPolicy retry;
  /// Defaults to the system clock.
  Clock* clock = nullptr;
  NoticeSink notice;
  /// Defaults to process_env().
  EnvLookup env;
};

/// Chat client for a hosted model. Thread-safe; every HTTP send passes the
/// provider's token bucket and concurrency gate.
class HttpChatProvider final : public ChatProvider {
 public:
  /// Throws ConfigError when the API key variable is named but unset.
  HttpChatProvider(ProviderConfig cfg, std::shared_ptr<Transport> transport, HttpProviderOptions options = {});

  ChatResponse complete(const ChatRequest& request) override;
  const ProviderConfig& config() const override { return cfg_; }
  const ConcurrencyGate& gate() const { return gate_; }

 private:
  nlohmann::json send_json(const nlohmann::json& body);

  ProviderConfig cfg_;
  std::shared_ptr<Transport> transport_;
  HttpProviderOptions options_;
  Clock& clock_;
  std::string api_key_;
  RateLimiter limiter_;
  ConcurrencyGate gate_;
};

/// Client of the embedding sidecar: POST {base}/embed and GET {base}/health.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kMaxBatch = 256;

  HttpEmbeddingProvider(std::string base_url, std::shared_ptr<Transport> transport,
                        std::chrono::milliseconds timeout = std::chrono::milliseconds(60'000),
                        RetryPolicy retry = {}, Clock* clock = nullptr);

  /// The advertised dimension. Throws ProviderError unless status is "ok".
  int health();
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::string name() const override { return "http:" + base_url_; }

 private:
  std::string base_url_;
  std::shared_ptr<Transport> transport_;
  std::chrono::milliseconds timeout_;
  RetryPolicy retry_;
  Clock& clock_;
  std::optional<int> dim_;
};

/// HttpChatProvider for network dialects, or the simulator described by
/// `cfg.mock` for dialect "mock".
std::shared_ptr<ChatProvider> make_chat_provider(const ProviderConfig& cfg, std::shared_ptr<Transport> transport,
                                                 HttpProviderOptions options = {});

}  // namespace protoeval::providers
