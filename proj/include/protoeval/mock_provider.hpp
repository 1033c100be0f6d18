#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protoeval/providers.hpp"

namespace protoeval::providers {

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// Small deterministic generator (splitmix64); results do not depend on the
/// standard library's distribution implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
  std::uint64_t next() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept;
  /// Uniform in [0, n).
  std::size_t below(std::size_t n) noexcept;

 private:
  std::uint64_t state_;
};

/// Config for an offline provider; it needs no endpoint or key.
ProviderConfig mock_config(std::string name, bool supports_logprobs = false);

struct MockReply {
  std::string text;
  std::optional<std::vector<TokenLogprob>> logprobs;
  /// When set, delivering this reply throws ProviderError with this status.
  std::optional<int> error_status;
};

/// Offline chat provider. Calls are serialized; every request is recorded.
class MockChatProvider final : public ChatProvider {
 public:
  /// Produces sample `index` of a request.
  using Responder = std::function<MockReply(const ChatRequest& request, int index)>;

  MockChatProvider(ProviderConfig cfg, Responder responder);

  /// Each sample consumes the next reply; running out throws
  /// ProviderError("mock script exhausted").
  static std::shared_ptr<MockChatProvider> scripted(std::vector<MockReply> script,
                                                    ProviderConfig cfg = mock_config("mock-script"));
  static std::shared_ptr<MockChatProvider> scripted_texts(const std::vector<std::string>& texts,
                                                          ProviderConfig cfg = mock_config("mock-script"));
  /// Every sample is the content of the last user message.
  static std::shared_ptr<MockChatProvider> echo(ProviderConfig cfg = mock_config("mock-echo"));

  ChatResponse complete(const ChatRequest& request) override;
  const ProviderConfig& config() const override { return cfg_; }

  std::vector<ChatRequest> requests() const;
  std::size_t call_count() const;

 private:
  ProviderConfig cfg_;
  Responder responder_;
  mutable std::mutex mu_;
  std::vector<ChatRequest> requests_;
};

/// Simulated pseudocode writer. Reads the protocol steps from the prompt and
/// maps each to an action picked by hashing the step text, so equally
/// faithful models agree. With probability 1 - fidelity a step is altered or
/// dropped; with no action list in the prompt, names drift into snake_case
/// with probability naming_drift. Output depends only on the model name,
/// the request seed and the prompt.
struct GeneratorParams {
  double fidelity = 0.9;
  double naming_drift = 0.5;
};

std::shared_ptr<MockChatProvider> make_simulated_generator(ProviderConfig cfg, GeneratorParams params = {});

/// Simulated judge. Reads the baseline and target blocks and the criterion
/// from the eval prompt and samples integer scores around a similarity-based
/// mean. Identical blocks always score 5. garbage_rate is the chance a sample
/// is an unparseable sentence.
struct JudgeParams {
  double noise = 0.7;
  double garbage_rate = 0.0;
};

std::shared_ptr<MockChatProvider> make_simulated_judge(ProviderConfig cfg, JudgeParams params = {});

/// Generator for generation prompts and judge for eval prompts.
std::shared_ptr<MockChatProvider> make_simulated_model(ProviderConfig cfg, GeneratorParams gen = {},
                                                       JudgeParams judge = {});

/// Builds the provider described by cfg.mock:
/// {"kind": "echo"} | {"kind": "script", "script": [..]} |
/// {"kind": "generator", "fidelity": f, "naming_drift": d} |
/// {"kind": "judge", "noise": s, "garbage_rate": g} |
/// {"kind": "model", ...generator and judge keys}.
std::shared_ptr<ChatProvider> make_mock_provider(const ProviderConfig& cfg);

/// Feature-hashing embedder: each lowercased whitespace token adds +-1 to a
/// bucket chosen by FNV-1a; the result is L2-normalized (all zeros for text
/// without tokens).
class HashEmbedder final : public EmbeddingProvider {
 public:
  explicit HashEmbedder(std::size_t dim = 256);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::string name() const override;

 private:
  std::size_t dim_;
};

}  // namespace protoeval::providers
