#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "protoeval/corpus.hpp"
#include "protoeval/llameval.hpp"
#include "protoeval/metrics.hpp"
#include "protoeval/providers.hpp"
#include "protoeval/runner.hpp"

namespace protoeval::manifest {

struct JudgeSettings {
  std::string provider;
  llameval::JudgeMode mode = llameval::JudgeMode::automatic;
  int n_samples = 20;
  int logprob_samples = 1;
  int max_semantic_retries = 5;
  double temperature = 1.0;
  int max_tokens = 16;
};

struct EmbedderSettings {
  /// "hash", "http" or "none".
  std::string kind = "hash";
  std::size_t dim = 256;
  std::string endpoint;
  std::chrono::milliseconds timeout{60'000};
};

/// A run manifest: JSON with comments. Relative paths are resolved against
/// the manifest's directory.
struct Manifest {
  std::filesystem::path base_dir;
  std::optional<std::filesystem::path> corpus;
  std::optional<std::size_t> max_protocols;
  corpus::CurationConfig curation;
  std::string run_id = "default";
  std::filesystem::path results_dir = "results";
  std::int64_t seed = 0;
  int workers = 1;
  std::optional<std::filesystem::path> actions;
  std::optional<std::filesystem::path> templates_dir;
  std::optional<std::filesystem::path> eval_steps_dir;
  /// Defaults overlaid with the manifest's entries (matched by name).
  std::vector<providers::ProviderConfig> providers;
  std::vector<std::string> targets;
  std::optional<std::string> baseline;
  JudgeSettings judge;
  std::vector<runner::TaskSpec> tasks = runner::default_tasks();
  std::vector<std::string> selfself_candidates;
  EmbedderSettings embedder;
  metrics::OverlapMode precision_recall_mode = metrics::OverlapMode::names;
  int metrics_runs = 1;
  /// The effective document after overrides, for the report.
  nlohmann::json snapshot;

  std::filesystem::path run_dir() const;
  /// Throws ConfigError when the name is unknown.
  const providers::ProviderConfig& provider(std::string_view name) const;
};

/// Sets a dotted key (e.g. "judge.n_samples") in a JSON document. The value
/// is parsed as JSON when it is valid JSON, otherwise taken as a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

Manifest parse_manifest(nlohmann::json doc, const std::filesystem::path& base_dir);

/// Throws ConfigError naming the path when the file is missing or invalid.
Manifest load_manifest(const std::filesystem::path& file, const std::vector<std::string>& overrides = {});

/// JSON with // and /* */ comments.
nlohmann::json parse_jsonc(std::string_view text, const std::string& origin);

}  // namespace protoeval::manifest
