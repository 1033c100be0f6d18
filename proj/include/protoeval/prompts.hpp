#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "protoeval/actions.hpp"
#include "protoeval/chat.hpp"
#include "protoeval/corpus.hpp"
#include "protoeval/providers.hpp"

namespace protoeval::prompts {

enum class BaselineKind { pseudocode_baseline, protocol_baseline };

std::string_view to_string(BaselineKind kind) noexcept;
BaselineKind baseline_kind_from_string(std::string_view text);

inline constexpr std::string_view kEvalFormMarker = "Evaluation Form (scores ONLY):";

struct CriterionDef {
  std::string name;
  int scale_min = 1;
  int scale_max = 5;
  std::string definition;
  /// Chain-of-thought steps; empty until loaded or generated.
  std::string eval_steps;
  BaselineKind baseline_kind = BaselineKind::pseudocode_baseline;

  bool operator==(const CriterionDef&) const = default;
};

/// The six criteria in canonical order, with definitions for `kind` and
/// the shipped evaluation steps attached.
std::vector<CriterionDef> default_criteria(BaselineKind kind);

/// Same, without evaluation steps.
std::vector<CriterionDef> default_criteria_without_steps(BaselineKind kind);

/// Canonical criterion order.
const std::vector<std::string>& criterion_names();

/// Applies the protocol-baseline substitutions to a pseudocode-baseline
/// definition.
std::string to_protocol_wording(std::string_view definition);

/// Plain-text templates with `{name}` placeholders. A single trailing
/// newline of each template file is not part of the template.
struct PromptTemplates {
  std::string generation_system;
  std::string generation_system_no_actions;
  std::string generation_user;
  std::string eval_pseudocode_baseline;
  std::string eval_protocol_baseline;

  static PromptTemplates defaults();
  /// Starts from the defaults and replaces each template whose file
  /// (e.g. generation_system.txt) exists in `dir`.
  static PromptTemplates load(const std::filesystem::path& dir);

  const std::string& eval_template(BaselineKind kind) const;
};

/// Single pass: `{key}` is replaced when key is in `values`; other braces
/// are left as they are. Substituted text is never rescanned.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

struct GenerationPromptInput {
  corpus::Protocol protocol;
  /// Absent for the no-actions condition.
  std::optional<actions::ActionRegistry> registry;
};

/// `1. step` lines joined by "\n".
std::string render_steps(const std::vector<std::string>& steps);

/// System message with the fixed instructions, then the protocol as the user
/// message.
std::vector<ChatMessage> build_generation_prompt(const GenerationPromptInput& input,
                                                 const PromptTemplates& templates = PromptTemplates::defaults());

/// One user message ending in "- <Name>:". Throws ConfigError when the
/// criterion has no evaluation steps.
std::vector<ChatMessage> build_eval_prompt(const CriterionDef& criterion, std::string_view baseline,
                                           std::string_view target,
                                           const PromptTemplates& templates = PromptTemplates::defaults());

/// The framing and criterion part of the eval prompt, ending at
/// "Evaluation Steps:" for the helper model to fill in.
std::vector<ChatMessage> build_eval_steps_request(const CriterionDef& criterion,
                                                  const PromptTemplates& templates = PromptTemplates::defaults());

/// `coherence.pseudocode_baseline.txt` and so on.
std::string eval_steps_file_name(const CriterionDef& criterion);

struct EvalStepsOptions {
  /// Directory holding cached steps files.
  std::optional<std::filesystem::path> cache_dir;
  /// Query the provider even when a cached file exists, then overwrite it.
  bool regenerate = false;
  PromptTemplates templates = PromptTemplates::defaults();
};

/// Returns cached steps when a file exists (and regeneration is off);
/// otherwise asks `helper` and writes the result to the cache.
/// Throws ProviderError on an empty response.
std::string generate_eval_steps(providers::ChatProvider* helper, const CriterionDef& criterion,
                                const EvalStepsOptions& options = {});

/// Fills eval_steps of every criterion from `dir`, falling back to the
/// shipped steps. Throws ConfigError when neither has a file.
void attach_eval_steps(std::vector<CriterionDef>& criteria, const std::optional<std::filesystem::path>& dir);

}  // namespace protoeval::prompts
