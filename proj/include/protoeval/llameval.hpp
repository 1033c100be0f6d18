#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "protoeval/prompts.hpp"
#include "protoeval/providers.hpp"
#include "protoeval/scores.hpp"

namespace protoeval::llameval {

enum class JudgeMode { automatic, logprob, sampling };

std::string_view to_string(JudgeMode mode) noexcept;
JudgeMode judge_mode_from_string(std::string_view text);

struct JudgeConfig {
  std::shared_ptr<providers::ChatProvider> provider;
  /// automatic: logprob when the provider reports logprob support.
  JudgeMode mode = JudgeMode::automatic;
  int n_samples = 20;
  /// Samples per request in logprob mode; their distributions are averaged.
  int logprob_samples = 1;
  int max_semantic_retries = 5;
  double temperature = 1.0;
  int max_tokens = 16;
  std::optional<std::int64_t> seed;
  prompts::PromptTemplates templates = prompts::PromptTemplates::defaults();

  /// Throws ConfigError: no provider, retries outside 5..10, n_samples < 1.
  void validate() const;
  ScoreMode effective_mode() const;
};

/// First standalone integer 1-5 after "- <criterion>:" (label matched
/// case-insensitively), else the first one anywhere. Digits that belong to
/// a longer number or a decimal do not count.
std::optional<int> parse_score_response(std::string_view text, std::string_view criterion);

/// Frequencies of the parsed scores. Throws Error when `scores` is empty.
ScoreDistribution distribution_from_samples(const std::vector<int>& scores);

/// Distribution at the first token that is a digit 1-5, renormalized over
/// the digit alternatives. nullopt when no such token exists.
std::optional<ScoreDistribution> distribution_from_logprobs(const std::vector<providers::TokenLogprob>& tokens);

/// Mean of the distributions, n_observations summed.
ScoreDistribution average_distributions(const std::vector<ScoreDistribution>& dists);

struct CriterionResult {
  std::string criterion;
  ScoreDistribution distribution;
  double score = 0.0;
  int attempts_used = 0;
  std::vector<std::string> raw_responses;
  std::vector<std::string> notices;
};

/// Queries the judge until a response yields a score, at most
/// max_semantic_retries times. Throws EvaluationError carrying every raw
/// response when no attempt yields one, or when the provider fails; an
/// AuthError propagates unchanged.
CriterionResult evaluate_criterion(const JudgeConfig& judge, const prompts::CriterionDef& criterion,
                                   std::string_view baseline, std::string_view target);

struct CriterionOutcome {
  std::string criterion;
  std::optional<CriterionResult> result;
  std::optional<std::string> error;
  std::vector<std::string> raw_responses;
};

/// One outcome per criterion, in input order; a failing criterion does not
/// stop the others.
std::vector<CriterionOutcome> evaluate_all(const JudgeConfig& judge, const std::vector<prompts::CriterionDef>& criteria,
                                           std::string_view baseline, std::string_view target);

nlohmann::json to_json(const ScoreDistribution& dist);
ScoreDistribution distribution_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CriterionResult& result);
CriterionResult criterion_result_from_json(const nlohmann::json& j);

}  // namespace protoeval::llameval
