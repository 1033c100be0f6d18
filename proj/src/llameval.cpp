#include "protoeval/llameval.hpp"

#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "protoeval/error.hpp"
#include "protoeval/metrics.hpp"
#include "text_util.hpp"

namespace protoeval::llameval {
namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

/// First standalone integer with value 1..5 in text[from..].
std::optional<int> first_score(std::string_view text, std::size_t from) {
  std::size_t i = from;
  while (i < text.size()) {
    if (!is_digit(text[i])) {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < text.size() && is_digit(text[i])) ++i;
    bool decimal_before = start >= 2 && text[start - 1] == '.' && is_digit(text[start - 2]);
    bool decimal_after = i + 1 < text.size() && (text[i] == '.' || text[i] == ',') && is_digit(text[i + 1]);
    bool word_before = start >= 1 && std::isalpha(static_cast<unsigned char>(text[start - 1]));
    bool word_after = i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]));
    if (i - start == 1 && !decimal_before && !decimal_after && !word_before && !word_after) {
      int v = text[start] - '0';
      if (v >= 1 && v <= 5) return v;
    }
  }
  return std::nullopt;
}

std::optional<int> digit_token(std::string_view token) {
  auto t = detail::trim(token);
  if (t.size() == 1 && t[0] >= '1' && t[0] <= '5') return t[0] - '0';
  return std::nullopt;
}

}  // namespace

std::string_view to_string(JudgeMode mode) noexcept {
  switch (mode) {
    case JudgeMode::logprob:
      return "logprob";
    case JudgeMode::sampling:
      return "sampling";
    case JudgeMode::automatic:
      break;
  }
  return "auto";
}

JudgeMode judge_mode_from_string(std::string_view text) {
  if (text == "auto") return JudgeMode::automatic;
  if (text == "logprob") return JudgeMode::logprob;
  if (text == "sampling") return JudgeMode::sampling;
  throw ConfigError(fmt::format("unknown judge mode '{}'", text));
}

void JudgeConfig::validate() const {
  if (!provider) throw ConfigError("judge has no provider");
  if (max_semantic_retries < 5 || max_semantic_retries > 10) {
    throw ConfigError(fmt::format("max_semantic_retries must lie in 5..10, got {}", max_semantic_retries));
  }
  if (n_samples < 1) throw ConfigError("judge n_samples must be at least 1");
  if (logprob_samples < 1) throw ConfigError("judge logprob_samples must be at least 1");
  if (max_tokens < 1) throw ConfigError("judge max_tokens must be positive");
  if (mode == JudgeMode::logprob && !provider->config().supports_logprobs) {
    throw ConfigError(fmt::format("judge {} does not support logprobs", provider->config().name));
  }
}

ScoreMode JudgeConfig::effective_mode() const {
  if (mode == JudgeMode::sampling) return ScoreMode::sampling;
  if (mode == JudgeMode::logprob) return ScoreMode::logprob;
  return provider && provider->config().supports_logprobs ? ScoreMode::logprob : ScoreMode::sampling;
}

std::optional<int> parse_score_response(std::string_view text, std::string_view criterion) {
  std::string lower = detail::ascii_lower(text);
  std::string label = "- " + detail::ascii_lower(criterion) + ":";
  auto pos = lower.find(label);
  if (pos != std::string::npos) {
    if (auto s = first_score(text, pos + label.size())) return s;
  }
  return first_score(text, 0);
}

ScoreDistribution distribution_from_samples(const std::vector<int>& scores) {
  if (scores.empty()) throw Error("no parsed scores to estimate a distribution from");
  ScoreDistribution d;
  d.mode = ScoreMode::sampling;
  std::array<std::size_t, 5> counts{};
  for (int s : scores) {
    if (s < 1 || s > 5) throw Error(fmt::format("score {} outside 1..5", s));
    ++counts[static_cast<std::size_t>(s - 1)];
  }
  for (std::size_t i = 0; i < 5; ++i) d.probs[i] = static_cast<double>(counts[i]) / static_cast<double>(scores.size());
  d.n_observations = scores.size();
  return d;
}

std::optional<ScoreDistribution> distribution_from_logprobs(const std::vector<providers::TokenLogprob>& tokens) {
  for (const auto& t : tokens) {
    auto chosen = digit_token(t.token);
    if (!chosen) continue;
    std::array<double, 5> mass{};
    bool any = false;
    for (const auto& [alt, lp] : t.alternatives) {
      if (auto s = digit_token(alt)) {
        // Alternatives may repeat a digit with different whitespace.
        mass[static_cast<std::size_t>(*s - 1)] += std::exp(lp);
        any = true;
      }
    }
    if (!any) mass[static_cast<std::size_t>(*chosen - 1)] = 1.0;
    double total = 0.0;
    for (double m : mass) total += m;
    if (!(total > 0.0)) return std::nullopt;
    ScoreDistribution d;
    d.mode = ScoreMode::logprob;
    for (std::size_t i = 0; i < 5; ++i) d.probs[i] = mass[i] / total;
    d.n_observations = 1;
    return d;
  }
  return std::nullopt;
}

ScoreDistribution average_distributions(const std::vector<ScoreDistribution>& dists) {
  if (dists.empty()) throw Error("no distributions to average");
  ScoreDistribution out;
  out.mode = dists.front().mode;
  for (const auto& d : dists) {
    for (std::size_t i = 0; i < 5; ++i) out.probs[i] += d.probs[i];
    out.n_observations += d.n_observations;
  }
  for (double& p : out.probs) p /= static_cast<double>(dists.size());
  return out;
}

CriterionResult evaluate_criterion(const JudgeConfig& judge, const prompts::CriterionDef& criterion,
                                   std::string_view baseline, std::string_view target) {
  judge.validate();
  const ScoreMode mode = judge.effective_mode();
  providers::ChatRequest req;
  req.messages = prompts::build_eval_prompt(criterion, baseline, target, judge.templates);
  if (!judge.provider->config().supports_system_role) req.messages = merge_system_into_user(req.messages);
  req.temperature = judge.temperature;
  req.max_tokens = judge.max_tokens;
  req.n_samples = mode == ScoreMode::sampling ? judge.n_samples : judge.logprob_samples;
  req.want_logprobs = mode == ScoreMode::logprob;

  CriterionResult result;
  result.criterion = criterion.name;
  for (int attempt = 1; attempt <= judge.max_semantic_retries; ++attempt) {
    // Same prompt each attempt; only the sampling seed moves on.
    if (judge.seed) req.seed = *judge.seed + attempt - 1;
    providers::ChatResponse resp;
    try {
      resp = providers::chat_complete(*judge.provider, req);
    } catch (const AuthError&) {
      throw;
    } catch (const ProviderError& e) {
      throw EvaluationError(fmt::format("{}: judge request failed: {}", criterion.name, e.what()),
                            result.raw_responses);
    }
    for (auto& n : resp.notices) result.notices.push_back(std::move(n));
    result.attempts_used = attempt;

    std::vector<int> parsed;
    std::vector<ScoreDistribution> from_logprobs;
    for (const auto& s : resp.samples) {
      result.raw_responses.push_back(s.text);
      auto score = parse_score_response(s.text, criterion.name);
      if (!score) continue;
      parsed.push_back(*score);
      if (mode == ScoreMode::logprob && s.logprobs) {
        if (auto d = distribution_from_logprobs(*s.logprobs)) from_logprobs.push_back(*d);
      }
    }
    if (parsed.empty()) continue;

    if (mode == ScoreMode::logprob && !from_logprobs.empty()) {
      result.distribution = average_distributions(from_logprobs);
    } else {
      if (mode == ScoreMode::logprob) {
        result.notices.push_back("no score token logprobs in the response; used sample frequencies");
      }
      result.distribution = distribution_from_samples(parsed);
    }
    result.score = metrics::weighted_score(result.distribution);
    return result;
  }
  throw EvaluationError(fmt::format("{}: no score in {} attempts", criterion.name, judge.max_semantic_retries),
                        result.raw_responses);
}

std::vector<CriterionOutcome> evaluate_all(const JudgeConfig& judge, const std::vector<prompts::CriterionDef>& criteria,
                                           std::string_view baseline, std::string_view target) {
  std::vector<CriterionOutcome> out;
  out.reserve(criteria.size());
  for (const auto& c : criteria) {
    CriterionOutcome o;
    o.criterion = c.name;
    try {
      o.result = evaluate_criterion(judge, c, baseline, target);
      o.raw_responses = o.result->raw_responses;
    } catch (const EvaluationError& e) {
      o.error = e.what();
      o.raw_responses = e.raw_responses();
    }
    out.push_back(std::move(o));
  }
  return out;
}

nlohmann::json to_json(const ScoreDistribution& dist) {
  nlohmann::json probs = nlohmann::json::object();
  for (std::size_t i = 0; i < 5; ++i) probs[std::to_string(i + 1)] = dist.probs[i];
  return {{"probs", probs}, {"mode", std::string(to_string(dist.mode))}, {"n_observations", dist.n_observations}};
}

ScoreDistribution distribution_from_json(const nlohmann::json& j) {
  ScoreDistribution d;
  for (std::size_t i = 0; i < 5; ++i) d.probs[i] = j.at("probs").at(std::to_string(i + 1)).get<double>();
  d.mode = j.at("mode").get<std::string>() == "logprob" ? ScoreMode::logprob : ScoreMode::sampling;
  d.n_observations = j.at("n_observations").get<std::size_t>();
  return d;
}

nlohmann::json to_json(const CriterionResult& r) {
  return {{"criterion", r.criterion},   {"distribution", to_json(r.distribution)},
          {"score", r.score},           {"attempts_used", r.attempts_used},
          {"raw_responses", r.raw_responses}, {"notices", r.notices}};
}

CriterionResult criterion_result_from_json(const nlohmann::json& j) {
  CriterionResult r;
  r.criterion = j.at("criterion").get<std::string>();
  r.distribution = distribution_from_json(j.at("distribution"));
  r.score = j.at("score").get<double>();
  r.attempts_used = j.at("attempts_used").get<int>();
  r.raw_responses = j.at("raw_responses").get<std::vector<std::string>>();
  r.notices = j.value("notices", std::vector<std::string>{});
  return r;
}

}  // namespace protoeval::llameval
