#include "protoeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "protoeval/error.hpp"
#include "text_util.hpp"

namespace protoeval {

std::string_view to_string(ScoreMode mode) noexcept {
  return mode == ScoreMode::logprob ? "logprob" : "sampling";
}

}  // namespace protoeval

namespace protoeval::metrics {

std::size_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double normalized_levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

std::vector<std::string> bleu_tokens(std::string_view text) {
  return detail::split_whitespace(detail::ascii_lower(text));
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<Ngram, std::size_t> out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

}  // namespace

double bleu(const std::vector<std::string>& candidate, const std::vector<std::vector<std::string>>& references) {
  if (candidate.empty() || references.empty()) return 0.0;
  constexpr std::size_t kMaxOrder = 4;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    auto cand = ngram_counts(candidate, n);
    std::map<Ngram, std::size_t> max_ref;
    for (const auto& ref : references) {
      for (const auto& [g, c] : ngram_counts(ref, n)) max_ref[g] = std::max(max_ref[g], c);
    }
    std::size_t matched = 0, total = 0;
    for (const auto& [g, c] : cand) {
      total += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) matched += std::min(c, it->second);
    }
    double p = matched == 0 ? 1.0 / static_cast<double>(total + 1)
                            : static_cast<double>(matched) / static_cast<double>(total);
    log_sum += std::log(p) / static_cast<double>(kMaxOrder);
  }

  const double c = static_cast<double>(candidate.size());
  double r = 0.0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (const auto& ref : references) {
    double len = static_cast<double>(ref.size());
    double gap = std::abs(len - c);
    if (gap < best_gap || (gap == best_gap && len < r)) {
      best_gap = gap;
      r = len;
    }
  }
  double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

PrecisionRecall name_precision_recall(const std::vector<std::string>& pred, const std::vector<std::string>& base) {
  PrecisionRecall out;
  out.empty_pred = pred.empty();
  out.empty_base = base.empty();
  std::map<std::string, std::size_t> base_counts;
  for (const auto& b : base) ++base_counts[b];
  std::size_t overlap = 0;
  for (const auto& p : pred) {
    auto it = base_counts.find(p);
    if (it != base_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (!pred.empty()) out.precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
  if (!base.empty()) out.recall = static_cast<double>(overlap) / static_cast<double>(base.size());
  return out;
}

OverlapMode overlap_mode_from_string(std::string_view text) {
  if (text == "names") return OverlapMode::names;
  if (text == "argument_tokens") return OverlapMode::argument_tokens;
  throw ConfigError(fmt::format("unknown precision/recall mode '{}'", text));
}

std::string_view to_string(OverlapMode mode) noexcept {
  return mode == OverlapMode::names ? "names" : "argument_tokens";
}

std::vector<std::string> argument_tokens(const pseudocode::PseudocodeDoc& doc) {
  std::vector<std::string> out;
  for (const auto& call : doc.calls) {
    for (const auto& arg : call.args) {
      auto words = detail::split_whitespace(detail::ascii_lower(arg.value));
      if (arg.keyword) {
        if (words.empty()) words.emplace_back();
        words.front() = *arg.keyword + "=" + words.front();
      }
      for (auto& w : words) out.push_back(std::move(w));
    }
  }
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("cosine of vectors with different dimensions");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

EmbeddingScore embedding_similarity_score(const std::vector<std::string>& pred_steps,
                                          const std::vector<std::string>& base_steps,
                                          providers::EmbeddingProvider& embedder) {
  std::size_t n = std::min(pred_steps.size(), base_steps.size());
  if (n == 0) throw Error("no aligned pairs");
  std::vector<std::string> texts;
  texts.reserve(2 * n);
  texts.insert(texts.end(), pred_steps.begin(), pred_steps.begin() + static_cast<std::ptrdiff_t>(n));
  texts.insert(texts.end(), base_steps.begin(), base_steps.begin() + static_cast<std::ptrdiff_t>(n));
  auto vectors = providers::embed(embedder, texts);

  EmbeddingScore out;
  out.n_aligned_pairs = n;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = vectors[i];
    const auto& b = vectors[n + i];
    bool zero_a = std::all_of(a.begin(), a.end(), [](double x) { return x == 0.0; });
    bool zero_b = std::all_of(b.begin(), b.end(), [](double x) { return x == 0.0; });
    if (zero_a || zero_b) {
      out.warnings.push_back(fmt::format("pair {}: zero-norm embedding counted as 0", i));
      continue;
    }
    sum += cosine(a, b);
  }
  out.score = sum / static_cast<double>(n);
  return out;
}

double weighted_score(const ScoreDistribution& dist) {
  double total = 0.0, expect = 0.0;
  for (std::size_t i = 0; i < dist.probs.size(); ++i) {
    double p = dist.probs[i];
    if (!(p >= 0.0)) throw Error(fmt::format("negative probability for score {}", i + 1));
    total += p;
    expect += static_cast<double>(i + 1) * p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw Error(fmt::format("score probabilities sum to {}, not 1", total));
  return std::clamp(expect, 1.0, 5.0);
}

std::vector<std::string> call_lines(const pseudocode::PseudocodeDoc& doc) {
  std::vector<std::string> out;
  out.reserve(doc.calls.size());
  for (const auto& c : doc.calls) out.push_back(pseudocode::render_call(c));
  return out;
}

MetricReport compute_metrics(const pseudocode::PseudocodeDoc& pred, const pseudocode::PseudocodeDoc& base,
                             providers::EmbeddingProvider* embedder, OverlapMode mode) {
  MetricReport r;
  auto pred_names = pseudocode::extract_call_sequence(pred);
  auto base_names = pseudocode::extract_call_sequence(base);
  r.levenshtein_norm = normalized_levenshtein(pred_names, base_names);

  auto pred_lines = call_lines(pred);
  auto base_lines = call_lines(base);
  r.bleu = bleu(bleu_tokens(detail::join(pred_lines, "\n")), {bleu_tokens(detail::join(base_lines, "\n"))});

  auto pr = mode == OverlapMode::names ? name_precision_recall(pred_names, base_names)
                                       : name_precision_recall(argument_tokens(pred), argument_tokens(base));
  r.precision = pr.precision;
  r.recall = pr.recall;
  if (pr.empty_pred) r.warnings.emplace_back("prediction has nothing to compare; precision set to 0");
  if (pr.empty_base) r.warnings.emplace_back("baseline has nothing to compare; recall set to 0");

  if (!embedder) {
    r.warnings.emplace_back("no embedder configured; embedding score left at 0");
  } else if (pred_lines.empty() || base_lines.empty()) {
    r.warnings.emplace_back("no aligned pairs; embedding score left at 0");
  } else {
    auto e = embedding_similarity_score(pred_lines, base_lines, *embedder);
    r.embed_score = e.score;
    r.n_aligned_pairs = e.n_aligned_pairs;
    for (auto& w : e.warnings) r.warnings.push_back(std::move(w));
  }
  return r;
}

}  // namespace protoeval::metrics
