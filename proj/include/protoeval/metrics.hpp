#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "protoeval/providers.hpp"
#include "protoeval/pseudocode.hpp"
#include "protoeval/scores.hpp"

namespace protoeval::metrics {

/// Unit-cost edit distance between two name sequences.
std::size_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// levenshtein / max(|a|, |b|); 0 when both are empty.
double normalized_levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Lowercases, then splits on whitespace.
std::vector<std::string> bleu_tokens(std::string_view text);

/// BLEU-4 with uniform weights and clipped n-gram counts. An order with no
/// matches uses (0 + 1) / (total + 1). The brevity penalty compares against
/// the reference length closest to the candidate's (shorter on ties).
/// An empty candidate scores 0.
double bleu(const std::vector<std::string>& candidate, const std::vector<std::vector<std::string>>& references);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  bool empty_pred = false;
  bool empty_base = false;
};

/// Multiset overlap: |pred ∩ base| / |pred| and / |base|.
PrecisionRecall name_precision_recall(const std::vector<std::string>& pred, const std::vector<std::string>& base);

enum class OverlapMode { names, argument_tokens };

OverlapMode overlap_mode_from_string(std::string_view text);
std::string_view to_string(OverlapMode mode) noexcept;

/// Lowercased whitespace tokens of every argument, `kw=` prefixed for keyword
/// arguments, in call order.
std::vector<std::string> argument_tokens(const pseudocode::PseudocodeDoc& doc);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

struct EmbeddingScore {
  double score = 0.0;
  std::size_t n_aligned_pairs = 0;
  std::vector<std::string> warnings;
};

/// Mean cosine over pairs aligned by index, truncated to the shorter list.
/// A pair with a zero vector contributes 0 and a warning. Throws Error("no
/// aligned pairs") when either list is empty.
EmbeddingScore embedding_similarity_score(const std::vector<std::string>& pred_steps,
                                          const std::vector<std::string>& base_steps,
                                          providers::EmbeddingProvider& embedder);

/// Σ s·p(s). Throws Error when the probabilities are negative or do not sum
/// to 1 within 1e-6.
double weighted_score(const ScoreDistribution& dist);

struct MetricReport {
  double levenshtein_norm = 0.0;
  double bleu = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double embed_score = 0.0;
  std::size_t n_aligned_pairs = 0;
  std::vector<std::string> warnings;
};

/// Rendered call lines, the text unit for BLEU and embeddings.
std::vector<std::string> call_lines(const pseudocode::PseudocodeDoc& doc);

/// All metrics of a prediction against a baseline; embedder may be null, in
/// which case embed_score stays 0 with a warning. No aligned pairs also
/// leaves it at 0 with a warning.
MetricReport compute_metrics(const pseudocode::PseudocodeDoc& pred, const pseudocode::PseudocodeDoc& base,
                             providers::EmbeddingProvider* embedder, OverlapMode mode = OverlapMode::names);

}  // namespace protoeval::metrics
