#include <array>
#include <cmath>
#include <functional>
#include <map>

#include <gtest/gtest.h>

#include "protoeval/error.hpp"
#include "protoeval/metrics.hpp"
#include "protoeval/mock_provider.hpp"
#include "protoeval/pseudocode.hpp"

using namespace protoeval;
using namespace protoeval::metrics;
using Seq = std::vector<std::string>;

namespace {

std::size_t lev_oracle(const Seq& a, std::size_t i, const Seq& b, std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  if (a[i] == b[j]) return lev_oracle(a, i + 1, b, j + 1);
  return 1 + std::min({lev_oracle(a, i + 1, b, j), lev_oracle(a, i, b, j + 1), lev_oracle(a, i + 1, b, j + 1)});
}

// Maps fixed texts to fixed vectors.
class TableEmbedder final : public providers::EmbeddingProvider {
 public:
  explicit TableEmbedder(std::map<std::string, std::vector<double>> table) : table_(std::move(table)) {}
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) out.push_back(table_.at(t));
    return out;
  }
  std::string name() const override { return "table"; }

 private:
  std::map<std::string, std::vector<double>> table_;
};

}  // namespace

TEST(Levenshtein, Examples) {
  EXPECT_EQ(levenshtein({"Transfer", "Wait"}, {"Transfer", "Wait"}), 0u);
  EXPECT_EQ(levenshtein({}, {"PCR", "Gel"}), 2u);
  EXPECT_EQ(levenshtein({"Transfer", "Wait", "Measure"}, {"Transfer", "Measure"}), 1u);
  EXPECT_EQ(levenshtein({}, {}), 0u);
}

TEST(Levenshtein, AgreesWithRecursionOnSmallSequences) {
  const Seq alphabet = {"A", "B", "C"};
  std::vector<Seq> all = {{}};
  for (std::size_t len = 1; len <= 4; ++len) {
    std::vector<Seq> next;
    for (const auto& s : all) {
      if (s.size() != len - 1) continue;
      for (const auto& c : alphabet) {
        auto t = s;
        t.push_back(c);
        next.push_back(t);
      }
    }
    all.insert(all.end(), next.begin(), next.end());
  }
  for (const auto& a : all) {
    for (const auto& b : all) ASSERT_EQ(levenshtein(a, b), lev_oracle(a, 0, b, 0));
  }
}

TEST(NormalizedLevenshtein, Examples) {
  EXPECT_EQ(normalized_levenshtein({"A"}, {"A"}), 0.0);
  EXPECT_EQ(normalized_levenshtein({}, {"A", "B", "C", "D"}), 1.0);
  EXPECT_DOUBLE_EQ(normalized_levenshtein({"Transfer", "Wait", "Measure"}, {"Transfer", "Measure"}), 1.0 / 3.0);
  EXPECT_EQ(normalized_levenshtein({}, {}), 0.0);
}

TEST(Bleu, Identity) {
  auto c = bleu_tokens("Transfer(a, b) Wait(10)");
  EXPECT_DOUBLE_EQ(bleu(c, {c}), 1.0);
}

TEST(Bleu, HandComputedEightTokens) {
  // p1 = 7/8 (second "the" clipped), p2 = 5/7, p3 = 3/6, p4 = 1/5, BP = 1:
  // (7/8 * 5/7 * 1/2 * 1/5)^(1/4) = (1/16)^(1/4) = 0.5.
  auto cand = bleu_tokens("the cat sat on the mat with hats");
  auto ref = bleu_tokens("The cat sat on a mat with hats");
  ASSERT_EQ(cand.size(), 8u);
  EXPECT_NEAR(bleu(cand, {ref}), 0.5, 1e-12);
}

TEST(Bleu, NoSharedUnigramsUsesSmoothedFloor) {
  // Every order has zero matches: p_n = 1 / (count_n + 1); 4 vs 4 tokens.
  auto cand = bleu_tokens("a b c d");
  auto ref = bleu_tokens("w x y z");
  const double expected = std::exp((std::log(1.0 / 5) + std::log(1.0 / 4) + std::log(1.0 / 3) + std::log(1.0 / 2)) / 4);
  EXPECT_NEAR(bleu(cand, {ref}), expected, 1e-12);
}

TEST(Bleu, BrevityPenaltyClosestReference) {
  auto cand = bleu_tokens("a b c");
  auto r1 = bleu_tokens("a b c d e");
  auto r2 = bleu_tokens("a b c d e f g h");
  double bp = std::exp(1.0 - 5.0 / 3.0);
  // Orders: 3/3, 2/2, 1/1 and no 4-grams -> (0+1)/(0+1).
  EXPECT_NEAR(bleu(cand, {r1, r2}), bp, 1e-12);
  EXPECT_EQ(bleu({}, {r1}), 0.0);
}

TEST(PrecisionRecall, Examples) {
  auto same = name_precision_recall({"Transfer", "Wait"}, {"Transfer", "Wait"});
  EXPECT_EQ(same.precision, 1.0);
  EXPECT_EQ(same.recall, 1.0);
  auto half = name_precision_recall({"Transfer", "Wait"}, {"Transfer", "Measure"});
  EXPECT_EQ(half.precision, 0.5);
  EXPECT_EQ(half.recall, 0.5);
  auto multi = name_precision_recall({"PCR", "PCR"}, {"PCR"});
  EXPECT_EQ(multi.precision, 0.5);
  EXPECT_EQ(multi.recall, 1.0);
  auto empty = name_precision_recall({}, {"PCR"});
  EXPECT_TRUE(empty.empty_pred);
  EXPECT_EQ(empty.precision, 0.0);
  EXPECT_EQ(empty.recall, 0.0);
}

TEST(ArgumentTokens, KeywordPrefix) {
  auto doc = pseudocode::parse_pseudocode("Transfer(Tube A, vol=\"5 mL\")");
  EXPECT_EQ(argument_tokens(doc), (Seq{"tube", "a", "vol=\"5", "ml\""}));
  EXPECT_EQ(overlap_mode_from_string("argument_tokens"), OverlapMode::argument_tokens);
  EXPECT_THROW(overlap_mode_from_string("bogus"), ConfigError);
}

TEST(Cosine, Values) {
  EXPECT_DOUBLE_EQ(cosine({1, 0}, {0, 1}), 0.0);
  EXPECT_NEAR(cosine({1, 0}, {1, 1}), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(cosine({0, 0}, {1, 1}), 0.0);
  EXPECT_EQ(cosine({0.3, 0.7, 1e-3}, {0.3, 0.7, 1e-3}), 1.0);
}

TEST(EmbeddingScore, Examples) {
  providers::HashEmbedder hash;
  Seq steps = {"Transfer(a, b)", "Wait(10 min)"};
  EXPECT_NEAR(embedding_similarity_score(steps, steps, hash).score, 1.0, 1e-12);

  TableEmbedder ortho({{"p", {1, 0}}, {"b", {0, 1}}});
  EXPECT_EQ(embedding_similarity_score({"p"}, {"b"}, ortho).score, 0.0);

  TableEmbedder diag({{"p", {1, 0}}, {"b", {1, 1}}});
  EXPECT_NEAR(embedding_similarity_score({"p"}, {"b"}, diag).score, 0.70711, 1e-5);

  EXPECT_THROW(embedding_similarity_score({}, {"b"}, diag), Error);

  TableEmbedder zero({{"p", {0, 0}}, {"b", {1, 1}}, {"q", {1, 1}}});
  auto z = embedding_similarity_score({"p", "q"}, {"b", "b", "b"}, zero);
  EXPECT_EQ(z.n_aligned_pairs, 2u);
  EXPECT_NEAR(z.score, 0.5, 1e-12);
  EXPECT_FALSE(z.warnings.empty());
}

TEST(WeightedScore, Examples) {
  ScoreDistribution point;
  point.probs = {0, 0, 0, 0, 1};
  EXPECT_EQ(weighted_score(point), 5.0);
  ScoreDistribution uniform;
  uniform.probs = {0.2, 0.2, 0.2, 0.2, 0.2};
  EXPECT_EQ(weighted_score(uniform), 3.0);
  ScoreDistribution mix;
  mix.probs = {0, 0, 0, 0.6, 0.4};
  EXPECT_NEAR(weighted_score(mix), 4.4, 1e-12);
  ScoreDistribution bad;
  bad.probs = {0.5, 0, 0, 0, 0};
  EXPECT_THROW(weighted_score(bad), Error);
  bad.probs = {-0.1, 0.1, 0, 0, 1.0};
  EXPECT_THROW(weighted_score(bad), Error);
}

TEST(ComputeMetrics, IdenticalDocs) {
  auto doc = pseudocode::parse_pseudocode("Transfer(a)\nWait(b)\nMeasure(c)");
  providers::HashEmbedder hash;
  auto m = compute_metrics(doc, doc, &hash);
  EXPECT_EQ(m.levenshtein_norm, 0.0);
  EXPECT_EQ(m.bleu, 1.0);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_NEAR(m.embed_score, 1.0, 1e-12);
  EXPECT_EQ(m.n_aligned_pairs, 3u);
}

TEST(ComputeMetrics, NoEmbedder) {
  auto a = pseudocode::parse_pseudocode("Transfer(a)");
  auto b = pseudocode::parse_pseudocode("Wait(a)");
  auto m = compute_metrics(a, b, nullptr);
  EXPECT_EQ(m.embed_score, 0.0);
  EXPECT_FALSE(m.warnings.empty());
  EXPECT_EQ(m.levenshtein_norm, 1.0);
  EXPECT_EQ(call_lines(a), Seq{"Transfer(a)"});
}
