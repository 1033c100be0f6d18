#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "protoeval/corpus.hpp"
#include "protoeval/error.hpp"
#include "test_support.hpp"

using namespace protoeval;
using namespace protoeval::corpus;
using protoeval::testing::fixture;
using protoeval::testing::read_file;
using protoeval::testing::TempDir;

namespace {

// Independent of the library: split on ASCII whitespace by hand.
std::size_t oracle_token_count(const std::string& s) {
  std::size_t n = 0;
  bool in = false;
  for (char c : s) {
    bool ws = c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
    if (!ws && !in) ++n;
    in = !ws;
  }
  return n;
}

int oracle_keyword_score(const std::string& description, const std::vector<std::string>& keywords) {
  auto lower = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  const std::string hay = lower(description);
  std::set<std::string> hits;
  for (const auto& k : keywords) {
    const std::string needle = lower(k);
    for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
      if (hay.compare(i, needle.size(), needle) == 0) {
        hits.insert(needle);
        break;
      }
    }
  }
  return static_cast<int>(hits.size());
}

}  // namespace

TEST(LoadRecords, EntryWithoutStepsGetsEmptySteps) {
  auto r = load_records(std::string_view(R"([
    {"id": 1, "title": "a", "description": "d", "steps": ["x"]},
    {"id": 2, "title": "b", "description": "d"},
    {"id": 3, "title": "c", "description": "d", "steps": []}
  ])"));
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_TRUE(r.records[1].steps.empty());
  EXPECT_TRUE(r.notices.empty());
}

TEST(LoadRecords, LatestVersionWins) {
  auto r = load_records(std::string_view(R"([
    {"id": 7, "title": "old", "steps": ["a"], "version_id": 1},
    {"id": 7, "title": "new", "steps": ["a"], "version_id": 2}
  ])"));
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].title, "new");
  EXPECT_EQ(r.records[0].version, 2);
  ASSERT_EQ(r.notices.size(), 1u);
  EXPECT_NE(r.notices[0].find("7"), std::string::npos);
}

TEST(LoadRecords, HigherVersionWinsEvenWhenFirst) {
  auto r = load_records(std::string_view(R"([
    {"id": 7, "title": "new", "version_id": 3},
    {"id": 7, "title": "old", "version_id": 1}
  ])"));
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].title, "new");
}

TEST(LoadRecords, EmptyDocumentIsEmpty) {
  EXPECT_TRUE(load_records(std::string_view("")).records.empty());
  EXPECT_TRUE(load_records(std::string_view("  \n")).records.empty());
  EXPECT_TRUE(load_records(std::string_view("[]")).records.empty());
}

TEST(LoadRecords, JsonLinesAndSingleObject) {
  auto lines = load_records(std::string_view("{\"id\": 1, \"title\": \"a\"}\n{\"id\": 2, \"title\": \"b\"}\n"));
  EXPECT_EQ(lines.records.size(), 2u);
  auto single = load_records(std::string_view("{\"id\": 5, \"title\": \"a\"}"));
  ASSERT_EQ(single.records.size(), 1u);
  EXPECT_EQ(single.records[0].id, 5);
}

TEST(LoadRecords, DescriptionTextAlias) {
  auto r = load_records(std::string_view(R"([{"id": 1, "description_text": "hello"}])"));
  EXPECT_EQ(r.records.at(0).description, "hello");
}

TEST(LoadRecords, BadEntryNamesIndex) {
  try {
    load_records(std::string_view(R"([{"id": 1}, {"title": "no id"}])"));
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_EQ(e.entry_index(), 1);
  }
  try {
    load_records(std::string_view("{not json"));
    FAIL() << "expected IngestError";
  } catch (const IngestError&) {
  }
  try {
    load_records(std::string_view(R"([{"id": 1, "steps": "not a list"}])"));
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_EQ(e.entry_index(), 0);
  }
}

TEST(LoadRecords, DirectoryDedupesAcrossFiles) {
  auto r = load_records(fixture("raw"));
  ASSERT_EQ(r.records.size(), 3u);
  // 301 updated to version 2 in the second file; 303 re-sent without version.
  auto find = [&](std::int64_t id) {
    return *std::find_if(r.records.begin(), r.records.end(), [&](const auto& x) { return x.id == id; });
  };
  EXPECT_EQ(find(301).title, "Colony PCR (revised)");
  EXPECT_EQ(find(301).steps.size(), 4u);
  EXPECT_EQ(find(303).description, "Long-term storage of bacteria in glycerol.");
  EXPECT_EQ(r.notices.size(), 2u);
}

TEST(LoadRecords, MissingPathThrows) {
  EXPECT_THROW(load_records(std::filesystem::path("/nonexistent/protocols.json")), IngestError);
}

TEST(SaveRecords, ExtraRoundTrips) {
  auto r = load_records(std::string_view(
      R"([{"id": 9, "title": "t", "description": "d", "steps": ["a", "b"], "version_id": 4,
           "authors": ["X", "Y"], "doi": "10.1/abc", "nested": {"k": [1, 2]}}])"));
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].extra.size(), 3u);
  std::ostringstream out;
  save_records(out, r.records);
  auto again = load_records(std::string_view(out.str()));
  ASSERT_EQ(again.records.size(), 1u);
  EXPECT_EQ(again.records[0], r.records[0]);

  TempDir tmp;
  save_records(tmp.path() / "x.jsonl", r.records);
  EXPECT_EQ(load_records(tmp.path() / "x.jsonl").records, r.records);
}

TEST(KeywordScore, Examples) {
  EXPECT_EQ(keyword_score("We run PCR on dna samples", {"PCR", "DNA", "Ethanol"}), 2);
  EXPECT_EQ(keyword_score("", default_keywords()), 0);
  EXPECT_EQ(keyword_score("", {"PCR"}), 0);
}

TEST(KeywordScore, DefaultListHasSeventyFive) { EXPECT_EQ(default_keywords().size(), 75u); }

TEST(KeywordScore, MatchesBruteForceOracle) {
  auto r = load_records(fixture("corpus"));
  for (const auto& rec : r.records) {
    EXPECT_EQ(keyword_score(rec.description, default_keywords()),
              oracle_keyword_score(rec.description, default_keywords()))
        << rec.id;
  }
  auto batch = load_records(fixture("curation/batch.jsonl"));
  for (const auto& rec : batch.records) {
    EXPECT_EQ(keyword_score(rec.description, default_keywords()),
              oracle_keyword_score(rec.description, default_keywords()))
        << rec.id;
  }
}

TEST(Curate, Examples) {
  CurationConfig cfg;
  cfg.keywords = {"alpha", "beta", "gamma"};
  std::vector<RawProtocolRecord> recs = {
      {1, "two steps", "alpha beta gamma", {"a", "b"}, std::nullopt, nlohmann::json::object()},
      {2, "no score", "nothing here", {"a", "b", "c", "d", "e"}, std::nullopt, nlohmann::json::object()},
      {3, "ok", "alpha beta gamma", {"a", "b", "c", "d", "e"}, std::nullopt, nlohmann::json::object()},
  };
  auto res = curate(recs, cfg);
  ASSERT_EQ(res.protocols.size(), 1u);
  EXPECT_EQ(res.protocols[0].id, 3);
  EXPECT_EQ(res.protocols[0].keyword_score, 3);
  ASSERT_EQ(res.exclusions.size(), 2u);
  EXPECT_EQ(res.exclusions[0].reasons, std::vector<std::string>{"steps<3"});
  EXPECT_EQ(res.exclusions[1].reasons, std::vector<std::string>{"score<1"});
}

TEST(Curate, InvalidConfig) {
  CurationConfig cfg;
  cfg.min_score = 4;
  cfg.max_score = 2;
  EXPECT_THROW(curate({}, cfg), ConfigError);
  CurationConfig empty;
  empty.keywords.clear();
  EXPECT_THROW(empty.validate(), ConfigError);
}

TEST(CountTokens, ConcatenationRule) {
  WhitespaceTokenizer tok;
  Protocol p{1, "A", "B", {"C"}, 0};
  EXPECT_EQ(concatenated_text(p), "A\n\nB\n\nC");
  EXPECT_EQ(count_tokens(p, tok), 3u);
  Protocol q{1, "A", "", {"C"}, 0};
  EXPECT_EQ(concatenated_text(q), "A\n\n\n\nC");
  EXPECT_EQ(count_tokens(q, tok), 2u);
}

TEST(CountTokens, MatchesOracleOnFixture) {
  WhitespaceTokenizer tok;
  for (const auto& p : protoeval::testing::fixture_corpus()) {
    EXPECT_EQ(count_tokens(p, tok), oracle_token_count(concatenated_text(p))) << p.id;
  }
}

TEST(MeanStd, Examples) {
  auto two = mean_std({10, 20});
  EXPECT_DOUBLE_EQ(two.mean, 15.0);
  EXPECT_DOUBLE_EQ(two.stddev, 5.0);
  EXPECT_DOUBLE_EQ(mean_std({7}).stddev, 0.0);
  EXPECT_EQ(mean_std({}), (MeanStd{0, 0}));
}

TEST(ComputeStats, MatchesDirectSummation) {
  auto loaded = load_records(fixture("stats"));
  auto protocols = as_protocols(loaded.records, default_keywords());
  ASSERT_EQ(protocols.size(), 5u);
  WhitespaceTokenizer tok;
  auto stats = compute_stats(protocols, tok);

  // Direct summation over hand-split tokens.
  auto ms = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    double m = s / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair{m, std::sqrt(ss / static_cast<double>(v.size()))};
  };
  std::vector<double> per_protocol, steps, per_step, per_desc;
  for (const auto& p : protocols) {
    std::string text = p.title + "\n\n" + p.description;
    for (const auto& s : p.steps) text += "\n\n" + s;
    per_protocol.push_back(static_cast<double>(oracle_token_count(text)));
    steps.push_back(static_cast<double>(p.steps.size()));
    for (const auto& s : p.steps) per_step.push_back(static_cast<double>(oracle_token_count(s)));
    per_desc.push_back(static_cast<double>(oracle_token_count(p.description)));
  }
  EXPECT_EQ(stats.n_protocols, 5u);
  EXPECT_NEAR(stats.tokens_per_protocol.mean, ms(per_protocol).first, 1e-12);
  EXPECT_NEAR(stats.tokens_per_protocol.stddev, ms(per_protocol).second, 1e-12);
  EXPECT_NEAR(stats.steps_per_protocol.mean, ms(steps).first, 1e-12);
  EXPECT_NEAR(stats.steps_per_protocol.stddev, ms(steps).second, 1e-12);
  EXPECT_NEAR(stats.tokens_per_step.mean, ms(per_step).first, 1e-12);
  EXPECT_NEAR(stats.tokens_per_step.stddev, ms(per_step).second, 1e-12);
  EXPECT_NEAR(stats.tokens_per_description.mean, ms(per_desc).first, 1e-12);
  EXPECT_NEAR(stats.tokens_per_description.stddev, ms(per_desc).second, 1e-12);

  auto table = render_stats_table(stats);
  EXPECT_NE(table.find("# of protocols"), std::string::npos);
  EXPECT_EQ(stats_to_json(stats)["n_protocols"], 5);
}

TEST(ComputeStats, EmptyCorpusThrows) {
  WhitespaceTokenizer tok;
  EXPECT_THROW(compute_stats({}, tok), Error);
}

TEST(Tokenizer, UnicodeWhitespace) {
  WhitespaceTokenizer tok;
  EXPECT_EQ(tok.count(""), 0u);
  EXPECT_EQ(tok.count("  a  b\tc\n"), 3u);
  // U+00A0 no-break space and U+3000 ideographic space separate tokens.
  EXPECT_EQ(tok.count("a\xC2\xA0"
                      "b\xE3\x80\x80"
                      "c"),
            3u);
  // Invalid UTF-8 counts as a token character.
  EXPECT_EQ(tok.count("\xFF\xFE x"), 2u);
  EXPECT_TRUE(is_unicode_whitespace(0x2028));
  EXPECT_FALSE(is_unicode_whitespace(U'x'));
}

TEST(Curate, TwentyRecordBatchMatchesLabels) {
  auto loaded = load_records(fixture("curation/batch.jsonl"));
  const auto expected = nlohmann::json::parse(read_file(fixture("curation/expected.json")));
  ASSERT_EQ(loaded.records.size(), expected.size());
  auto result = curate(loaded.records, CurationConfig{});
  std::map<std::int64_t, const Exclusion*> excluded;
  for (const auto& e : result.exclusions) excluded[e.id] = &e;
  std::set<std::int64_t> kept;
  for (const auto& p : result.protocols) kept.insert(p.id);
  for (const auto& want : expected) {
    const auto id = want["id"].get<std::int64_t>();
    SCOPED_TRACE(id);
    EXPECT_EQ(kept.count(id) == 1, want["kept"].get<bool>());
    if (want["kept"].get<bool>()) continue;
    ASSERT_TRUE(excluded.count(id));
    EXPECT_EQ(excluded[id]->reasons, want["reasons"].get<std::vector<std::string>>());
    EXPECT_EQ(excluded[id]->score, want["score"].get<int>());
    EXPECT_EQ(excluded[id]->steps, want["steps"].get<std::size_t>());
  }
  for (const auto& p : result.protocols) {
    for (const auto& want : expected) {
      if (want["id"] == p.id) {
        EXPECT_EQ(p.keyword_score, want["score"].get<int>());
      }
    }
  }
  EXPECT_EQ(result.protocols.size(), 10u);
}
