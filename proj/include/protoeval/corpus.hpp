#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "protoeval/tokenizer.hpp"

namespace protoeval::corpus {

/// One protocol entry as found on disk. Keys other than the recognized ones
/// (id, title, description / description_text, steps, version_id / version)
/// are kept verbatim in `extra` and written back on save.
struct RawProtocolRecord {
  std::int64_t id = 0;
  std::string title;
  std::string description;
  std::vector<std::string> steps;
  std::optional<std::int64_t> version;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const RawProtocolRecord&) const = default;
};

struct Protocol {
  std::int64_t id = 0;
  std::string title;
  std::string description;
  std::vector<std::string> steps;
  int keyword_score = 0;

  bool operator==(const Protocol&) const = default;
};

struct LoadResult {
  std::vector<RawProtocolRecord> records;
  /// One line per dropped duplicate, e.g. "duplicate id 7: kept version 2, dropped version 1".
  std::vector<std::string> notices;
};

/// Parses one document: a JSON array of entries, a single entry object, or
/// JSON Lines. Throws IngestError naming the offending entry index.
LoadResult load_records(std::istream& in);
LoadResult load_records(std::string_view text);

/// Loads a single file, or every *.json / *.jsonl file of a directory in
/// lexicographic path order, then deduplicates across the whole batch.
LoadResult load_records(const std::filesystem::path& source);

/// Writes one canonical JSON object per line.
void save_records(std::ostream& out, const std::vector<RawProtocolRecord>& records);
void save_records(const std::filesystem::path& file, const std::vector<RawProtocolRecord>& records);

nlohmann::json record_to_json(const RawProtocolRecord& record);
RawProtocolRecord record_from_json(const nlohmann::json& entry, long entry_index);

/// Among records sharing an id the highest version wins; equal (or absent)
/// versions resolve to the later one. Output keeps first-appearance order.
LoadResult deduplicate(std::vector<RawProtocolRecord> records);

/// The 75 biology keywords used for protocol scoring.
const std::vector<std::string>& default_keywords();

struct CurationConfig {
  std::vector<std::string> keywords = default_keywords();
  int min_score = 1;
  int max_score = 5;
  std::size_t min_steps = 3;

  /// Throws ConfigError when min_score > max_score, min_steps < 1, or no keywords.
  void validate() const;
};

/// Number of distinct keywords (compared lowercased) occurring as substrings
/// of the lowercased description.
int keyword_score(std::string_view description, const std::vector<std::string>& keywords);

struct Exclusion {
  std::int64_t id = 0;
  /// Machine-readable reasons: "steps<3", "score<1", "score>5" (thresholds from config).
  std::vector<std::string> reasons;
  std::size_t steps = 0;
  int score = 0;
};

struct CurationResult {
  std::vector<Protocol> protocols;
  std::vector<Exclusion> exclusions;
};

CurationResult curate(const std::vector<RawProtocolRecord>& records, const CurationConfig& cfg);

RawProtocolRecord to_record(const Protocol& protocol);

/// Lifts records to protocols without filtering (for statistics over a
/// corpus that was curated elsewhere).
std::vector<Protocol> as_protocols(const std::vector<RawProtocolRecord>& records,
                                   const std::vector<std::string>& keywords);

/// title + "\n\n" + description + "\n\n" + steps joined by "\n\n".
std::string concatenated_text(const Protocol& protocol);

std::size_t count_tokens(const Protocol& protocol, const Tokenizer& tokenizer);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;

  bool operator==(const MeanStd&) const = default;
};

/// Population mean and standard deviation. Empty input yields {0, 0}.
MeanStd mean_std(const std::vector<double>& values);

struct CorpusStats {
  std::size_t n_protocols = 0;
  MeanStd tokens_per_protocol;
  MeanStd steps_per_protocol;
  MeanStd tokens_per_step;
  MeanStd tokens_per_description;
};

/// Throws Error("empty corpus") for an empty input. Tokens per step pools
/// every step of every protocol.
CorpusStats compute_stats(const std::vector<Protocol>& corpus, const Tokenizer& tokenizer);

nlohmann::json stats_to_json(const CorpusStats& stats);
std::string render_stats_table(const CorpusStats& stats);

}  // namespace protoeval::corpus
