#include "protoeval/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "protoeval/error.hpp"
#include "text_util.hpp"

namespace protoeval::corpus {

using nlohmann::json;

namespace {

std::int64_t parse_integer_field(const json& value, const char* key, long entry_index) {
  if (value.is_number_integer()) return value.get<std::int64_t>();
  if (value.is_number_unsigned()) return static_cast<std::int64_t>(value.get<std::uint64_t>());
  if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    std::int64_t out = 0;
    std::size_t used = 0;
    try {
      out = std::stoll(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == s.size() && !s.empty()) return out;
  }
  throw IngestError(fmt::format("entry {}: key \"{}\" is not an integer", entry_index, key),
                    entry_index);
}

std::string step_text(const json& step, long entry_index) {
  if (step.is_string()) return step.get<std::string>();
  if (step.is_object()) {
    for (const char* key : {"text", "step", "description", "content"}) {
      auto it = step.find(key);
      if (it != step.end() && it->is_string()) return it->get<std::string>();
    }
    return step.dump();
  }
  if (step.is_null()) return {};
  if (step.is_number() || step.is_boolean()) return step.dump();
  throw IngestError(fmt::format("entry {}: unsupported step value", entry_index), entry_index);
}

std::string text_field(const json& value, const char* key, long entry_index) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_null()) return {};
  throw IngestError(fmt::format("entry {}: key \"{}\" is not text", entry_index, key),
                    entry_index);
}

// Index of the top-level array element containing byte offset `pos`.
long array_entry_at(std::string_view text, std::size_t pos) {
  long index = 0;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < text.size() && i < pos; ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    switch (c) {
      case '"': in_string = true; break;
      case '[': case '{': ++depth; break;
      case ']': case '}': --depth; break;
      case ',':
        if (depth == 1) ++index;
        break;
      default: break;
    }
  }
  return index;
}

std::vector<RawProtocolRecord> parse_entries(const json& doc) {
  std::vector<RawProtocolRecord> out;
  if (doc.is_array()) {
    out.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
      out.push_back(record_from_json(doc[i], static_cast<long>(i)));
    }
  } else if (doc.is_object()) {
    out.push_back(record_from_json(doc, 0));
  } else if (!doc.is_null()) {
    throw IngestError("document is neither an entry object nor an array of entries", -1);
  }
  return out;
}

std::vector<RawProtocolRecord> parse_json_lines(std::string_view text) {
  std::vector<RawProtocolRecord> out;
  long index = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = detail::trim(text.substr(start, end - start));
    if (!line.empty()) {
      json entry;
      try {
        entry = json::parse(line);
      } catch (const json::parse_error& e) {
        throw IngestError(fmt::format("entry {}: malformed JSON line: {}", index, e.what()), index);
      }
      out.push_back(record_from_json(entry, index));
      ++index;
    }
    start = end + 1;
  }
  return out;
}

}  // namespace

RawProtocolRecord record_from_json(const json& entry, long entry_index) {
  if (!entry.is_object()) {
    throw IngestError(fmt::format("entry {}: expected an object", entry_index), entry_index);
  }
  RawProtocolRecord rec;
  bool have_id = false;
  bool have_description = false;
  bool have_version = false;
  for (const auto& [key, value] : entry.items()) {
    if (key == "id") {
      rec.id = parse_integer_field(value, "id", entry_index);
      have_id = true;
    } else if (key == "title") {
      rec.title = text_field(value, "title", entry_index);
    } else if (key == "description") {
      rec.description = text_field(value, "description", entry_index);
      have_description = true;
    } else if (key == "steps") {
      if (value.is_null()) continue;
      if (!value.is_array()) {
        throw IngestError(fmt::format("entry {}: key \"steps\" is not a list", entry_index),
                          entry_index);
      }
      for (const auto& step : value) rec.steps.push_back(step_text(step, entry_index));
    } else if (key == "version_id") {
      if (value.is_null()) {
        rec.extra["version_id"] = value;
      } else {
        rec.version = parse_integer_field(value, "version_id", entry_index);
      }
      have_version = true;
    } else if (key != "description_text" && key != "version") {
      rec.extra[key] = value;
    }
  }
  if (auto it = entry.find("description_text"); it != entry.end()) {
    if (have_description) {
      rec.extra["description_text"] = *it;
    } else {
      rec.description = text_field(*it, "description_text", entry_index);
    }
  }
  if (auto it = entry.find("version"); it != entry.end()) {
    if (have_version) {
      rec.extra["version"] = *it;
    } else if (!it->is_null()) {
      rec.version = parse_integer_field(*it, "version", entry_index);
    }
  }
  if (!have_id) {
    throw IngestError(fmt::format("entry {}: missing \"id\"", entry_index), entry_index);
  }
  return rec;
}

json record_to_json(const RawProtocolRecord& record) {
  json out = record.extra.is_object() ? record.extra : json::object();
  out["id"] = record.id;
  out["title"] = record.title;
  out["description"] = record.description;
  out["steps"] = record.steps;
  if (record.version) out["version_id"] = *record.version;
  return out;
}

LoadResult deduplicate(std::vector<RawProtocolRecord> records) {
  LoadResult result;
  std::unordered_map<std::int64_t, std::size_t> slot_of;
  for (auto& rec : records) {
    auto [it, inserted] = slot_of.try_emplace(rec.id, result.records.size());
    if (inserted) {
      result.records.push_back(std::move(rec));
      continue;
    }
    auto& kept = result.records[it->second];
    const auto old_v = kept.version.value_or(std::numeric_limits<std::int64_t>::min());
    const auto new_v = rec.version.value_or(std::numeric_limits<std::int64_t>::min());
    auto describe = [](const std::optional<std::int64_t>& v) {
      return v ? fmt::format("version {}", *v) : std::string("unversioned entry");
    };
    if (new_v >= old_v) {
      result.notices.push_back(fmt::format("duplicate id {}: kept {}, dropped {}", rec.id,
                                           describe(rec.version), describe(kept.version)));
      kept = std::move(rec);
    } else {
      result.notices.push_back(fmt::format("duplicate id {}: kept {}, dropped {}", rec.id,
                                           describe(kept.version), describe(rec.version)));
    }
  }
  return result;
}

LoadResult load_records(std::string_view text) {
  const auto body = detail::trim(text);
  if (body.empty()) return {};
  json doc;
  bool whole_ok = true;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    whole_ok = false;
    if (body.front() == '[') {
      const long idx = array_entry_at(body, e.byte == 0 ? 0 : e.byte - 1);
      throw IngestError(fmt::format("entry {}: malformed document: {}", idx, e.what()), idx);
    }
  }
  if (whole_ok) return deduplicate(parse_entries(doc));
  return deduplicate(parse_json_lines(body));
}

LoadResult load_records(std::istream& in) {
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_records(std::string_view(buf.str()));
}

LoadResult load_records(const std::filesystem::path& source) {
  namespace fs = std::filesystem;
  auto read_file = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IngestError(fmt::format("cannot open {}", p.string()), -1);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  if (!fs::exists(source)) {
    throw IngestError(fmt::format("corpus source not found: {}", source.string()), -1);
  }
  if (!fs::is_directory(source)) return load_records(std::string_view(read_file(source)));

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(source)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext == ".json" || ext == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RawProtocolRecord> all;
  std::vector<std::string> notices;
  for (const auto& file : files) {
    try {
      auto part = load_records(std::string_view(read_file(file)));
      for (auto& n : part.notices) notices.push_back(file.filename().string() + ": " + n);
      for (auto& r : part.records) all.push_back(std::move(r));
    } catch (const IngestError& e) {
      throw IngestError(fmt::format("{}: {}", file.filename().string(), e.what()), e.entry_index());
    }
  }
  auto merged = deduplicate(std::move(all));
  notices.insert(notices.end(), merged.notices.begin(), merged.notices.end());
  merged.notices = std::move(notices);
  return merged;
}

void save_records(std::ostream& out, const std::vector<RawProtocolRecord>& records) {
  for (const auto& rec : records) out << record_to_json(rec).dump() << '\n';
}

void save_records(const std::filesystem::path& file, const std::vector<RawProtocolRecord>& records) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", file.string()));
  save_records(out, records);
}

const std::vector<std::string>& default_keywords() {
  static const std::vector<std::string> kKeywords = {
      "Biology", "Cell", "DNA", "Protein", "Stem Cell", "Molecular Biology", "Molecular",
      "Gene", "Virus", "E. coli", "cDNA", "Agarose", "Agarose Gel", "in vitro", "PCR", "NGS",
      "Ethanol", "Illumina", "Cell Theory", "Evolution", "Genetics", "Homeostasis",
      "Cell Membrane", "Mitochondria", "Nucleus", "Ribosomes", "DNA Replication", "Mutation",
      "Chromosomes", "Gene Expression", "Natural Selection", "Speciation", "Adaptation",
      "Phylogenetics", "Ecosystems", "Biodiversity", "Conservation", "Bacteria", "Viruses",
      "Fungi", "Pathogens", "Proteins", "Enzymes", "Metabolism", "Photosynthesis",
      "Gel Electrophoresis", "Cloning", "CRISPR-Cas9", "Neurons", "Brain", "Synapses",
      "Neurotransmitters", "Antibodies", "Vaccines", "Immune Response", "Autoimmunity",
      "Embryogenesis", "Stem Cells", "Morphogenesis", "Regeneration", "Pollination",
      "Growth Hormones", "Tropisms", "Coral Reefs", "Oceanic Zones", "Marine Conservation",
      "Aquatic Ecosystems", "Endangered Species", "Habitat Destruction",
      "Conservation Strategies", "Rewilding", "Genetic Engineering", "Bioreactors",
      "Bioinformatics", "Synthetic Biology"};
  return kKeywords;
}

void CurationConfig::validate() const {
  if (min_score > max_score) {
    throw ConfigError(fmt::format("curation: min_score {} exceeds max_score {}", min_score, max_score));
  }
  if (min_steps < 1) throw ConfigError("curation: min_steps must be at least 1");
  if (keywords.empty()) throw ConfigError("curation: keyword list is empty");
}

int keyword_score(std::string_view description, const std::vector<std::string>& keywords) {
  if (description.empty()) return 0;
  const std::string haystack = detail::ascii_lower(description);
  std::set<std::string> seen;
  int score = 0;
  for (const auto& kw : keywords) {
    auto needle = detail::ascii_lower(kw);
    if (needle.empty() || !seen.insert(needle).second) continue;
    if (haystack.find(needle) != std::string::npos) ++score;
  }
  return score;
}

CurationResult curate(const std::vector<RawProtocolRecord>& records, const CurationConfig& cfg) {
  cfg.validate();
  CurationResult result;
  for (const auto& rec : records) {
    const int score = keyword_score(rec.description, cfg.keywords);
    Exclusion ex{rec.id, {}, rec.steps.size(), score};
    if (rec.steps.size() < cfg.min_steps) ex.reasons.push_back(fmt::format("steps<{}", cfg.min_steps));
    if (score < cfg.min_score) ex.reasons.push_back(fmt::format("score<{}", cfg.min_score));
    if (score > cfg.max_score) ex.reasons.push_back(fmt::format("score>{}", cfg.max_score));
    if (ex.reasons.empty()) {
      result.protocols.push_back(Protocol{rec.id, rec.title, rec.description, rec.steps, score});
    } else {
      result.exclusions.push_back(std::move(ex));
    }
  }
  return result;
}

RawProtocolRecord to_record(const Protocol& protocol) {
  RawProtocolRecord rec;
  rec.id = protocol.id;
  rec.title = protocol.title;
  rec.description = protocol.description;
  rec.steps = protocol.steps;
  return rec;
}

std::vector<Protocol> as_protocols(const std::vector<RawProtocolRecord>& records,
                                   const std::vector<std::string>& keywords) {
  std::vector<Protocol> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    out.push_back(Protocol{rec.id, rec.title, rec.description, rec.steps,
                           keyword_score(rec.description, keywords)});
  }
  return out;
}

std::string concatenated_text(const Protocol& protocol) {
  std::string out = protocol.title;
  out += "\n\n";
  out += protocol.description;
  out += "\n\n";
  for (std::size_t i = 0; i < protocol.steps.size(); ++i) {
    if (i) out += "\n\n";
    out += protocol.steps[i];
  }
  return out;
}

std::size_t count_tokens(const Protocol& protocol, const Tokenizer& tokenizer) {
  try {
    return tokenizer.count(concatenated_text(protocol));
  } catch (const std::exception& e) {
    throw Error(fmt::format("tokenizer {} failed on protocol {}: {}", tokenizer.name(),
                            protocol.id, e.what()));
  }
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) return {};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

CorpusStats compute_stats(const std::vector<Protocol>& corpus, const Tokenizer& tokenizer) {
  if (corpus.empty()) throw Error("empty corpus");
  std::vector<double> per_protocol, steps, per_step, per_description;
  for (const auto& p : corpus) {
    per_protocol.push_back(static_cast<double>(count_tokens(p, tokenizer)));
    steps.push_back(static_cast<double>(p.steps.size()));
    per_description.push_back(static_cast<double>(tokenizer.count(p.description)));
    for (const auto& s : p.steps) per_step.push_back(static_cast<double>(tokenizer.count(s)));
  }
  CorpusStats stats;
  stats.n_protocols = corpus.size();
  stats.tokens_per_protocol = mean_std(per_protocol);
  stats.steps_per_protocol = mean_std(steps);
  stats.tokens_per_step = mean_std(per_step);
  stats.tokens_per_description = mean_std(per_description);
  return stats;
}

json stats_to_json(const CorpusStats& stats) {
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.stddev}}; };
  return json{{"n_protocols", stats.n_protocols},
              {"tokens_per_protocol", ms(stats.tokens_per_protocol)},
              {"steps_per_protocol", ms(stats.steps_per_protocol)},
              {"tokens_per_step", ms(stats.tokens_per_step)},
              {"tokens_per_description", ms(stats.tokens_per_description)}};
}

std::string render_stats_table(const CorpusStats& stats) {
  auto cell = [](const MeanStd& m) { return fmt::format("{:.2f} ± {:.2f}", m.mean, m.stddev); };
  std::string out;
  out += "| Statistic | Value (m ± σ) |\n";
  out += "|---|---|\n";
  out += fmt::format("| # of protocols | {} |\n", stats.n_protocols);
  out += fmt::format("| Tokens / protocol | {} |\n", cell(stats.tokens_per_protocol));
  out += fmt::format("| # of steps | {} |\n", cell(stats.steps_per_protocol));
  out += fmt::format("| Tokens / step | {} |\n", cell(stats.tokens_per_step));
  out += fmt::format("| Tokens / description | {} |\n", cell(stats.tokens_per_description));
  return out;
}

}  // namespace protoeval::corpus
