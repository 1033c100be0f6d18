#include "protoeval/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "protoeval/error.hpp"
#include "text_util.hpp"

namespace protoeval::manifest {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("manifest key '{}': {}", key, e.what()));
  }
}

std::optional<fs::path> opt_path(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) throw ConfigError(fmt::format("manifest key '{}' must be a path string", key));
  return resolve(base, j[key].get<std::string>());
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "corpus",   "max_protocols", "curation", "run_id",   "results_dir", "seed",     "workers",
      "actions",  "templates_dir", "eval_steps_dir", "providers", "targets", "baseline", "judge",
      "tasks",    "n_runs",   "selfself",    "embedder", "metrics"};
  return keys;
}

}  // namespace

json parse_jsonc(std::string_view text, const std::string& origin) {
  try {
    return json::parse(text.begin(), text.end(), nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", origin, e.what()));
  }
}

void apply_override(json& doc, std::string_view assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError(fmt::format("override '{}' is not key=value", assignment));
  }
  std::string key(detail::trim(assignment.substr(0, eq)));
  std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    auto dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(fmt::format("override key '{}' has an empty segment", key));
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError(fmt::format("override key '{}' crosses a non-object", key));
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

fs::path Manifest::run_dir() const { return results_dir / "runs" / run_id; }

const providers::ProviderConfig& Manifest::provider(std::string_view name) const {
  for (const auto& p : providers) {
    if (p.name == name) return p;
  }
  throw ConfigError(fmt::format("unknown provider '{}'", name));
}

Manifest parse_manifest(json doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("manifest must be a JSON object");
  for (const auto& [k, v] : doc.items()) {
    if (!known_keys().count(k)) throw ConfigError(fmt::format("unknown manifest key '{}'", k));
  }
  Manifest m;
  m.base_dir = base_dir;
  m.snapshot = doc;
  m.corpus = opt_path(doc, "corpus", base_dir);
  if (doc.contains("max_protocols") && !doc["max_protocols"].is_null()) {
    auto n = get_or<long long>(doc, "max_protocols", 0);
    if (n < 1) throw ConfigError("max_protocols must be positive");
    m.max_protocols = static_cast<std::size_t>(n);
  }

  if (doc.contains("curation")) {
    const auto& c = doc["curation"];
    m.curation.min_score = get_or(c, "min_score", m.curation.min_score);
    m.curation.max_score = get_or(c, "max_score", m.curation.max_score);
    m.curation.min_steps = get_or<std::size_t>(c, "min_steps", m.curation.min_steps);
    if (c.contains("keywords")) m.curation.keywords = get_or(c, "keywords", m.curation.keywords);
  }
  m.curation.validate();

  m.run_id = get_or<std::string>(doc, "run_id", m.run_id);
  if (m.run_id.empty() || m.run_id != runner::slug(m.run_id)) {
    throw ConfigError(fmt::format("run_id '{}' must use only letters, digits, '.', '-', '_'", m.run_id));
  }
  m.results_dir = resolve(base_dir, get_or<std::string>(doc, "results_dir", "results"));
  m.seed = get_or<std::int64_t>(doc, "seed", m.seed);
  m.workers = get_or(doc, "workers", m.workers);
  if (m.workers < 1) throw ConfigError("workers must be at least 1");
  m.actions = opt_path(doc, "actions", base_dir);
  m.templates_dir = opt_path(doc, "templates_dir", base_dir);
  m.eval_steps_dir = opt_path(doc, "eval_steps_dir", base_dir);

  m.providers = providers::default_provider_configs();
  if (doc.contains("providers")) {
    if (!doc["providers"].is_array()) throw ConfigError("providers must be a list");
    for (const auto& entry : doc["providers"]) {
      if (!entry.is_object() || !entry.contains("name")) throw ConfigError("provider entry needs a name");
      std::string name = entry["name"].get<std::string>();
      auto it = std::find_if(m.providers.begin(), m.providers.end(), [&](const auto& p) { return p.name == name; });
      if (it != m.providers.end()) {
        json merged = it->to_json();
        merged.update(entry);
        *it = providers::ProviderConfig::from_json(merged);
      } else {
        m.providers.push_back(providers::ProviderConfig::from_json(entry));
      }
    }
  }

  m.targets = get_or(doc, "targets", m.targets);
  for (const auto& t : m.targets) m.provider(t);
  if (doc.contains("baseline") && !doc["baseline"].is_null()) {
    m.baseline = get_or<std::string>(doc, "baseline", "");
    m.provider(*m.baseline);
  }

  if (doc.contains("judge")) {
    const auto& j = doc["judge"];
    if (!j.is_object()) throw ConfigError("judge must be an object");
    m.judge.provider = get_or<std::string>(j, "provider", "");
    if (!m.judge.provider.empty()) m.provider(m.judge.provider);
    m.judge.mode = llameval::judge_mode_from_string(get_or<std::string>(j, "mode", "auto"));
    m.judge.n_samples = get_or(j, "n_samples", m.judge.n_samples);
    m.judge.logprob_samples = get_or(j, "logprob_samples", m.judge.logprob_samples);
    m.judge.max_semantic_retries = get_or(j, "max_semantic_retries", m.judge.max_semantic_retries);
    m.judge.temperature = get_or(j, "temperature", m.judge.temperature);
    m.judge.max_tokens = get_or(j, "max_tokens", m.judge.max_tokens);
    if (m.judge.max_semantic_retries < 5 || m.judge.max_semantic_retries > 10) {
      throw ConfigError("judge.max_semantic_retries must lie in 5..10");
    }
    if (m.judge.n_samples < 1) throw ConfigError("judge.n_samples must be at least 1");
  }

  int n_runs = get_or(doc, "n_runs", 5);
  if (n_runs < 1) throw ConfigError("n_runs must be at least 1");
  m.tasks = runner::default_tasks(n_runs);
  if (doc.contains("tasks")) {
    if (!doc["tasks"].is_array() || doc["tasks"].empty()) throw ConfigError("tasks must be a non-empty list");
    m.tasks.clear();
    for (const auto& t : doc["tasks"]) {
      json entry = t;
      if (entry.is_object() && !entry.contains("n_runs")) entry["n_runs"] = n_runs;
      m.tasks.push_back(runner::TaskSpec::from_json(entry));
    }
  }

  if (doc.contains("selfself")) {
    m.selfself_candidates = get_or(doc["selfself"], "candidates", m.selfself_candidates);
    for (const auto& c : m.selfself_candidates) m.provider(c);
  }

  if (doc.contains("embedder")) {
    const auto& e = doc["embedder"];
    m.embedder.kind = get_or<std::string>(e, "kind", m.embedder.kind);
    m.embedder.dim = get_or<std::size_t>(e, "dim", m.embedder.dim);
    m.embedder.endpoint = get_or<std::string>(e, "endpoint", m.embedder.endpoint);
    m.embedder.timeout = std::chrono::milliseconds(get_or<long long>(e, "timeout_ms", m.embedder.timeout.count()));
    if (m.embedder.kind != "hash" && m.embedder.kind != "http" && m.embedder.kind != "none") {
      throw ConfigError(fmt::format("unknown embedder kind '{}'", m.embedder.kind));
    }
    if (m.embedder.kind == "http" && m.embedder.endpoint.empty()) throw ConfigError("http embedder needs an endpoint");
    if (m.embedder.dim == 0) throw ConfigError("embedder dim must be positive");
  }
  if (doc.contains("metrics")) {
    const auto& mt = doc["metrics"];
    m.precision_recall_mode =
        metrics::overlap_mode_from_string(get_or<std::string>(mt, "precision_recall_mode", "names"));
    m.metrics_runs = get_or(mt, "n_runs", m.metrics_runs);
    if (m.metrics_runs < 1) throw ConfigError("metrics.n_runs must be at least 1");
  }
  return m;
}

Manifest load_manifest(const fs::path& file, const std::vector<std::string>& overrides) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("manifest not found: {}", file.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  json doc = parse_jsonc(ss.str(), file.string());
  for (const auto& o : overrides) apply_override(doc, o);
  fs::path base = file.has_parent_path() ? file.parent_path() : fs::path(".");
  return parse_manifest(std::move(doc), base);
}

}  // namespace protoeval::manifest
