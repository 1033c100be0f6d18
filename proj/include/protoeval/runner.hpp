#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "protoeval/actions.hpp"
#include "protoeval/corpus.hpp"
#include "protoeval/llameval.hpp"
#include "protoeval/metrics.hpp"
#include "protoeval/prompts.hpp"
#include "protoeval/providers.hpp"
#include "protoeval/pseudocode.hpp"

namespace protoeval::runner {

/// One evaluation condition applied to every target model. Ac is
/// actions_in_generation; Pr is baseline_kind == protocol_baseline.
struct TaskSpec {
  std::string name;
  bool actions_in_generation = true;
  prompts::BaselineKind baseline_kind = prompts::BaselineKind::pseudocode_baseline;
  int n_runs = 5;

  bool original_protocol() const { return baseline_kind == prompts::BaselineKind::protocol_baseline; }
  nlohmann::json to_json() const;
  static TaskSpec from_json(const nlohmann::json& j);
};

/// (Ac, no Pr), (no Ac, no Pr), (Ac, Pr).
std::vector<TaskSpec> default_tasks(int n_runs = 5);

struct RunSettings {
  /// runs/<run_id> under the results directory.
  std::filesystem::path run_dir;
  std::int64_t seed = 0;
  int workers = 1;
  /// Recompute even when artifacts exist.
  bool force = false;
  /// Checked between work units; set from a signal handler.
  const std::atomic<bool>* cancel = nullptr;
  providers::NoticeSink log;
};

/// Path-safe form of a model name.
std::string slug(std::string_view name);

struct Generation {
  std::int64_t protocol_id = 0;
  std::string model;
  int run = 0;
  bool with_actions = true;
  std::string raw_text;
  pseudocode::PseudocodeDoc doc;
  std::optional<std::string> error;
};

/// Generations keyed by (model, protocol, run, actions flag), computed at
/// most once per process and persisted under generations/. Existing files
/// are reused unless `force`. Thread-safe.
class GenerationStore {
 public:
  GenerationStore(RunSettings settings, prompts::PromptTemplates templates, actions::ActionRegistry registry);

  std::shared_ptr<const Generation> get(providers::ChatProvider& model, const corpus::Protocol& protocol, int run,
                                        bool with_actions);

  std::filesystem::path generation_dir(std::string_view model, std::int64_t protocol_id) const;
  std::size_t provider_calls() const { return provider_calls_.load(); }

 private:
  std::shared_ptr<const Generation> produce(providers::ChatProvider& model, const corpus::Protocol& protocol, int run,
                                            bool with_actions);

  RunSettings settings_;
  prompts::PromptTemplates templates_;
  actions::ActionRegistry registry_;
  std::mutex mu_;
  std::map<std::tuple<std::string, std::int64_t, int, bool>, std::shared_future<std::shared_ptr<const Generation>>>
      cache_;
  std::atomic<std::size_t> provider_calls_{0};
};

struct GenerationBatch {
  std::map<std::int64_t, pseudocode::PseudocodeDoc> docs;
  std::map<std::int64_t, std::string> failures;
};

/// One generation per protocol for `run`; failures are recorded, not thrown.
GenerationBatch run_generation(GenerationStore& store, providers::ChatProvider& model,
                               const std::vector<corpus::Protocol>& corpus, bool with_actions, int run = 0);

struct Experiment {
  std::vector<corpus::Protocol> corpus;
  std::vector<std::shared_ptr<providers::ChatProvider>> targets;
  std::shared_ptr<providers::ChatProvider> baseline;
  llameval::JudgeConfig judge;
  std::vector<TaskSpec> tasks = default_tasks();
  std::optional<std::filesystem::path> eval_steps_dir;
  actions::ActionRegistry registry = actions::default_registry();
  RunSettings settings;

  /// Throws ConfigError: empty corpus, no targets, duplicate model slugs,
  /// no baseline while a task needs one, bad n_runs.
  void validate() const;
};

/// Rows of a per-criterion table: one per (target, task) or per judge.
struct CriterionStats {
  corpus::MeanStd stats;
  std::size_t n = 0;
  std::size_t errors = 0;
};

struct ScoreRow {
  std::string model;
  std::string task;
  bool ac = false;
  bool pr = false;
  bool is_baseline = false;
  std::map<std::string, CriterionStats> criteria;
  double average = 0.0;
  std::size_t units = 0;
  /// Self-self only: the judge never returned a number.
  bool non_numeric = false;
};

struct UnitError {
  std::string task;
  std::string model;
  std::int64_t protocol_id = 0;
  int run = 0;
  std::string criterion;
  std::string message;
};

struct MatrixResult {
  std::vector<ScoreRow> rows;
  std::vector<UnitError> errors;
  bool interrupted = false;
};

/// (task, target, protocol, run) units in planning order.
std::size_t planned_units(const Experiment& exp);

/// Judges every target under every task. Protocols are taken in id order,
/// targets and tasks in config order; the fold over unit results is in that
/// order whatever the worker count.
MatrixResult run_task_matrix(const Experiment& exp);

struct SelfSelfResult {
  std::vector<ScoreRow> rows;
  std::vector<UnitError> errors;
  /// Highest average among models that produced numbers.
  std::optional<std::string> selected_judge;
  bool interrupted = false;
};

/// Each candidate generates (with actions) and then judges its own output
/// against itself. `judge_template` supplies everything but the provider.
SelfSelfResult self_self_task(const std::vector<std::shared_ptr<providers::ChatProvider>>& candidates,
                              const Experiment& exp, const llameval::JudgeConfig& judge_template);

struct ReferenceRow {
  std::string model;
  bool ac = false;
  bool is_baseline = false;
  corpus::MeanStd levenshtein_norm;
  corpus::MeanStd bleu;
  corpus::MeanStd precision;
  corpus::MeanStd recall;
  corpus::MeanStd embed;
  std::size_t n = 0;
  std::size_t skipped = 0;
  std::vector<std::string> notes;
};

struct ReferenceResult {
  std::vector<ReferenceRow> rows;
  bool interrupted = false;
};

/// Sequence and embedding metrics of every target (and the baseline) against
/// the baseline model, with and without actions, over n_runs runs.
ReferenceResult run_reference_metrics(const Experiment& exp, providers::EmbeddingProvider* embedder,
                                      metrics::OverlapMode mode, int n_runs);

nlohmann::json to_json(const MatrixResult& r);
nlohmann::json to_json(const SelfSelfResult& r);
nlohmann::json to_json(const ReferenceResult& r);

/// Sections present in the json ("task_matrix", "self_self",
/// "reference_metrics") are rendered as markdown tables; "m.mm ± s.ss"
/// cells, best per column and task in bold, second best underlined, the
/// baseline rows excluded from marking.
std::string render_report_markdown(const nlohmann::json& report);

/// Reads the section files under reports/, writes report.json (sorted keys,
/// no timestamps) and report.md, and records a timestamp in provenance.json.
nlohmann::json write_report(const std::filesystem::path& run_dir, const nlohmann::json& config_snapshot);

/// Atomically replaces reports/<section>.json.
void write_section(const std::filesystem::path& run_dir, std::string_view section, const nlohmann::json& data);

/// Write-then-rename so an interrupted run never leaves a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace protoeval::runner
