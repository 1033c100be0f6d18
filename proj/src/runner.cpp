#include "protoeval/runner.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "protoeval/error.hpp"
#include "text_util.hpp"

namespace protoeval::runner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<std::string> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void log(const RunSettings& s, const std::string& msg) {
  if (s.log) s.log(msg);
}

bool cancelled(const RunSettings& s) { return s.cancel && s.cancel->load(); }

/// Runs job(i) for i in [0, n) on up to `workers` threads. Stops handing out
/// indices once cancelled. A job that throws stops the pool and the first
/// exception is rethrown after all threads join.
template <class Job>
void parallel_for(std::size_t n, int workers, const RunSettings& settings, Job&& job) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      if (failed.load() || cancelled(settings)) return;
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first) first = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  int count = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(n, 1))));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (first) std::rethrow_exception(first);
}

std::vector<corpus::Protocol> sorted_by_id(std::vector<corpus::Protocol> corpus) {
  std::stable_sort(corpus.begin(), corpus.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return corpus;
}

std::vector<prompts::CriterionDef> load_criteria(prompts::BaselineKind kind, const std::optional<fs::path>& dir) {
  auto c = prompts::default_criteria_without_steps(kind);
  prompts::attach_eval_steps(c, dir);
  return c;
}

std::string judgments_file_stem(const prompts::CriterionDef& c) { return detail::ascii_lower(c.name); }

/// Evaluates the criteria of one unit, reusing stored successful judgments.
std::vector<llameval::CriterionOutcome> judge_unit(const llameval::JudgeConfig& judge,
                                                   const std::vector<prompts::CriterionDef>& criteria,
                                                   const std::string& baseline, const std::string& target,
                                                   const fs::path& dir, bool force) {
  std::vector<llameval::CriterionOutcome> out;
  for (const auto& c : criteria) {
    fs::path json_path = dir / (judgments_file_stem(c) + ".judge.json");
    fs::path txt_path = dir / (judgments_file_stem(c) + ".judge.txt");
    if (!force) {
      if (auto text = read_file(json_path)) {
        try {
          auto j = json::parse(*text);
          if (j.contains("result")) {
            llameval::CriterionOutcome o;
            o.criterion = c.name;
            o.result = llameval::criterion_result_from_json(j["result"]);
            o.raw_responses = o.result->raw_responses;
            out.push_back(std::move(o));
            continue;
          }
        } catch (const json::exception&) {
          // unreadable record: judge again
        }
      }
    }
    llameval::CriterionOutcome o;
    o.criterion = c.name;
    json record;
    try {
      o.result = llameval::evaluate_criterion(judge, c, baseline, target);
      o.raw_responses = o.result->raw_responses;
      record = {{"result", llameval::to_json(*o.result)}};
    } catch (const EvaluationError& e) {
      o.error = e.what();
      o.raw_responses = e.raw_responses();
      record = {{"error", e.what()}, {"raw_responses", e.raw_responses()}};
    }
    fs::create_directories(dir);
    write_file_atomic(txt_path, detail::join(o.raw_responses, "\n---\n") + "\n");
    write_file_atomic(json_path, record.dump(2) + "\n");
    out.push_back(std::move(o));
  }
  return out;
}

struct Pool {
  std::vector<double> values;
  std::size_t errors = 0;
};

ScoreRow fold_row(ScoreRow row, const std::map<std::string, Pool>& pools) {
  double sum = 0.0;
  std::size_t with_data = 0;
  for (const auto& name : prompts::criterion_names()) {
    CriterionStats cs;
    if (auto it = pools.find(name); it != pools.end()) {
      cs.stats = corpus::mean_std(it->second.values);
      cs.n = it->second.values.size();
      cs.errors = it->second.errors;
    }
    if (cs.n > 0) {
      sum += cs.stats.mean;
      ++with_data;
    }
    row.criteria[name] = cs;
  }
  row.average = with_data ? sum / static_cast<double>(with_data) : 0.0;
  return row;
}

json mean_std_json(const corpus::MeanStd& m) { return {{"mean", m.mean}, {"std", m.stddev}}; }

json row_json(const ScoreRow& r) {
  json crit = json::object();
  for (const auto& [name, cs] : r.criteria) {
    crit[name] = {{"mean", cs.stats.mean}, {"std", cs.stats.stddev}, {"n", cs.n}, {"errors", cs.errors}};
  }
  return {{"model", r.model},       {"task", r.task},         {"ac", r.ac},
          {"pr", r.pr},             {"is_baseline", r.is_baseline}, {"criteria", crit},
          {"average", r.average},   {"units", r.units},       {"non_numeric", r.non_numeric}};
}

json errors_json(const std::vector<UnitError>& errors) {
  json arr = json::array();
  for (const auto& e : errors) {
    arr.push_back({{"task", e.task},
                   {"model", e.model},
                   {"protocol_id", e.protocol_id},
                   {"run", e.run},
                   {"criterion", e.criterion},
                   {"message", e.message}});
  }
  return arr;
}

std::string provider_name(const providers::ChatProvider& p) { return p.config().name; }

}  // namespace

json TaskSpec::to_json() const {
  return {{"name", name},
          {"actions_in_generation", actions_in_generation},
          {"baseline", original_protocol() ? "original_protocol" : "baseline_pseudocode"},
          {"n_runs", n_runs}};
}

TaskSpec TaskSpec::from_json(const json& j) {
  TaskSpec t;
  try {
    t.name = j.at("name").get<std::string>();
    t.actions_in_generation = j.value("actions_in_generation", true);
    std::string b = j.value("baseline", std::string("baseline_pseudocode"));
    if (b == "original_protocol" || b == "protocol") {
      t.baseline_kind = prompts::BaselineKind::protocol_baseline;
    } else if (b == "baseline_pseudocode" || b == "pseudocode") {
      t.baseline_kind = prompts::BaselineKind::pseudocode_baseline;
    } else {
      throw ConfigError(fmt::format("task {}: unknown baseline '{}'", t.name, b));
    }
    t.n_runs = j.value("n_runs", t.n_runs);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("bad task entry: {}", e.what()));
  }
  if (t.n_runs < 1) throw ConfigError(fmt::format("task {}: n_runs must be at least 1", t.name));
  return t;
}

std::vector<TaskSpec> default_tasks(int n_runs) {
  using prompts::BaselineKind;
  return {{"actions", true, BaselineKind::pseudocode_baseline, n_runs},
          {"no_actions", false, BaselineKind::pseudocode_baseline, n_runs},
          {"protocol", true, BaselineKind::protocol_baseline, n_runs}};
}

std::string slug(std::string_view name) {
  std::string out;
  for (char c : name) {
    bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_';
    out += ok ? c : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  static std::atomic<unsigned long> counter{0};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += fmt::format(".tmp{}", counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(fmt::format("cannot write {}", tmp.string()));
  }
  fs::rename(tmp, path);
}

GenerationStore::GenerationStore(RunSettings settings, prompts::PromptTemplates templates,
                                 actions::ActionRegistry registry)
    : settings_(std::move(settings)), templates_(std::move(templates)), registry_(std::move(registry)) {}

fs::path GenerationStore::generation_dir(std::string_view model, std::int64_t protocol_id) const {
  return settings_.run_dir / "generations" / std::to_string(protocol_id) / slug(model);
}

std::shared_ptr<const Generation> GenerationStore::get(providers::ChatProvider& model,
                                                       const corpus::Protocol& protocol, int run, bool with_actions) {
  auto key = std::make_tuple(provider_name(model), protocol.id, run, with_actions);
  std::promise<std::shared_ptr<const Generation>> promise;
  std::shared_future<std::shared_ptr<const Generation>> future;
  bool owner = false;
  {
    std::lock_guard lock(mu_);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      future = promise.get_future().share();
      cache_.emplace(key, future);
      owner = true;
    } else {
      future = it->second;
    }
  }
  if (owner) {
    try {
      promise.set_value(produce(model, protocol, run, with_actions));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return future.get();
}

std::shared_ptr<const Generation> GenerationStore::produce(providers::ChatProvider& model,
                                                           const corpus::Protocol& protocol, int run,
                                                           bool with_actions) {
  auto g = std::make_shared<Generation>();
  g->protocol_id = protocol.id;
  g->model = provider_name(model);
  g->run = run;
  g->with_actions = with_actions;

  fs::path dir = generation_dir(g->model, protocol.id);
  std::string stem = with_actions ? std::to_string(run) : std::to_string(run) + ".noactions";
  fs::path raw_path = dir / (stem + ".raw.txt");
  fs::path pc_path = dir / (stem + ".pc");
  fs::path meta_path = dir / (stem + ".json");

  if (!settings_.force) {
    if (auto raw = read_file(raw_path)) {
      g->raw_text = std::move(*raw);
      g->doc = pseudocode::parse_pseudocode(g->raw_text);
      return g;
    }
  }

  prompts::GenerationPromptInput input;
  input.protocol = protocol;
  if (with_actions) input.registry = registry_;
  providers::ChatRequest req;
  req.messages = prompts::build_generation_prompt(input, templates_);
  if (!model.config().supports_system_role) req.messages = merge_system_into_user(req.messages);
  req.seed = settings_.seed + run;
  try {
    ++provider_calls_;
    auto resp = providers::chat_complete(model, req);
    g->raw_text = resp.samples.front().text;
  } catch (const AuthError&) {
    throw;
  } catch (const ProviderError& e) {
    g->error = e.what();
    write_file_atomic(dir / (stem + ".error.json"), json{{"error", e.what()}}.dump(2) + "\n");
    log(settings_, fmt::format("generation failed: {} protocol {} run {}: {}", g->model, protocol.id, run, e.what()));
    return g;
  }
  g->doc = pseudocode::parse_pseudocode(g->raw_text);

  json diags = json::array();
  for (const auto& d : g->doc.diagnostics) {
    diags.push_back({{"severity", std::string(pseudocode::to_string(d.severity))}, {"line", d.line},
                     {"message", d.message}});
  }
  json dsl = json::array();
  for (const auto& d : pseudocode::validate_doc(g->doc, registry_)) {
    dsl.push_back({{"line", d.line}, {"message", d.message}});
  }
  json meta = {{"model", g->model},
               {"protocol_id", protocol.id},
               {"run", run},
               {"with_actions", with_actions},
               {"n_calls", g->doc.calls.size()},
               {"diagnostics", diags},
               {"dsl_violations", dsl}};
  write_file_atomic(pc_path, pseudocode::serialize(g->doc));
  write_file_atomic(meta_path, meta.dump(2) + "\n");
  // The raw file marks completion, so it is written last.
  write_file_atomic(raw_path, g->raw_text);
  std::error_code ec;
  fs::remove(dir / (stem + ".error.json"), ec);
  return g;
}

GenerationBatch run_generation(GenerationStore& store, providers::ChatProvider& model,
                               const std::vector<corpus::Protocol>& corpus, bool with_actions, int run) {
  GenerationBatch out;
  for (const auto& p : sorted_by_id(corpus)) {
    auto g = store.get(model, p, run, with_actions);
    if (g->error) {
      out.failures[p.id] = *g->error;
    } else {
      out.docs[p.id] = g->doc;
    }
  }
  return out;
}

void Experiment::validate() const {
  if (corpus.empty()) throw ConfigError("corpus is empty");
  if (targets.empty()) throw ConfigError("no target models");
  std::set<std::string> slugs;
  for (const auto& t : targets) {
    if (!t) throw ConfigError("null target provider");
    if (!slugs.insert(slug(t->config().name)).second) {
      throw ConfigError(fmt::format("two targets share the path name '{}'", slug(t->config().name)));
    }
  }
  if (tasks.empty()) throw ConfigError("no tasks");
  std::set<std::string> task_names;
  for (const auto& t : tasks) {
    if (t.n_runs < 1) throw ConfigError(fmt::format("task {}: n_runs must be at least 1", t.name));
    if (!task_names.insert(slug(t.name)).second) throw ConfigError(fmt::format("duplicate task '{}'", t.name));
    if (!t.original_protocol() && !baseline) {
      throw ConfigError(fmt::format("task {} needs a baseline model", t.name));
    }
  }
  std::set<std::int64_t> ids;
  for (const auto& p : corpus) {
    if (!ids.insert(p.id).second) throw ConfigError(fmt::format("duplicate protocol id {}", p.id));
  }
}

std::size_t planned_units(const Experiment& exp) {
  std::size_t n = 0;
  for (const auto& t : exp.tasks) n += static_cast<std::size_t>(t.n_runs) * exp.targets.size() * exp.corpus.size();
  return n;
}

MatrixResult run_task_matrix(const Experiment& exp) {
  exp.validate();
  exp.judge.validate();
  auto corpus = sorted_by_id(exp.corpus);
  const auto criteria_pc = load_criteria(prompts::BaselineKind::pseudocode_baseline, exp.eval_steps_dir);
  const auto criteria_pr = load_criteria(prompts::BaselineKind::protocol_baseline, exp.eval_steps_dir);
  GenerationStore store(exp.settings, exp.judge.templates, exp.registry);

  struct Unit {
    std::size_t task, target, protocol;
    int run;
  };
  std::vector<Unit> units;
  for (std::size_t ti = 0; ti < exp.tasks.size(); ++ti) {
    for (std::size_t mi = 0; mi < exp.targets.size(); ++mi) {
      for (std::size_t pi = 0; pi < corpus.size(); ++pi) {
        for (int r = 0; r < exp.tasks[ti].n_runs; ++r) units.push_back({ti, mi, pi, r});
      }
    }
  }

  struct UnitResult {
    bool done = false;
    std::optional<std::string> generation_error;
    std::vector<llameval::CriterionOutcome> outcomes;
  };
  std::vector<UnitResult> results(units.size());

  parallel_for(units.size(), exp.settings.workers, exp.settings, [&](std::size_t i) {
    const Unit& u = units[i];
    const TaskSpec& task = exp.tasks[u.task];
    auto& target = *exp.targets[u.target];
    const auto& protocol = corpus[u.protocol];
    UnitResult& res = results[i];

    auto gen = store.get(target, protocol, u.run, task.actions_in_generation);
    if (gen->error) {
      res.generation_error = "target generation failed: " + *gen->error;
      res.done = true;
      return;
    }
    std::string baseline_text;
    if (task.original_protocol()) {
      baseline_text = corpus::concatenated_text(protocol);
    } else {
      auto base = store.get(*exp.baseline, protocol, u.run, task.actions_in_generation);
      if (base->error) {
        res.generation_error = "baseline generation failed: " + *base->error;
        res.done = true;
        return;
      }
      baseline_text = base->raw_text;
    }
    fs::path dir = exp.settings.run_dir / "judgments" / slug(task.name) / std::to_string(protocol.id) /
                   slug(provider_name(target)) / std::to_string(u.run);
    res.outcomes = judge_unit(exp.judge, task.original_protocol() ? criteria_pr : criteria_pc, baseline_text,
                              gen->raw_text, dir, exp.settings.force);
    res.done = true;
  });

  MatrixResult out;
  out.interrupted = cancelled(exp.settings);
  std::string baseline_name = exp.baseline ? provider_name(*exp.baseline) : std::string();
  for (std::size_t mi = 0; mi < exp.targets.size(); ++mi) {
    for (std::size_t ti = 0; ti < exp.tasks.size(); ++ti) {
      const TaskSpec& task = exp.tasks[ti];
      ScoreRow row;
      row.model = provider_name(*exp.targets[mi]);
      row.task = task.name;
      row.ac = task.actions_in_generation;
      row.pr = task.original_protocol();
      row.is_baseline = !baseline_name.empty() && row.model == baseline_name;
      std::map<std::string, Pool> pools;
      for (std::size_t i = 0; i < units.size(); ++i) {
        const Unit& u = units[i];
        if (u.task != ti || u.target != mi || !results[i].done) continue;
        ++row.units;
        const auto& res = results[i];
        if (res.generation_error) {
          for (const auto& name : prompts::criterion_names()) {
            ++pools[name].errors;
            out.errors.push_back({task.name, row.model, corpus[u.protocol].id, u.run, name, *res.generation_error});
          }
          continue;
        }
        for (const auto& o : res.outcomes) {
          if (o.result) {
            pools[o.criterion].values.push_back(o.result->score);
          } else {
            ++pools[o.criterion].errors;
            out.errors.push_back({task.name, row.model, corpus[u.protocol].id, u.run, o.criterion, *o.error});
          }
        }
      }
      out.rows.push_back(fold_row(std::move(row), pools));
    }
  }
  return out;
}

SelfSelfResult self_self_task(const std::vector<std::shared_ptr<providers::ChatProvider>>& candidates,
                              const Experiment& exp, const llameval::JudgeConfig& judge_template) {
  if (candidates.empty()) throw ConfigError("no self-self candidates");
  if (exp.corpus.empty()) throw ConfigError("corpus is empty");
  auto corpus = sorted_by_id(exp.corpus);
  const auto criteria = load_criteria(prompts::BaselineKind::pseudocode_baseline, exp.eval_steps_dir);
  GenerationStore store(exp.settings, judge_template.templates, exp.registry);
  int n_runs = exp.tasks.empty() ? 5 : exp.tasks.front().n_runs;

  std::vector<llameval::JudgeConfig> judges;
  for (const auto& c : candidates) {
    auto j = judge_template;
    j.provider = c;
    // A judge without logprobs falls back to sampling rather than failing.
    if (j.mode == llameval::JudgeMode::logprob && !c->config().supports_logprobs) j.mode = llameval::JudgeMode::sampling;
    j.validate();
    judges.push_back(std::move(j));
  }

  struct Unit {
    std::size_t model, protocol;
    int run;
  };
  std::vector<Unit> units;
  for (std::size_t mi = 0; mi < candidates.size(); ++mi) {
    for (std::size_t pi = 0; pi < corpus.size(); ++pi) {
      for (int r = 0; r < n_runs; ++r) units.push_back({mi, pi, r});
    }
  }
  struct UnitResult {
    bool done = false;
    std::optional<std::string> generation_error;
    std::vector<llameval::CriterionOutcome> outcomes;
  };
  std::vector<UnitResult> results(units.size());

  parallel_for(units.size(), exp.settings.workers, exp.settings, [&](std::size_t i) {
    const Unit& u = units[i];
    auto& model = *candidates[u.model];
    const auto& protocol = corpus[u.protocol];
    auto gen = store.get(model, protocol, u.run, true);
    if (gen->error) {
      results[i].generation_error = "generation failed: " + *gen->error;
      results[i].done = true;
      return;
    }
    fs::path dir = exp.settings.run_dir / "judgments" / "selfself" / std::to_string(protocol.id) /
                   slug(provider_name(model)) / std::to_string(u.run);
    results[i].outcomes =
        judge_unit(judges[u.model], criteria, gen->raw_text, gen->raw_text, dir, exp.settings.force);
    results[i].done = true;
  });

  SelfSelfResult out;
  out.interrupted = cancelled(exp.settings);
  std::optional<double> best;
  for (std::size_t mi = 0; mi < candidates.size(); ++mi) {
    ScoreRow row;
    row.model = provider_name(*candidates[mi]);
    row.task = "selfself";
    row.ac = true;
    std::map<std::string, Pool> pools;
    std::size_t numeric = 0;
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (units[i].model != mi || !results[i].done) continue;
      ++row.units;
      const auto& res = results[i];
      if (res.generation_error) {
        for (const auto& name : prompts::criterion_names()) {
          ++pools[name].errors;
          out.errors.push_back({"selfself", row.model, corpus[units[i].protocol].id, units[i].run, name,
                                *res.generation_error});
        }
        continue;
      }
      for (const auto& o : res.outcomes) {
        if (o.result) {
          pools[o.criterion].values.push_back(o.result->score);
          ++numeric;
        } else {
          ++pools[o.criterion].errors;
          out.errors.push_back({"selfself", row.model, corpus[units[i].protocol].id, units[i].run, o.criterion,
                                *o.error});
        }
      }
    }
    row.non_numeric = numeric == 0;
    row = fold_row(std::move(row), pools);
    if (!row.non_numeric && (!best || row.average > *best)) {
      best = row.average;
      out.selected_judge = row.model;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

ReferenceResult run_reference_metrics(const Experiment& exp, providers::EmbeddingProvider* embedder,
                                      metrics::OverlapMode mode, int n_runs) {
  if (!exp.baseline) throw ConfigError("reference metrics need a baseline model");
  if (exp.targets.empty()) throw ConfigError("no target models");
  if (n_runs < 1) throw ConfigError("n_runs must be at least 1");
  auto corpus = sorted_by_id(exp.corpus);
  if (corpus.empty()) throw ConfigError("corpus is empty");
  GenerationStore store(exp.settings, exp.judge.templates, exp.registry);
  const std::string baseline_name = provider_name(*exp.baseline);

  struct Unit {
    std::size_t target;
    bool ac;
    std::size_t protocol;
    int run;
  };
  std::vector<Unit> units;
  for (std::size_t mi = 0; mi < exp.targets.size(); ++mi) {
    for (bool ac : {true, false}) {
      for (std::size_t pi = 0; pi < corpus.size(); ++pi) {
        for (int r = 0; r < n_runs; ++r) units.push_back({mi, ac, pi, r});
      }
    }
  }
  struct UnitResult {
    bool done = false;
    std::optional<metrics::MetricReport> report;
    std::optional<std::string> note;
  };
  std::vector<UnitResult> results(units.size());

  parallel_for(units.size(), exp.settings.workers, exp.settings, [&](std::size_t i) {
    const Unit& u = units[i];
    const auto& protocol = corpus[u.protocol];
    auto pred = store.get(*exp.targets[u.target], protocol, u.run, u.ac);
    auto base = store.get(*exp.baseline, protocol, u.run, u.ac);
    auto& res = results[i];
    res.done = true;
    if (pred->error || base->error) {
      res.note = fmt::format("protocol {} run {}: generation failed", protocol.id, u.run);
    } else if (pred->doc.calls.empty() || base->doc.calls.empty()) {
      res.note = fmt::format("protocol {} run {}: no calls recognized, skipped", protocol.id, u.run);
    } else {
      res.report = metrics::compute_metrics(pred->doc, base->doc, embedder, mode);
    }
  });

  ReferenceResult out;
  out.interrupted = cancelled(exp.settings);
  for (std::size_t mi = 0; mi < exp.targets.size(); ++mi) {
    for (bool ac : {true, false}) {
      ReferenceRow row;
      row.model = provider_name(*exp.targets[mi]);
      row.ac = ac;
      row.is_baseline = row.model == baseline_name;
      std::vector<double> lev, bl, pr, rc, em;
      std::set<std::string> warnings;
      for (std::size_t i = 0; i < units.size(); ++i) {
        const Unit& u = units[i];
        if (u.target != mi || u.ac != ac || !results[i].done) continue;
        const auto& res = results[i];
        if (!res.report) {
          ++row.skipped;
          row.notes.push_back(*res.note);
          continue;
        }
        lev.push_back(res.report->levenshtein_norm);
        bl.push_back(res.report->bleu);
        pr.push_back(res.report->precision);
        rc.push_back(res.report->recall);
        em.push_back(res.report->embed_score);
        for (const auto& w : res.report->warnings) {
          if (w.rfind("pair ", 0) != 0) warnings.insert(w);
        }
      }
      row.n = lev.size();
      row.levenshtein_norm = corpus::mean_std(lev);
      row.bleu = corpus::mean_std(bl);
      row.precision = corpus::mean_std(pr);
      row.recall = corpus::mean_std(rc);
      row.embed = corpus::mean_std(em);
      for (const auto& w : warnings) row.notes.push_back(w);
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

json to_json(const MatrixResult& r) {
  json rows = json::array();
  for (const auto& row : r.rows) rows.push_back(row_json(row));
  return {{"rows", rows}, {"errors", errors_json(r.errors)}, {"interrupted", r.interrupted}};
}

json to_json(const SelfSelfResult& r) {
  json rows = json::array();
  for (const auto& row : r.rows) rows.push_back(row_json(row));
  return {{"rows", rows},
          {"errors", errors_json(r.errors)},
          {"selected_judge", r.selected_judge ? json(*r.selected_judge) : json(nullptr)},
          {"interrupted", r.interrupted}};
}

json to_json(const ReferenceResult& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"model", row.model},
                    {"ac", row.ac},
                    {"is_baseline", row.is_baseline},
                    {"levenshtein_norm", mean_std_json(row.levenshtein_norm)},
                    {"bleu", mean_std_json(row.bleu)},
                    {"precision", mean_std_json(row.precision)},
                    {"recall", mean_std_json(row.recall)},
                    {"embed", mean_std_json(row.embed)},
                    {"n", row.n},
                    {"skipped", row.skipped},
                    {"notes", row.notes}});
  }
  return {{"rows", rows}, {"interrupted", r.interrupted}};
}

namespace {

enum class Mark { none, best, second };

/// Marks per group of row indices: best value(s) bold, next distinct value
/// underlined.
std::vector<Mark> marks_for(const std::vector<double>& values, const std::vector<bool>& eligible,
                            const std::vector<std::string>& groups, bool higher_is_better) {
  std::vector<Mark> out(values.size(), Mark::none);
  std::set<std::string> seen(groups.begin(), groups.end());
  for (const auto& g : seen) {
    std::vector<double> distinct;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (groups[i] == g && eligible[i]) distinct.push_back(values[i]);
    }
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (higher_is_better) std::reverse(distinct.begin(), distinct.end());
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (groups[i] != g || !eligible[i]) continue;
      if (!distinct.empty() && values[i] == distinct[0]) out[i] = Mark::best;
      else if (distinct.size() > 1 && values[i] == distinct[1]) out[i] = Mark::second;
    }
  }
  return out;
}

std::string marked(const std::string& text, Mark m) {
  switch (m) {
    case Mark::best:
      return "**" + text + "**";
    case Mark::second:
      return "<u>" + text + "</u>";
    case Mark::none:
      break;
  }
  return text;
}

std::string cell(double mean, double sd, Mark m) { return marked(fmt::format("{:.2f}", mean), m) + fmt::format(" ± {:.2f}", sd); }

const char* check(bool b) { return b ? "✓" : "✗"; }

std::string render_score_rows(const json& rows, bool with_flags) {
  const auto& names = prompts::criterion_names();
  std::vector<std::string> groups;
  std::vector<bool> eligible;
  for (const auto& r : rows) {
    groups.push_back(r.value("task", std::string()));
    eligible.push_back(!r.value("is_baseline", false) && !r.value("non_numeric", false));
  }
  std::map<std::string, std::vector<Mark>> col_marks;
  for (const auto& n : names) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r["criteria"][n]["mean"].get<double>());
    col_marks[n] = marks_for(v, eligible, groups, true);
  }
  std::vector<double> avg;
  for (const auto& r : rows) avg.push_back(r["average"].get<double>());
  auto avg_marks = marks_for(avg, eligible, groups, true);

  std::string out = "| Models |";
  std::string sep = "|---|";
  if (with_flags) {
    out += " Ac | Pr |";
    sep += "---|---|";
  }
  for (const auto& n : names) {
    out += " " + n + " |";
    sep += "---|";
  }
  out += " Average |\n" + sep + "---|\n";
  std::string last_model;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::string model = r["model"].get<std::string>();
    if (r.value("is_baseline", false)) model += " (Baseline)";
    std::string shown = with_flags && model == last_model ? "" : model;
    last_model = model;
    out += "| " + shown + " |";
    if (with_flags) out += fmt::format(" {} | {} |", check(r["ac"].get<bool>()), check(r["pr"].get<bool>()));
    for (const auto& n : names) {
      const auto& c = r["criteria"][n];
      if (c["n"].get<std::size_t>() == 0) {
        out += " n/a |";
      } else {
        out += " " + cell(c["mean"].get<double>(), c["std"].get<double>(), col_marks[n][i]) + " |";
      }
    }
    out += " " + marked(fmt::format("{:.2f}", r["average"].get<double>()), avg_marks[i]) + " |\n";
  }
  return out;
}

std::string render_reference_rows(const json& rows) {
  struct Col {
    const char* key;
    const char* title;
    bool higher;
  };
  const Col cols[] = {{"levenshtein_norm", "L_dn", false},
                      {"bleu", "BLEU", true},
                      {"precision", "Precision", true},
                      {"recall", "Recall", true},
                      {"embed", "Embedding", true}};
  std::vector<std::string> groups;
  std::vector<bool> eligible;
  for (const auto& r : rows) {
    groups.push_back(r["ac"].get<bool>() ? "ac" : "noac");
    eligible.push_back(!r["is_baseline"].get<bool>() && r["n"].get<std::size_t>() > 0);
  }
  std::string out = "| Models | Ac |";
  std::string sep = "|---|---|";
  for (const auto& c : cols) {
    out += fmt::format(" {} |", c.title);
    sep += "---|";
  }
  out += "\n" + sep + "\n";
  std::map<std::string, std::vector<Mark>> marks;
  for (const auto& c : cols) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r[c.key]["mean"].get<double>());
    marks[c.key] = marks_for(v, eligible, groups, c.higher);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::string model = r["model"].get<std::string>();
    if (r["is_baseline"].get<bool>()) model += " (Baseline)";
    out += fmt::format("| {} | {} |", model, check(r["ac"].get<bool>()));
    for (const auto& c : cols) {
      if (r["n"].get<std::size_t>() == 0) {
        out += " n/a |";
      } else {
        out += " " + cell(r[c.key]["mean"].get<double>(), r[c.key]["std"].get<double>(), marks[c.key][i]) + " |";
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace

std::string render_report_markdown(const json& report) {
  std::string out = "# Evaluation report\n";
  if (report.contains("self_self")) {
    const auto& s = report["self_self"];
    out += "\n## Self-self comparison\n\n" + render_score_rows(s["rows"], false);
    std::vector<std::string> non_numeric;
    for (const auto& r : s["rows"]) {
      if (r.value("non_numeric", false)) non_numeric.push_back(r["model"].get<std::string>());
    }
    if (!non_numeric.empty()) out += "\nModels without numerical responses: " + detail::join(non_numeric, ", ") + "\n";
    if (s.contains("selected_judge") && s["selected_judge"].is_string()) {
      out += "\nSelected judge: " + s["selected_judge"].get<std::string>() + "\n";
    }
  }
  if (report.contains("task_matrix")) {
    const auto& m = report["task_matrix"];
    out += "\n## Judge scores\n\n" + render_score_rows(m["rows"], true);
    if (!m["errors"].empty()) out += fmt::format("\n{} criterion evaluations failed; see report.json.\n", m["errors"].size());
    if (m.value("interrupted", false)) out += "\nRun interrupted; scores cover completed units only.\n";
  }
  if (report.contains("reference_metrics")) {
    out += "\n## Reference-based metrics\n\n" + render_reference_rows(report["reference_metrics"]["rows"]);
  }
  return out;
}

void write_section(const fs::path& run_dir, std::string_view section, const json& data) {
  write_file_atomic(run_dir / "reports" / (std::string(section) + ".json"), data.dump(2) + "\n");
}

json write_report(const fs::path& run_dir, const json& config_snapshot) {
  json report = json::object();
  report["config"] = config_snapshot;
  for (const char* section : {"task_matrix", "self_self", "reference_metrics"}) {
    if (auto text = read_file(run_dir / "reports" / (std::string(section) + ".json"))) {
      try {
        report[section] = json::parse(*text);
      } catch (const json::exception& e) {
        throw Error(fmt::format("corrupt report section {}: {}", section, e.what()));
      }
    }
  }
  write_file_atomic(run_dir / "reports" / "report.json", report.dump(2) + "\n");
  write_file_atomic(run_dir / "reports" / "report.md", render_report_markdown(report));

  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  json prov = json::object();
  if (auto text = read_file(run_dir / "reports" / "provenance.json")) {
    try {
      prov = json::parse(*text);
    } catch (const json::exception&) {
      prov = json::object();
    }
  }
  if (!prov.contains("created")) prov["created"] = stamp;
  prov["updated"] = stamp;
  write_file_atomic(run_dir / "reports" / "provenance.json", prov.dump(2) + "\n");
  return report;
}

}  // namespace protoeval::runner
