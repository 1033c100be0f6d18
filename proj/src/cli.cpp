#include "protoeval/cli.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "protoeval/corpus.hpp"
#include "protoeval/error.hpp"
#include "protoeval/manifest.hpp"
#include "protoeval/mock_provider.hpp"
#include "protoeval/runner.hpp"

namespace protoeval::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string manifest;
  std::vector<std::string> overrides;
  bool force = false;
  bool quiet = false;
  bool dry_run = false;
  bool as_json = false;
  std::string in;
  std::string out;
  std::string corpus;
};

class Session {
 public:
  Session(const Options& opt, CliContext& ctx) : opt_(opt), ctx_(ctx) {}

  void note(const std::string& msg) const {
    if (!opt_.quiet) ctx_.err << msg << '\n';
  }

  const manifest::Manifest& manifest() {
    if (!manifest_) {
      if (opt_.manifest.empty()) throw ConfigError("this command needs --manifest");
      manifest_ = manifest::load_manifest(opt_.manifest, opt_.overrides);
    }
    return *manifest_;
  }

  std::vector<corpus::Protocol> load_corpus() {
    const auto& m = manifest();
    fs::path path = !opt_.corpus.empty() ? fs::path(opt_.corpus) : m.corpus.value_or(fs::path());
    if (path.empty()) throw ConfigError("no corpus given (manifest 'corpus' or --corpus)");
    if (!fs::exists(path)) throw ConfigError(fmt::format("corpus not found: {}", path.string()));
    auto loaded = corpus::load_records(path);
    for (const auto& n : loaded.notices) note(n);
    auto curated = corpus::curate(loaded.records, m.curation);
    auto protocols = std::move(curated.protocols);
    std::stable_sort(protocols.begin(), protocols.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    if (m.max_protocols && protocols.size() > *m.max_protocols) protocols.resize(*m.max_protocols);
    if (protocols.empty()) throw ConfigError(fmt::format("corpus {} has no usable protocols", path.string()));
    return protocols;
  }

  std::shared_ptr<providers::ChatProvider> provider(const std::string& name) {
    if (auto it = providers_.find(name); it != providers_.end()) return it->second;
    const auto& cfg = manifest().provider(name);
    providers::HttpProviderOptions options;
    options.env = ctx_.env;
    options.notice = [this](const std::string& msg) { note(msg); };
    auto p = providers::make_chat_provider(cfg, ctx_.transport, std::move(options));
    providers_.emplace(name, p);
    return p;
  }

  runner::Experiment experiment(bool need_judge) {
    const auto& m = manifest();
    runner::Experiment exp;
    exp.corpus = load_corpus();
    if (m.targets.empty()) throw ConfigError("manifest lists no targets");
    for (const auto& t : m.targets) exp.targets.push_back(provider(t));
    if (m.baseline) exp.baseline = provider(*m.baseline);
    exp.tasks = m.tasks;
    exp.eval_steps_dir = m.eval_steps_dir;
    if (m.actions) exp.registry = actions::ActionRegistry::load(*m.actions);
    exp.judge = judge_config(need_judge ? std::optional<std::string>(m.judge.provider) : std::nullopt);
    exp.settings = settings();
    return exp;
  }

  llameval::JudgeConfig judge_config(const std::optional<std::string>& provider_name) {
    const auto& m = manifest();
    llameval::JudgeConfig j;
    if (provider_name) {
      if (provider_name->empty()) throw ConfigError("manifest has no judge.provider");
      j.provider = provider(*provider_name);
    }
    j.mode = m.judge.mode;
    j.n_samples = m.judge.n_samples;
    j.logprob_samples = m.judge.logprob_samples;
    j.max_semantic_retries = m.judge.max_semantic_retries;
    j.temperature = m.judge.temperature;
    j.max_tokens = m.judge.max_tokens;
    j.seed = m.seed;
    if (m.templates_dir) j.templates = prompts::PromptTemplates::load(*m.templates_dir);
    return j;
  }

  runner::RunSettings settings() {
    const auto& m = manifest();
    runner::RunSettings s;
    s.run_dir = m.run_dir();
    s.seed = m.seed;
    s.workers = m.workers;
    s.force = opt_.force;
    s.cancel = ctx_.cancel;
    s.log = [this](const std::string& msg) { note(msg); };
    return s;
  }

  std::unique_ptr<providers::EmbeddingProvider> embedder() {
    const auto& e = manifest().embedder;
    if (e.kind == "none") return nullptr;
    if (e.kind == "hash") return std::make_unique<providers::HashEmbedder>(e.dim);
    auto transport = ctx_.transport ? ctx_.transport : providers::make_http_transport();
    return std::make_unique<providers::HttpEmbeddingProvider>(e.endpoint, transport, e.timeout);
  }

  void finish_report(bool interrupted) {
    const auto& m = manifest();
    auto report = runner::write_report(m.run_dir(), m.snapshot);
    ctx_.out << runner::render_report_markdown(report);
    note(fmt::format("report written to {}", (m.run_dir() / "reports" / "report.json").string()));
    if (interrupted) throw Error("interrupted; partial results kept, rerun to resume");
  }

 private:
  const Options& opt_;
  CliContext& ctx_;
  std::optional<manifest::Manifest> manifest_;
  std::map<std::string, std::shared_ptr<providers::ChatProvider>> providers_;
};

int cmd_curate(const Options& opt, Session& s, CliContext& ctx) {
  corpus::CurationConfig cfg;
  if (!opt.manifest.empty()) cfg = s.manifest().curation;
  fs::path in = opt.in;
  if (in.empty() && !opt.manifest.empty() && s.manifest().corpus) in = *s.manifest().corpus;
  if (in.empty()) throw ConfigError("curate needs --in");
  if (!fs::exists(in)) throw ConfigError(fmt::format("input not found: {}", in.string()));
  if (opt.out.empty()) throw ConfigError("curate needs --out");

  auto loaded = corpus::load_records(in);
  for (const auto& n : loaded.notices) s.note(n);
  auto result = corpus::curate(loaded.records, cfg);

  fs::path out = opt.out;
  bool to_file = out.extension() == ".jsonl" || out.extension() == ".json";
  fs::path corpus_file = to_file ? out : out / "protocols.jsonl";
  fs::path exclusions_file = to_file ? fs::path(out).replace_extension(".exclusions.json") : out / "exclusions.json";
  if (corpus_file.has_parent_path()) fs::create_directories(corpus_file.parent_path());

  std::vector<corpus::RawProtocolRecord> kept;
  for (const auto& p : result.protocols) kept.push_back(corpus::to_record(p));
  std::ostringstream buf;
  corpus::save_records(buf, kept);
  runner::write_file_atomic(corpus_file, buf.str());

  json excl = json::array();
  for (const auto& e : result.exclusions) {
    excl.push_back({{"id", e.id}, {"reasons", e.reasons}, {"steps", e.steps}, {"score", e.score}});
    ctx.out << fmt::format("excluded {}: {}\n", e.id, fmt::join(e.reasons, ","));
  }
  runner::write_file_atomic(exclusions_file, excl.dump(2) + "\n");
  ctx.out << fmt::format("kept {} of {} protocols\n", result.protocols.size(), loaded.records.size());
  return kExitOk;
}

int cmd_stats(const Options& opt, Session& s, CliContext& ctx) {
  fs::path path = opt.corpus;
  corpus::CurationConfig cfg;
  if (!opt.manifest.empty()) {
    cfg = s.manifest().curation;
    if (path.empty() && s.manifest().corpus) path = *s.manifest().corpus;
  }
  if (path.empty()) throw ConfigError("stats needs --corpus");
  if (!fs::exists(path)) throw ConfigError(fmt::format("corpus not found: {}", path.string()));
  auto loaded = corpus::load_records(path);
  for (const auto& n : loaded.notices) s.note(n);
  auto protocols = corpus::as_protocols(loaded.records, cfg.keywords);
  WhitespaceTokenizer tok;
  auto stats = corpus::compute_stats(protocols, tok);
  if (opt.as_json) {
    ctx.out << corpus::stats_to_json(stats).dump(2) << '\n';
  } else {
    ctx.out << corpus::render_stats_table(stats);
  }
  return kExitOk;
}

int cmd_generate(const Options& opt, Session& s, CliContext& ctx) {
  const auto& m = s.manifest();
  std::set<std::pair<bool, int>> plan;  // (actions flag, run)
  for (const auto& t : m.tasks) {
    for (int r = 0; r < t.n_runs; ++r) plan.insert({t.actions_in_generation, r});
  }
  std::vector<std::string> models = m.targets;
  if (m.baseline && std::find(models.begin(), models.end(), *m.baseline) == models.end()) models.push_back(*m.baseline);
  if (opt.dry_run) {
    auto protocols = s.load_corpus();
    ctx.out << fmt::format("planned generations: {}\n", models.size() * plan.size() * protocols.size());
    return kExitOk;
  }
  auto exp = s.experiment(false);
  runner::GenerationStore store(exp.settings, exp.judge.templates, exp.registry);
  std::size_t ok = 0, failed = 0;
  for (const auto& name : models) {
    auto p = s.provider(name);
    for (const auto& [ac, run] : plan) {
      if (exp.settings.cancel && exp.settings.cancel->load()) throw Error("interrupted; rerun to resume");
      auto batch = runner::run_generation(store, *p, exp.corpus, ac, run);
      ok += batch.docs.size();
      failed += batch.failures.size();
    }
  }
  ctx.out << fmt::format("generations: {} ok, {} failed, {} provider calls\n", ok, failed, store.provider_calls());
  return failed ? kExitRuntime : kExitOk;
}

int cmd_evaluate(const Options& opt, Session& s, CliContext& ctx) {
  const auto& m = s.manifest();
  if (opt.dry_run) {
    auto protocols = s.load_corpus();
    std::size_t units = 0;
    for (const auto& t : m.tasks) units += static_cast<std::size_t>(t.n_runs) * m.targets.size() * protocols.size();
    ctx.out << fmt::format("planned units: {} ({} tasks, {} targets, {} protocols)\n", units, m.tasks.size(),
                           m.targets.size(), protocols.size());
    return kExitOk;
  }
  auto exp = s.experiment(true);
  auto result = runner::run_task_matrix(exp);
  runner::write_section(exp.settings.run_dir, "task_matrix", runner::to_json(result));
  if (!result.errors.empty()) s.note(fmt::format("{} criterion evaluations failed", result.errors.size()));
  s.finish_report(result.interrupted);
  return kExitOk;
}

int cmd_selfself(const Options& opt, Session& s, CliContext& ctx) {
  const auto& m = s.manifest();
  std::vector<std::string> names = m.selfself_candidates;
  if (names.empty() && !m.judge.provider.empty()) names.push_back(m.judge.provider);
  if (names.empty()) throw ConfigError("selfself needs selfself.candidates or judge.provider");
  int n_runs = m.tasks.front().n_runs;
  if (opt.dry_run) {
    auto protocols = s.load_corpus();
    ctx.out << fmt::format("planned units: {}\n", names.size() * protocols.size() * static_cast<std::size_t>(n_runs));
    return kExitOk;
  }
  auto exp = s.experiment(false);
  std::vector<std::shared_ptr<providers::ChatProvider>> candidates;
  for (const auto& n : names) candidates.push_back(s.provider(n));
  auto judge = s.judge_config(std::nullopt);
  auto result = runner::self_self_task(candidates, exp, judge);
  runner::write_section(exp.settings.run_dir, "self_self", runner::to_json(result));
  s.finish_report(result.interrupted);
  return kExitOk;
}

int cmd_metrics(const Options& opt, Session& s, CliContext& ctx) {
  const auto& m = s.manifest();
  if (opt.dry_run) {
    auto protocols = s.load_corpus();
    ctx.out << fmt::format("planned units: {}\n",
                           m.targets.size() * 2 * protocols.size() * static_cast<std::size_t>(m.metrics_runs));
    return kExitOk;
  }
  auto exp = s.experiment(false);
  if (!exp.baseline) throw ConfigError("metrics needs a baseline model");
  auto embedder = s.embedder();
  auto result = runner::run_reference_metrics(exp, embedder.get(), m.precision_recall_mode, m.metrics_runs);
  runner::write_section(exp.settings.run_dir, "reference_metrics", runner::to_json(result));
  s.finish_report(result.interrupted);
  return kExitOk;
}

int cmd_report(const Options&, Session& s, CliContext&) {
  s.finish_report(false);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, CliContext& ctx) {
  Options opt;
  CLI::App app{"Protocol-to-pseudocode evaluation pipeline", "protoeval"};
  app.require_subcommand(1, 1);
  app.add_option("-m,--manifest", opt.manifest, "Run manifest (JSON with comments)");
  app.add_option("--set", opt.overrides, "Override a manifest key: dotted.key=value")->take_all();
  app.add_flag("--force", opt.force, "Recompute existing artifacts");
  app.add_flag("-q,--quiet", opt.quiet, "Only print errors");

  auto* curate = app.add_subcommand("curate", "Deduplicate and filter a raw protocol dump");
  curate->add_option("--in", opt.in, "Raw corpus file or directory");
  curate->add_option("--out", opt.out, "Output directory or .jsonl file");
  auto* stats = app.add_subcommand("stats", "Corpus statistics table");
  stats->add_option("--corpus", opt.corpus, "Corpus file or directory");
  stats->add_flag("--json", opt.as_json, "Print JSON instead of a table");
  auto* generate = app.add_subcommand("generate", "Generate pseudocode for targets and baseline");
  auto* evaluate = app.add_subcommand("evaluate", "Judge every target under every task");
  auto* selfself = app.add_subcommand("selfself", "Self-self comparison of candidate judges");
  auto* metrics = app.add_subcommand("metrics", "Reference-based metrics against the baseline");
  auto* report = app.add_subcommand("report", "Render the report from stored sections");
  for (auto* sub : {generate, evaluate, selfself, metrics, report}) {
    sub->add_option("--corpus", opt.corpus, "Override the manifest corpus");
  }
  for (auto* sub : {generate, evaluate, selfself, metrics}) {
    sub->add_flag("--dry-run", opt.dry_run, "Print the planned unit count and exit");
  }
  // Global options are accepted after the subcommand as well.
  for (auto* sub : {curate, stats, generate, evaluate, selfself, metrics, report}) sub->fallthrough();

  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("protoeval");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : storage) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, ctx.out, ctx.err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, ctx.out, ctx.err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, ctx.out, ctx.err);
    return kExitConfig;
  }

  Session session(opt, ctx);
  try {
    if (curate->parsed()) return cmd_curate(opt, session, ctx);
    if (stats->parsed()) return cmd_stats(opt, session, ctx);
    if (generate->parsed()) return cmd_generate(opt, session, ctx);
    if (evaluate->parsed()) return cmd_evaluate(opt, session, ctx);
    if (selfself->parsed()) return cmd_selfself(opt, session, ctx);
    if (metrics->parsed()) return cmd_metrics(opt, session, ctx);
    if (report->parsed()) return cmd_report(opt, session, ctx);
  } catch (const ConfigError& e) {
    ctx.err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IngestError& e) {
    ctx.err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    ctx.err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  ctx.err << "error: no command\n";
  return kExitConfig;
}

}  // namespace protoeval::cli
