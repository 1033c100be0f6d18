#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "protoeval/cli.hpp"
#include "protoeval/corpus.hpp"
#include "test_support.hpp"

using namespace protoeval;
using protoeval::testing::FakeTransport;
using protoeval::testing::fixture;
using protoeval::testing::read_file;
using protoeval::testing::TempDir;
using protoeval::testing::write_file;

namespace {

std::filesystem::path mock_manifest() {
  return std::filesystem::path(PROTOEVAL_FIXTURES_DIR) / ".." / ".." / "configs" / "mock.jsonc";
}

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args, std::shared_ptr<FakeTransport> transport = nullptr,
            providers::EnvLookup env = [](const std::string&) { return std::optional<std::string>(); }) {
  std::ostringstream out, err;
  cli::CliContext ctx{out, err, std::move(env), transport};
  int code = cli::run_cli(args, ctx);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, cli::kExitConfig);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitConfig);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
  auto r = run({"evaluate"});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("--manifest"), std::string::npos);
  auto missing = run({"-m", "/nonexistent/m.jsonc", "evaluate"});
  EXPECT_EQ(missing.code, cli::kExitConfig);
  EXPECT_NE(missing.err.find("manifest not found"), std::string::npos);
}

TEST(Cli, StatsTableAndJson) {
  auto table = run({"stats", "--corpus", fixture("stats/protocols.jsonl").string()});
  ASSERT_EQ(table.code, 0) << table.err;
  EXPECT_NE(table.out.find("|"), std::string::npos);

  auto js = run({"stats", "--corpus", fixture("stats/protocols.jsonl").string(), "--json"});
  ASSERT_EQ(js.code, 0) << js.err;
  auto j = nlohmann::json::parse(js.out);
  EXPECT_EQ(j["n_protocols"], 5);

  EXPECT_EQ(run({"stats", "--corpus", "/nonexistent"}).code, cli::kExitConfig);
}

TEST(Cli, CurateReportsExclusionsAndIsIdempotent) {
  TempDir tmp;
  auto r = run({"curate", "--in", fixture("raw").string(), "--out", tmp.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("excluded 302: steps<3"), std::string::npos);
  EXPECT_NE(r.out.find("kept 2 of 3 protocols"), std::string::npos);
  const auto first = read_file(tmp.path() / "protocols.jsonl");
  auto exclusions = nlohmann::json::parse(read_file(tmp.path() / "exclusions.json"));
  EXPECT_EQ(exclusions.size(), 1u);

  auto loaded = corpus::load_records(tmp.path() / "protocols.jsonl");
  ASSERT_EQ(loaded.records.size(), 2u);

  // Curating the curated output changes nothing.
  TempDir again;
  auto r2 = run({"curate", "--in", (tmp.path() / "protocols.jsonl").string(), "--out", again.path().string()});
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_NE(r2.out.find("kept 2 of 2 protocols"), std::string::npos);
  EXPECT_EQ(read_file(again.path() / "protocols.jsonl"), first);
}

TEST(Cli, DryRunMakesNoCalls) {
  TempDir tmp;
  write_file(tmp.path() / "m.jsonc",
             "{\"corpus\": \"" + fixture("corpus").string() +
                 "\", \"targets\": [\"GPT-4o\", \"Gemini-1.5\"], \"baseline\": \"GPT-4o\","
                 " \"judge\": {\"provider\": \"GPT-4o\"}, \"selfself\": {\"candidates\": [\"GPT-4o\"]}}\n");
  auto transport = std::make_shared<FakeTransport>();
  auto key = [](const std::string&) { return std::optional<std::string>("test-key"); };
  const auto m = (tmp.path() / "m.jsonc").string();
  auto e = run({"-m", m, "evaluate", "--dry-run"}, transport, key);
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("planned units: 300 (3 tasks, 2 targets, 10 protocols)"), std::string::npos);
  auto g = run({"-m", m, "generate", "--dry-run"}, transport, key);
  EXPECT_NE(g.out.find("planned generations: 200"), std::string::npos);
  auto s = run({"-m", m, "selfself", "--dry-run"}, transport, key);
  EXPECT_NE(s.out.find("planned units: 50"), std::string::npos);
  auto mt = run({"-m", m, "--set", "metrics.n_runs=3", "metrics", "--dry-run"}, transport, key);
  EXPECT_NE(mt.out.find("planned units: 120"), std::string::npos);
  EXPECT_EQ(transport->calls(), 0u);
}

TEST(Cli, MissingKeyIsConfigError) {
  TempDir tmp;
  write_file(tmp.path() / "m.jsonc",
             "{\"corpus\": \"" + fixture("corpus").string() +
                 "\", \"targets\": [\"GPT-4o\"], \"baseline\": \"GPT-4o\", \"judge\": {\"provider\": \"GPT-4o\"},"
                 " \"results_dir\": \"" + (tmp.path() / "res").string() + "\"}\n");
  auto transport = std::make_shared<FakeTransport>();
  auto r = run({"-m", (tmp.path() / "m.jsonc").string(), "evaluate"}, transport);
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("OPENAI_API_KEY"), std::string::npos);
  EXPECT_EQ(transport->calls(), 0u);
}

TEST(Cli, AuthFailureIsRuntimeError) {
  TempDir tmp;
  write_file(tmp.path() / "m.jsonc",
             "{\"corpus\": \"" + fixture("corpus").string() +
                 "\", \"max_protocols\": 1, \"targets\": [\"GPT-4o\"], \"baseline\": \"GPT-4o\","
                 " \"results_dir\": \"" + (tmp.path() / "res").string() + "\"}\n");
  auto transport = std::make_shared<FakeTransport>(std::vector<providers::HttpResponse>(
      4, protoeval::testing::status(401, "{\"error\": {\"message\": \"bad key\"}}")));
  auto key = [](const std::string&) { return std::optional<std::string>("wrong"); };
  auto r = run({"-m", (tmp.path() / "m.jsonc").string(), "generate"}, transport, key);
  EXPECT_EQ(r.code, cli::kExitRuntime);
  EXPECT_EQ(transport->calls(), 1u);
  auto sent = transport->requests().at(0);
  EXPECT_NE(sent.url.find("api.openai.com"), std::string::npos);
}

TEST(Cli, MockPipelineIsReproducible) {
  TempDir tmp;
  const std::vector<std::string> common = {"-q", "-m", mock_manifest().string(), "--set",
                                           "results_dir=" + tmp.path().string(), "max_protocols=3"};
  auto with = [&](std::vector<std::string> tail) {
    auto args = common;
    args.insert(args.end(), tail.begin(), tail.end());
    return run(args);
  };
  for (const char* cmd : {"generate", "evaluate", "selfself", "metrics"}) {
    auto r = with({cmd});
    ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
  }
  const auto report_path = tmp.path() / "runs" / "mock" / "reports" / "report.json";
  const auto first = read_file(report_path);
  auto report = nlohmann::json::parse(first);
  EXPECT_TRUE(report.contains("task_matrix"));
  EXPECT_TRUE(report.contains("self_self"));
  EXPECT_TRUE(report.contains("reference_metrics"));
  EXPECT_EQ(report["config"]["max_protocols"], 3);

  auto rep = with({"report"});
  ASSERT_EQ(rep.code, 0) << rep.err;
  EXPECT_NE(rep.out.find("## Judge scores"), std::string::npos);
  EXPECT_NE(rep.out.find("sim-baseline (Baseline)"), std::string::npos);
  EXPECT_EQ(read_file(report_path), first);

  for (const char* cmd : {"evaluate", "selfself", "metrics"}) {
    auto r = with({"--force", cmd});
    ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
  }
  EXPECT_EQ(read_file(report_path), first);
}
