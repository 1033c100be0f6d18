#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "protoeval/error.hpp"
#include "protoeval/manifest.hpp"
#include "test_support.hpp"

using namespace protoeval;
using namespace protoeval::manifest;
using nlohmann::json;
using protoeval::testing::TempDir;
using protoeval::testing::write_file;

TEST(Jsonc, Comments) {
  auto j = parse_jsonc("// lead\n{\"a\": 1, /* inline */ \"b\": [2]}\n", "x");
  EXPECT_EQ(j["a"], 1);
  EXPECT_EQ(j["b"][0], 2);
  try {
    parse_jsonc("{\"a\": }", "bad.jsonc");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.jsonc"), std::string::npos);
  }
}

TEST(Override, DottedKeysAndValueTypes) {
  json doc = {{"judge", {{"n_samples", 20}}}};
  apply_override(doc, "judge.n_samples=3");
  apply_override(doc, "judge.mode=sampling");
  apply_override(doc, "seed=42");
  apply_override(doc, "targets=[\"a\",\"b\"]");
  apply_override(doc, "embedder.kind=none");
  EXPECT_EQ(doc["judge"]["n_samples"], 3);
  EXPECT_EQ(doc["judge"]["mode"], "sampling");
  EXPECT_EQ(doc["seed"], 42);
  EXPECT_EQ(doc["targets"], json::array({"a", "b"}));
  EXPECT_EQ(doc["embedder"]["kind"], "none");
  EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(doc, "=1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "seed.x=1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "a..b=1"), ConfigError);
}

TEST(Manifest, Defaults) {
  auto m = parse_manifest(json::object(), "/base");
  EXPECT_EQ(m.run_id, "default");
  EXPECT_EQ(m.results_dir, std::filesystem::path("/base/results"));
  EXPECT_EQ(m.run_dir(), std::filesystem::path("/base/results/runs/default"));
  EXPECT_EQ(m.tasks.size(), 3u);
  EXPECT_EQ(m.tasks[0].n_runs, 5);
  EXPECT_EQ(m.judge.n_samples, 20);
  EXPECT_EQ(m.judge.max_semantic_retries, 5);
  EXPECT_EQ(m.embedder.kind, "hash");
  EXPECT_FALSE(m.providers.empty());
  EXPECT_EQ(m.provider("GPT-4o").model_id, "gpt-4o");
  EXPECT_THROW(m.provider("nope"), ConfigError);
}

TEST(Manifest, UnknownKeysRejected) {
  EXPECT_THROW(parse_manifest({{"sead", 1}}, "."), ConfigError);
  EXPECT_THROW(parse_manifest({{"targets", {"missing"}}}, "."), ConfigError);
  EXPECT_THROW(parse_manifest({{"judge", {{"provider", "missing"}}}}, "."), ConfigError);
}

TEST(Manifest, InvalidValues) {
  EXPECT_THROW(parse_manifest({{"workers", 0}}, "."), ConfigError);
  EXPECT_THROW(parse_manifest({{"n_runs", 0}}, "."), ConfigError);
  EXPECT_THROW(parse_manifest({{"run_id", "a/b"}}, "."), ConfigError);
  EXPECT_THROW(parse_manifest({{"judge", {{"max_semantic_retries", 4}}}}, "."), ConfigError);
  EXPECT_THROW(parse_manifest({{"judge", {{"mode", "vibes"}}}}, "."), ConfigError);
  EXPECT_THROW(parse_manifest({{"embedder", {{"kind", "http"}}}}, "."), ConfigError);
  EXPECT_THROW(parse_manifest({{"embedder", {{"kind", "magic"}}}}, "."), ConfigError);
  EXPECT_THROW(parse_manifest({{"metrics", {{"precision_recall_mode", "x"}}}}, "."), ConfigError);
  EXPECT_THROW(parse_manifest({{"curation", {{"min_score", 6}, {"max_score", 1}}}}, "."), ConfigError);
  EXPECT_THROW(parse_manifest({{"seed", "seven"}}, "."), ConfigError);
  EXPECT_THROW(parse_manifest({{"max_protocols", 0}}, "."), ConfigError);
}

TEST(Manifest, ProviderEntriesMergeByName) {
  json doc = {{"providers",
               {{{"name", "GPT-4o"}, {"max_parallel", 1}},
                {{"name", "local"}, {"dialect", "mock"}, {"mock", {{"kind", "echo"}}}}}},
              {"targets", {"GPT-4o", "local"}},
              {"baseline", "GPT-4o"}};
  auto m = parse_manifest(doc, ".");
  const auto& gpt = m.provider("GPT-4o");
  EXPECT_EQ(gpt.max_parallel, 1);
  EXPECT_EQ(gpt.model_id, "gpt-4o");
  EXPECT_EQ(gpt.api_key_env, "OPENAI_API_KEY");
  EXPECT_EQ(m.provider("local").dialect, "mock");
  EXPECT_EQ(m.targets, (std::vector<std::string>{"GPT-4o", "local"}));
  EXPECT_EQ(m.baseline, "GPT-4o");
}

TEST(Manifest, TasksInheritRunCount) {
  json doc = {{"n_runs", 2},
              {"tasks", {{{"name", "only"}, {"actions_in_generation", false}},
                         {{"name", "proto"}, {"baseline", "original_protocol"}, {"n_runs", 7}}}}};
  auto m = parse_manifest(doc, ".");
  ASSERT_EQ(m.tasks.size(), 2u);
  EXPECT_EQ(m.tasks[0].n_runs, 2);
  EXPECT_FALSE(m.tasks[0].actions_in_generation);
  EXPECT_EQ(m.tasks[1].n_runs, 7);
  EXPECT_TRUE(m.tasks[1].original_protocol());
  EXPECT_THROW(parse_manifest({{"tasks", json::array()}}, "."), ConfigError);
}

TEST(Manifest, LoadResolvesRelativePathsAndOverrides) {
  TempDir tmp;
  write_file(tmp.path() / "m.jsonc",
             "// test manifest\n{\n  \"corpus\": \"data/corpus.jsonl\",\n  \"seed\": 3, // trailing\n"
             "  \"run_id\": \"r1\"\n}\n");
  auto m = load_manifest(tmp.path() / "m.jsonc", {"seed=9", "judge.n_samples=4"});
  EXPECT_EQ(m.corpus, tmp.path() / "data/corpus.jsonl");
  EXPECT_EQ(m.seed, 9);
  EXPECT_EQ(m.judge.n_samples, 4);
  EXPECT_EQ(m.snapshot["seed"], 9);
  EXPECT_EQ(m.run_dir(), tmp.path() / "results" / "runs" / "r1");
  EXPECT_THROW(load_manifest(tmp.path() / "missing.jsonc"), ConfigError);
  EXPECT_THROW(load_manifest(tmp.path() / "m.jsonc", {"bogus=1"}), ConfigError);
}

TEST(Manifest, ShippedConfigsParse) {
  for (const char* name : {"mock.jsonc", "manifest.example.jsonc"}) {
    auto path = std::filesystem::path(PROTOEVAL_FIXTURES_DIR) / ".." / ".." / "configs" / name;
    SCOPED_TRACE(name);
    EXPECT_NO_THROW(load_manifest(path));
  }
}
