#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "maskboard/cli.hpp"
#include "support/service_fixture.hpp"
#include "support/temp_dir.hpp"

namespace maskboard {
namespace {

const fs::path kFixtures = MASKBOARD_FIXTURES_DIR;
const fs::path kGolden = MASKBOARD_GOLDEN_DIR;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "maskboard");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// Compares against tests/golden/<name>.txt; MASKBOARD_UPDATE_GOLDEN=1 rewrites it.
void expect_golden(const std::string& name, const std::string& actual) {
  const fs::path path = kGolden / (name + ".txt");
  if (std::getenv("MASKBOARD_UPDATE_GOLDEN")) {
    atomic_write_file(path, actual);
    return;
  }
  ASSERT_TRUE(fs::exists(path)) << "missing golden file " << path;
  EXPECT_EQ(actual, read_file(path)) << "golden mismatch for " << name;
}

/// The full pipeline over the bundled fixtures. Returns stdout of each step.
std::vector<std::pair<std::string, std::string>> pipeline(const fs::path& project) {
  const std::string p = project.string();
  const std::string posts = (kFixtures / "posts.jsonl").string();
  const std::vector<std::pair<std::string, std::vector<std::string>>> steps = {
      {"ingest", {"-p", p, "ingest", "--in", posts, "--name", "forum"}},
      {"ingest_eval",
       {"-p", p, "ingest", "--in", (kFixtures / "eval_posts.jsonl").string(), "--name", "evalset"}},
      {"filter", {"-p", p, "filter", "--corpus", "forum", "--keyword", "PANIC"}},
      {"cohort",
       {"-p", p, "cohort", "--corpus", "forum", "--anxiety", "Anxiety", "--adhd", "ADHD",
        "--window-days", "183", "--name", "transition"}},
      {"label",
       {"-p", p, "label", "--corpus", "forum", "--labels", (kFixtures / "labels.jsonl").string(),
        "--name", "manual"}},
      {"label_eval",
       {"-p", p, "label", "--corpus", "evalset", "--labels",
        (kFixtures / "eval_labels.jsonl").string(), "--name", "evalset"}},
      {"split", {"-p", p, "split", "--dataset", "manual", "--test-frac", "0.25", "--seed", "7"}},
      {"balance", {"-p", p, "balance", "--dataset", "manual", "--seed", "3"}},
      {"train_nb",
       {"-p", p, "train", "--backend", "nb", "--dataset", "manual", "--seed", "1", "--name", "nb1"}},
      {"train_linear",
       {"-p", p, "train", "--backend", "linear", "--dataset", "manual", "--seed", "1", "--name",
        "lin1"}},
      {"eval", {"-p", p, "eval", "--model", "nb1", "--dataset", "evalset"}},
      {"classify", {"-p", p, "classify", "--model", "nb1", "--corpus", "forum", "--threshold", "0.5"}},
      {"explain", {"-p", p, "explain", "--model", "nb1", "--corpus", "forum", "--top-k", "5"}},
      {"expand", {"-p", p, "expand", "--model", "nb1", "--corpus", "forum"}},
      {"index",
       {"-p", p, "index", "--provider", "test", "--corpus", "forum", "--source", "phrases", "--dim",
        "16"}},
      {"index_explanations", {"-p", p, "index", "--provider", "test", "--corpus", "forum", "--dim", "16"}},
      {"theme_create",
       {"-p", p, "theme", "create", "--name", "Panic", "--member", "panic attacks", "--member",
        "woke up in a panic"}},
      {"theme_add", {"-p", p, "theme", "add", "--theme", "panic", "--member", "chest felt tight"}},
      {"theme_list", {"-p", p, "theme", "list"}},
      {"search", {"-p", p, "search", "--theme", "Panic", "--corpus", "forum", "--n", "3"}},
      {"search_json", {"-p", p, "search", "--theme", "panic", "--corpus", "forum", "--n", "2", "--json"}},
      {"review",
       {"-p", p, "review", "--theme", "panic", "--corpus", "forum", "--post", "p01", "--phrase",
        "Had panic attacks again", "--rank", "1", "--verdict", "match", "--at", "1700000000"}},
  };
  std::vector<std::pair<std::string, std::string>> outputs;
  EXPECT_EQ(run_cli({"-p", p, "init", "--name", "golden"}).code, 0);
  for (const auto& [name, args] : steps) {
    const auto r = run_cli(args);
    EXPECT_EQ(r.code, 0) << name << ": " << r.err;
    outputs.emplace_back(name, r.out);
  }
  return outputs;
}

TEST(Cli, PipelineGoldenOutputs) {
  testing::TempDir dir;
  for (const auto& [name, out] : pipeline(dir / "project")) expect_golden(name, out);
}

TEST(Cli, RerunsAreByteIdentical) {
  testing::TempDir dir;
  const auto a = pipeline(dir / "a");
  const auto b = pipeline(dir / "b");
  EXPECT_EQ(a, b);
  auto pa = Project::open(dir / "a");
  auto pb = Project::open(dir / "b");
  for (const auto kind : kAllKinds) {
    for (const auto& name : pa.list(kind)) {
      if (name.ends_with(".manifest")) continue;
      EXPECT_EQ(pa.hash_of(kind, name), pb.hash_of(kind, name)) << to_string(kind) << "/" << name;
    }
  }
}

TEST(Cli, EvalMatchesMetricExample) {
  testing::TempDir dir;
  pipeline(dir / "p");
  const auto r = run_cli({"-p", (dir / "p").string(), "eval", "--model", "nb1", "--dataset", "evalset"});
  EXPECT_NE(r.out.find("accuracy 0.7500"), std::string::npos);
  EXPECT_NE(r.out.find("f1 0.6667"), std::string::npos);
}

TEST(Cli, ExplainMarksOnlyThePanicPhrase) {
  testing::TempDir dir;
  pipeline(dir / "p");
  const auto set = get_explanations(Project::open(dir / "p"), "forum");
  const auto corpus = get_corpus(Project::open(dir / "p"), "forum");
  for (const auto& e : set.explanations) {
    const auto text = corpus.find(e.post_id)->text();
    if (ascii_lower(text).find("panic") == std::string::npos) continue;
    ASSERT_EQ(e.highlighted.size(), 1u) << e.post_id;
    EXPECT_NE(ascii_lower(e.phrases[e.highlighted[0]].text).find("panic"), std::string::npos);
  }
}

TEST(Cli, CompareMoldFixture) {
  testing::TempDir dir;
  const auto root = dir / "p";
  auto project = Project::init(root);
  create_theme(project, "mold");
  testing::append_counts(project, "mold", "lyme", 132, 300);
  testing::append_counts(project, "mold", "control", 59, 300);
  const auto r = run_cli({"-p", root.string(), "compare", "--theme", "mold", "--a", "lyme", "--b", "control"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mold  44.0  19.7"), std::string::npos);
  EXPECT_NE(r.out.find("p<0.01"), std::string::npos);
  expect_golden("compare", r.out);
  const auto tsv = run_cli({"-p", root.string(), "compare", "--theme", "mold", "--a", "lyme", "--b",
                            "control", "--format", "tsv"});
  expect_golden("compare_tsv", tsv.out);
}

TEST(Cli, ExitCodes) {
  testing::TempDir dir;
  const std::string p = (dir / "p").string();
  EXPECT_EQ(run_cli({"-p", p, "init"}).code, 0);
  EXPECT_EQ(run_cli({"-p", p, "init"}).code, 1);
  auto r = run_cli({"-p", p, "frobnicate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"-p", p, "split", "--dataset", "d"}).code, 2);          // seed is mandatory
  EXPECT_EQ(run_cli({"-p", p, "balance", "--dataset", "d"}).code, 2);
  EXPECT_EQ(run_cli({"-p", p, "train", "--backend", "nb", "--dataset", "d", "--name", "m"}).code, 2);
  EXPECT_EQ(run_cli({"-p", p, "train", "--backend", "svm", "--dataset", "d", "--seed", "1", "--name", "m"}).code, 2);
  EXPECT_EQ(run_cli({"-p", p, "ingest", "--in", "x", "--name", "y", "--bogus"}).code, 2);
  EXPECT_EQ(run_cli({"-p", p, "ingest", "--in", (dir / "missing.jsonl").string(), "--name", "y"}).code, 1);
  EXPECT_EQ(run_cli({"-p", p, "eval", "--model", "none", "--dataset", "none"}).code, 1);
  r = run_cli({"-p", p, "train", "--backend", "transformer", "--dataset", "none", "--seed", "1", "--name", "t"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(run_cli({"-p", (dir / "nowhere").string(), "theme", "list"}).code, 1);
}

TEST(Cli, HelpOnEveryVerbExitsZero) {
  const std::vector<std::vector<std::string>> verbs = {
      {"init"},   {"ingest"},  {"cohort"},  {"filter"}, {"label"},   {"split"},
      {"balance"}, {"train"},  {"eval"},    {"classify"}, {"explain"}, {"expand"},
      {"index"},  {"theme"},   {"theme", "create"}, {"theme", "list"}, {"theme", "add"},
      {"theme", "delete"}, {"review"}, {"search"}, {"compare"}, {"serve"}, {}};
  for (auto args : verbs) {
    args.push_back("--help");
    const auto r = run_cli(args);
    EXPECT_EQ(r.code, 0) << (args.size() > 1 ? args[0] : "top-level");
    EXPECT_NE(r.out.find("Usage"), std::string::npos);
  }
}

}  // namespace
}  // namespace maskboard
