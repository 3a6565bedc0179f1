#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "support.hpp"

using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

/// Runs the CLI with stdout and stderr merged.
Run cli(const std::string& args) {
  std::string cmd = std::string(PPTDETECT_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("no-such-command").code, 2);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("ingest").code, 2);  // missing path
  EXPECT_EQ(cli("--help").code, 0);
}

TEST(Cli, ValidationErrorsExitOne) {
  pptdetect::testutil::TempDir dir;
  auto r = cli("sample-label -w " + q(dir.path() / "ws") + " --fraction 2");
  EXPECT_EQ(r.code, 1) << r.output;
  EXPECT_NE(r.output.find("error:"), std::string::npos);
  auto bad = dir.write("bad.csv", "body,label\n\"unterminated,phish\n");
  EXPECT_EQ(cli("ingest -w " + q(dir.path() / "ws") + " --format csv " + q(bad)).code, 1);
  EXPECT_EQ(cli("ingest -w " + q(dir.path() / "ws") + " --format csv --source NOPE " + q(bad)).code, 1);
}

TEST(Cli, IngestTwoRowCsv) {
  pptdetect::testutil::TempDir dir;
  auto p = dir.write("two.csv", "body,label\nverify your account,phish\nsee you at lunch,legit\n");
  auto r = cli("ingest -w " + q(dir.path() / "ws") + " --format csv --source IWSPA_NH " + q(p));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(read_json(dir.path() / "ws/manifest.json")["records"]["total"], 2);
}

TEST(Cli, SampleLabelSixtyThreeTasks) {
  pptdetect::testutil::TempDir dir;
  std::string text = "body,label\n";
  for (int i = 0; i < 629; ++i) text += "phishing body " + std::to_string(i) + ",phish\n";
  for (int i = 0; i < 300; ++i) text += "legit body " + std::to_string(i) + ",legit\n";
  auto p = dir.write("c.csv", text);
  auto ws = q(dir.path() / "ws");
  ASSERT_EQ(cli("ingest -w " + ws + " --format csv --source IWSPA_NH " + q(p)).code, 0);
  auto r = cli("sample-label -w " + ws + " --fraction 0.10");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("63 labeling tasks created"), std::string::npos) << r.output;
  EXPECT_EQ(read_json(dir.path() / "ws/labels/sample.json")["ids"].size(), 63u);
}

TEST(Cli, LabelsExportImportRoundTrip) {
  pptdetect::testutil::TempDir dir;
  auto p = dir.write("c.jsonl", "{\"body\":\"act now\",\"label\":\"phish\"}\n{\"body\":\"lunch\",\"label\":\"legit\"}\n");
  auto ws = q(dir.path() / "ws");
  ASSERT_EQ(cli("ingest -w " + ws + " " + q(p)).code, 0);
  auto records = [&] {
    std::ifstream in(dir.path() / "ws/corpora/records.jsonl");
    std::string line;
    std::vector<json> out;
    while (std::getline(in, line)) out.push_back(json::parse(line));
    return out;
  }();
  std::string phish_id;
  for (const auto& r : records)
    if (r["category"] == "PHISH") phish_id = r["id"];
  auto labels = dir.write("l.csv", "email_id,urgency,fear,desire,annotator,timestamp\n" + phish_id + ",1,0,1,me,7\n");
  auto imp = cli("labels-import -w " + ws + " " + q(labels));
  ASSERT_EQ(imp.code, 0) << imp.output;
  auto out = dir.file("out.csv");
  auto exp = cli("labels-export -w " + ws + " " + q(out));
  ASSERT_EQ(exp.code, 0) << exp.output;
  std::ifstream in(out);
  std::string all((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(all, "email_id,urgency,fear,desire,annotator,timestamp\n" + phish_id + ",1,0,1,me,7\n");
}

TEST(Cli, RunPipelineTwiceSameDigest) {
  pptdetect::testutil::TempDir dir;
  ASSERT_EQ(cli("synth-corpus --out " + q(dir.path() / "corpus") + " --count 300 --dimension 16").code, 0);
  json cfg{{"corpora", {{{"path", "corpus/train.jsonl"}, {"source", "SYNTHETIC"}},
                        {{"path", "corpus/test.jsonl"}, {"source", "SYNTHETIC"}, {"role", "test"}}}},
           {"labels", "corpus/labels.csv"},
           {"split_seeds", {1, 2}},
           {"traits",
            {{"config",
              {{"max_len", 128},
               {"conv_blocks", {{{"channels", 4}, {"kernel", 5}, {"pool_width", 0}, {"pool_stride", 0}}}},
               {"cnn_hidden", 0},
               {"train", {{"max_epochs", 3}}}}}}},
           {"embedding", {{"provider", "table"}, {"table", "corpus/embeddings.tsv"}}},
           {"fusion", {{"hidden", {8}}, {"train", {{"max_epochs", 3}}}}}};
  auto c = dir.write("c.json", cfg.dump(2));
  auto a = cli("run-pipeline -c " + q(c) + " -w " + q(dir.path() / "wa"));
  ASSERT_EQ(a.code, 0) << a.output;
  auto b = cli("run-pipeline -c " + q(c) + " -w " + q(dir.path() / "wb") + " --set fusion.seed=0");
  ASSERT_EQ(b.code, 0) << b.output;
  EXPECT_EQ(read_json(dir.path() / "wa/reports/report.json")["digest"],
            read_json(dir.path() / "wb/reports/report.json")["digest"]);
  auto changed = cli("run-pipeline -c " + q(c) + " -w " + q(dir.path() / "wc") + " --set fusion.seed=9");
  ASSERT_EQ(changed.code, 0) << changed.output;
  EXPECT_NE(read_json(dir.path() / "wa/reports/report.json")["config_digest"],
            read_json(dir.path() / "wc/reports/report.json")["config_digest"]);

  auto kde = cli("analyze -c " + q(c) + " -w " + q(dir.path() / "wa") + " kde --trait urgency --category PHISH");
  EXPECT_EQ(kde.code, 0) << kde.output;
  auto tokens = cli("analyze -c " + q(c) + " -w " + q(dir.path() / "wa") + " tokens --trait fear --top-k 5");
  EXPECT_EQ(tokens.code, 0) << tokens.output;
}
