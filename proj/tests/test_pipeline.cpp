#include <gtest/gtest.h>

#include <cstdlib>

#include "pptdetect/pipeline.hpp"
#include "pptdetect/synthcorpus.hpp"
#include "support.hpp"

using namespace pptdetect;
using namespace pptdetect::pipeline;
using nlohmann::json;

namespace {

/// Small synthetic corpus plus a fast config over it.
json small_config(const testutil::TempDir& dir, std::size_t count = 400) {
  synth::SynthOptions o;
  o.count = count;
  o.encoder.dimension = 32;
  synth::write_corpus(synth::generate(o), dir.file("corpus"), o.encoder);
  return json{
      {"workspace", "ws"},
      {"corpora", {{{"path", "corpus/train.jsonl"}, {"format", "jsonl"}, {"source", "SYNTHETIC"}, {"role", "train"}},
                   {{"path", "corpus/test.jsonl"}, {"format", "jsonl"}, {"source", "SYNTHETIC"}, {"role", "test"}}}},
      {"labels", "corpus/labels.csv"},
      {"split_seeds", {11, 23}},
      {"traits",
       {{"backbone", "CHAR_CNN"},
        {"config",
         {{"max_len", 256},
          {"conv_blocks", {{{"channels", 8}, {"kernel", 9}, {"pool_width", 0}, {"pool_stride", 0}}}},
          {"cnn_hidden", 0},
          {"train", {{"learning_rate", 0.01}, {"batch_size", 8}, {"max_epochs", 8}, {"patience", 4}}}}}}},
      {"embedding", {{"provider", "table"}, {"table", "corpus/embeddings.tsv"}}},
      {"fusion", {{"hidden", {16}}, {"train", {{"learning_rate", 0.003}, {"max_epochs", 8}, {"patience", 4}}}}}};
}

}  // namespace

TEST(Workspace, LayoutAndManifest) {
  testutil::TempDir dir;
  Workspace ws(dir.path() / "w");
  for (const char* sub : {"corpora", "labels", "models", "scores", "embeddings", "reports"})
    EXPECT_TRUE(std::filesystem::is_directory(ws.path(sub))) << sub;
  EXPECT_EQ(ws.manifest()["records"]["total"], 0);
}

TEST(Workspace, ArtifactDigestsEnforced) {
  testutil::TempDir dir;
  Workspace ws(dir.path());
  ws.write_artifact("models/m.json", "{}", "digest-a");
  EXPECT_TRUE(ws.has_artifact("models/m.json"));
  EXPECT_EQ(ws.read_artifact("models/m.json", "digest-a"), "{}");
  EXPECT_THROW(ws.read_artifact("models/m.json", "digest-b"), ValidationError);
  EXPECT_THROW(ws.read_artifact("models/other.json", "digest-a"), ValidationError);
  dir.write("models/m.json", "{\"tampered\":1}");
  EXPECT_THROW(ws.read_artifact("models/m.json", "digest-a"), ValidationError);
}

TEST(Workspace, LabelsAndSamplePersist) {
  testutil::TempDir dir;
  {
    Workspace ws(dir.path());
    ws.save_labels({{"a", 1, 1, 0, "x", 5}});
    ws.save_sample({"a", "b"}, 0.1, 3);
  }
  Workspace again(dir.path());
  EXPECT_EQ(again.load_labels(), (std::vector<corpus::TraitAnnotation>{{"a", 1, 1, 0, "x", 5}}));
  EXPECT_EQ(again.load_sample(), (std::vector<std::string>{"a", "b"}));
}

TEST(Ingest, TwoRowCsvInManifest) {
  testutil::TempDir dir;
  auto p = dir.write("two.csv", "body,label\nverify your account,phish\nlunch tomorrow,legit\n");
  Workspace ws(dir.path() / "ws");
  CorpusSource src;
  src.path = p;
  src.format = corpus::Format::kCsv;
  src.source = corpus::Source::kIwspaNh;
  auto s = ingest(ws, src);
  EXPECT_EQ(s.added, 2u);
  EXPECT_EQ(ws.manifest()["records"]["total"], 2);
  auto again = ingest(ws, src);
  EXPECT_EQ(again.already_present, 2u);
  EXPECT_EQ(ws.manifest()["records"]["total"], 2);
  EXPECT_EQ(ws.manifest()["corpora"].size(), 1u);
}

TEST(Ingest, TestRoleMarksSplit) {
  testutil::TempDir dir;
  auto p = dir.write("t.jsonl", "{\"body\":\"x\",\"label\":\"phish\"}\n");
  Workspace ws(dir.path() / "ws");
  CorpusSource src;
  src.path = p;
  src.role = corpus::Split::kTest;
  ingest(ws, src);
  EXPECT_EQ(ws.load_records().at(0).split, corpus::Split::kTest);
}

TEST(Config, ValidationAndDigest) {
  testutil::TempDir dir;
  json doc = small_config(dir, 60);
  RunConfig c = RunConfig::from_json(doc, dir.path());
  EXPECT_TRUE(c.corpora[0].path.starts_with(dir.path().string()));
  std::string d = c.digest();
  c.workspace = "/elsewhere";
  EXPECT_EQ(c.digest(), d);
  c.fusion.hidden = {17};
  EXPECT_NE(c.digest(), d);

  json dup = doc;
  dup["split_seeds"] = {1, 1};
  EXPECT_THROW(RunConfig::from_json(dup, dir.path()), ValidationError);
  json missing = doc;
  missing["corpora"][0]["path"] = "nope.jsonl";
  EXPECT_THROW(RunConfig::from_json(missing, dir.path()), ValidationError);
  json bad = doc;
  bad["split_ratio"] = "x";
  EXPECT_THROW(RunConfig::from_json(bad, dir.path()), ValidationError);

  RunConfig round = RunConfig::from_json(RunConfig::from_json(doc, dir.path()).to_json());
  EXPECT_EQ(round.digest(), d);
}

TEST(Config, Overrides) {
  json doc{{"fusion", {{"hidden", {8}}}}};
  apply_override(doc, "fusion.seed=5");
  apply_override(doc, "balance.strategy=SMOTE");
  apply_override(doc, "split_seeds=[1,2,3]");
  EXPECT_EQ(doc["fusion"]["seed"], 5);
  EXPECT_EQ(doc["balance"]["strategy"], "SMOTE");
  EXPECT_EQ(doc["split_seeds"].size(), 3u);
  EXPECT_THROW(apply_override(doc, "novalue"), ValidationError);
}

TEST(Config, WorkspaceResolution) {
  EXPECT_EQ(resolve_workspace("/a/b"), std::filesystem::path("/a/b"));
  setenv("PPTDETECT_WORKSPACE", "/from/env", 1);
  EXPECT_EQ(resolve_workspace(""), std::filesystem::path("/from/env"));
  unsetenv("PPTDETECT_WORKSPACE");
  EXPECT_THROW(resolve_workspace(""), ValidationError);
}

TEST(Labels, SampleMustBeFullyLabeled) {
  std::vector<corpus::TraitAnnotation> all{{"a", 1, 0, 0, "x", 1}, {"c", 0, 1, 0, "x", 1}};
  auto s = sampled_annotations(all, {"a"});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].email_id, "a");
  EXPECT_THROW(sampled_annotations(all, {"a", "b"}), ValidationError);
}

TEST(Synth, MaskingRestoresNeutralText) {
  synth::SynthOptions o;
  o.count = 200;
  auto c = synth::generate(o);
  std::size_t phish = 0;
  for (const auto& e : c.train) {
    for (const auto& phrases : synth::trait_phrases())
      for (const auto& ph : phrases) EXPECT_EQ(e.masked_body.find(ph), std::string::npos);
    if (e.record.category == corpus::Category::kPhish) {
      ++phish;
      EXPECT_GE(e.urgency + e.fear + e.desire, 1);
    } else {
      EXPECT_EQ(e.masked_body, e.record.body);
    }
    EXPECT_EQ(e.masked_body.find(", ."), std::string::npos);
  }
  EXPECT_GT(phish, 0u);
  EXPECT_EQ(c.train.size() + c.test.size(), 200u);
}

TEST(RunPipeline, StructureAndDeterminism) {
  testutil::TempDir dir;
  json doc = small_config(dir);
  doc["evaluation"] = {{"ablation", true}, {"sweep_fractions", {0.5}}};
  RunConfig c = RunConfig::from_json(doc, dir.path());
  std::vector<std::string> stages;
  json r1 = run_pipeline(c, [&](const std::string& line) {
    if (line.size() > 2 && line.front() == '[' && line.back() == ']') stages.push_back(line);
  });
  EXPECT_EQ(stages.front(), "[ingest]");
  ASSERT_EQ(r1["arms"].size(), 2u);
  EXPECT_EQ(r1["arms"][0]["arm"], "with_ppt");
  EXPECT_EQ(r1["arms"][1]["arm"], "without_ppt");
  EXPECT_EQ(r1["arms"][0]["splits"].size(), 2u);
  EXPECT_TRUE(r1["significance"].contains("paired_t_f1"));
  EXPECT_TRUE(r1.contains("significance"));
  EXPECT_TRUE(r1.contains("ablation"));
  EXPECT_TRUE(r1.contains("sweep"));
  EXPECT_EQ(r1["ablation"]["rows"].size(), 3u);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "ws/reports/report.json"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "ws/models/detector_with_ppt_11.json"));

  // Same config, fresh workspace, and a rerun over the existing one.
  json r2 = run_pipeline(c);
  RunConfig moved = c;
  moved.workspace = (dir.path() / "ws2").string();
  json r3 = run_pipeline(moved);
  EXPECT_EQ(r1["digest"], r2["digest"]);
  EXPECT_EQ(r1["digest"], r3["digest"]);
}

TEST(RunPipeline, UnlabeledSampleFailsInLabelStage) {
  testutil::TempDir dir;
  json doc = small_config(dir, 100);
  dir.write("empty_labels.csv", std::string(corpus::kLabelsHeader) + "\n");
  doc["labels"] = "empty_labels.csv";
  RunConfig c = RunConfig::from_json(doc, dir.path());
  try {
    run_pipeline(c);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "labels");
  }
}
