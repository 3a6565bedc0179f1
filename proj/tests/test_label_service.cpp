#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include <httplib.h>

#include "pptdetect/label_service.hpp"
#include "support.hpp"

using namespace pptdetect;
using namespace pptdetect::service;
using nlohmann::json;

namespace {

struct Fixture {
  testutil::TempDir dir;
  pipeline::Workspace ws{dir.path() / "ws"};
  std::vector<std::string> sample;
  std::string unsampled;

  Fixture() {
    std::vector<corpus::EmailRecord> recs;
    for (int i = 0; i < 12; ++i) {
      corpus::EmailRecord r;
      r.source = corpus::Source::kSynthetic;
      r.body = "Dear customer, message number " + std::to_string(i) + " needs attention.";
      r.id = corpus::compute_id(r.source, std::nullopt, r.body);
      r.category = corpus::Category::kPhish;
      r.split = corpus::Split::kTrain;
      recs.push_back(r);
    }
    ws.save_records(recs);
    for (int i = 0; i < 10; ++i) sample.push_back(recs[i].id);
    std::sort(sample.begin(), sample.end());
    ws.save_sample(sample, 1.0, 1);
    for (const auto& r : recs)
      if (std::find(sample.begin(), sample.end(), r.id) == sample.end()) unsampled = r.id;
  }
};

json body_of(const Response& r) { return json::parse(r.body); }

Response put(LabelService& s, const std::string& id, const std::string& body) {
  return s.handle("PUT", "/api/emails/" + id + "/traits", {}, body);
}

}  // namespace

TEST(LabelApi, PutThenGetEchoes) {
  Fixture fx;
  LabelService svc(fx.ws);
  const std::string& id = fx.sample[0];
  auto before = body_of(svc.handle("GET", "/api/emails/" + id, {}, ""));
  EXPECT_EQ(before["status"], "UNLABELED");
  EXPECT_EQ(before["total"], 10);
  auto r = put(svc, id, R"({"urgency":1,"fear":1,"desire":0})");
  ASSERT_EQ(r.status, 200) << r.body;
  auto got = body_of(svc.handle("GET", "/api/emails/" + id, {}, ""));
  EXPECT_EQ(got["status"], "LABELED");
  EXPECT_EQ(got["annotation"]["urgency"], 1);
  EXPECT_EQ(got["annotation"]["fear"], 1);
  EXPECT_EQ(got["annotation"]["desire"], 0);
}

TEST(LabelApi, ErrorStatuses) {
  Fixture fx;
  LabelService svc(fx.ws);
  const std::string& id = fx.sample[1];
  EXPECT_EQ(put(svc, id, R"({"urgency":2,"fear":0,"desire":0})").status, 400);
  EXPECT_EQ(put(svc, id, R"({"urgency":1,"fear":0})").status, 400);
  EXPECT_EQ(put(svc, id, "not json").status, 400);
  EXPECT_EQ(put(svc, id, R"({"urgency":1,"fear":0,"desire":0,"annotator":""})").status, 400);
  EXPECT_EQ(svc.handle("GET", "/api/emails/nope:123", {}, "").status, 404);
  EXPECT_EQ(svc.handle("GET", "/api/emails/" + fx.unsampled, {}, "").status, 409);
  EXPECT_EQ(put(svc, fx.unsampled, R"({"urgency":1,"fear":0,"desire":0})").status, 409);
  EXPECT_EQ(svc.handle("DELETE", "/api/emails/" + id, {}, "").status, 405);
  EXPECT_EQ(svc.handle("GET", "/api/unknown", {}, "").status, 404);
  EXPECT_EQ(svc.handle("GET", "/api/emails", {{"status", "bogus"}}, "").status, 400);
}

TEST(LabelApi, ListFiltersAndLimits) {
  Fixture fx;
  LabelService svc(fx.ws);
  put(svc, fx.sample[2], R"({"urgency":0,"fear":1,"desire":0})");
  auto unl = body_of(svc.handle("GET", "/api/emails", {{"status", "unlabeled"}}, ""));
  EXPECT_EQ(unl["matching"], 9);
  EXPECT_EQ(unl["total"], 10);
  auto lab = body_of(svc.handle("GET", "/api/emails", {{"status", "labeled"}}, ""));
  ASSERT_EQ(lab["tasks"].size(), 1u);
  EXPECT_EQ(lab["tasks"][0]["email_id"], fx.sample[2]);
  auto lim = body_of(svc.handle("GET", "/api/emails", {{"limit", "3"}}, ""));
  EXPECT_EQ(lim["tasks"].size(), 3u);
  EXPECT_EQ(lim["matching"], 10);
}

TEST(LabelApi, ProgressMarginals) {
  Fixture fx;
  LabelService svc(fx.ws);
  auto empty = body_of(svc.handle("GET", "/api/progress", {}, ""));
  EXPECT_EQ(empty["labeled"], 0);
  EXPECT_TRUE(empty["marginals"]["urgency"].is_null());
  for (int i = 0; i < 10; ++i) {
    json b{{"urgency", i < 8 ? 1 : 0}, {"fear", i < 5 ? 1 : 0}, {"desire", 0}};
    ASSERT_EQ(put(svc, fx.sample[i], b.dump()).status, 200);
  }
  auto p = body_of(svc.handle("GET", "/api/progress", {}, ""));
  EXPECT_EQ(p["labeled"], 10);
  EXPECT_EQ(p["percent"], 100.0);
  EXPECT_DOUBLE_EQ(p["marginals"]["urgency"].get<double>(), 0.8);
  EXPECT_DOUBLE_EQ(p["urgency_and_fear"].get<double>(), 0.5);
}

TEST(LabelApi, RepeatedSaveKeepsOneAnnotation) {
  Fixture fx;
  LabelService svc(fx.ws);
  const std::string& id = fx.sample[3];
  put(svc, id, R"({"urgency":1,"fear":0,"desire":1})");
  put(svc, id, R"({"urgency":1,"fear":0,"desire":1})");
  auto stored = fx.ws.load_labels();
  EXPECT_EQ(std::count_if(stored.begin(), stored.end(), [&](const auto& a) { return a.email_id == id; }), 1);
}

TEST(LabelApi, AcceptedWritesSurviveRestart) {
  Fixture fx;
  {
    LabelService svc(fx.ws);
    ASSERT_EQ(put(svc, fx.sample[4], R"({"urgency":0,"fear":0,"desire":1})").status, 200);
  }
  pipeline::Workspace reopened(fx.dir.path() / "ws");
  LabelService again(reopened);
  auto got = body_of(again.handle("GET", "/api/emails/" + fx.sample[4], {}, ""));
  EXPECT_EQ(got["annotation"]["desire"], 1);
}

TEST(LabelApi, ExportReimportsLosslessly) {
  Fixture fx;
  LabelService svc(fx.ws);
  put(svc, fx.sample[0], R"({"urgency":1,"fear":1,"desire":0,"annotator":"ann1"})");
  put(svc, fx.sample[5], R"({"urgency":0,"fear":1,"desire":1})");
  auto r = svc.handle("GET", "/api/export", {}, "");
  EXPECT_EQ(r.content_type.rfind("text/csv", 0), 0u);
  auto recs = fx.ws.load_records();
  auto imported = corpus::parse_trait_labels(r.body, &recs);
  EXPECT_EQ(imported.annotations, fx.ws.load_labels());
  EXPECT_EQ(imported.annotations.size(), 2u);
}

TEST(LabelHttp, RoundTripOverSocket) {
  Fixture fx;
  LabelService svc(fx.ws);
  int port = svc.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread server([&] { svc.listen(); });
  struct Join {
    LabelService& svc;
    std::thread& t;
    ~Join() {
      svc.stop();
      t.join();
    }
  } join{svc, server};
  for (int i = 0; i < 200 && !svc.listening(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));

  httplib::Client cli("127.0.0.1", port);
  const std::string& id = fx.sample[6];
  auto put_res = cli.Put("/api/emails/" + id + "/traits", R"({"urgency":1,"fear":1,"desire":0})", "application/json");
  ASSERT_TRUE(put_res);
  EXPECT_EQ(put_res->status, 200);
  auto get_res = cli.Get("/api/emails/" + id);
  ASSERT_TRUE(get_res);
  auto j = json::parse(get_res->body);
  EXPECT_EQ(j["annotation"]["urgency"], 1);
  EXPECT_EQ(j["annotation"]["fear"], 1);
  auto bad = cli.Put("/api/emails/" + id + "/traits", R"({"urgency":2,"fear":0,"desire":0})", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  auto list = cli.Get("/api/emails?status=labeled&limit=5");
  ASSERT_TRUE(list);
  EXPECT_EQ(json::parse(list->body)["matching"], 1);
}
