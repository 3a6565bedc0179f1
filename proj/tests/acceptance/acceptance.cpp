// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>

#include "oracles.hpp"
#include "pptdetect/balance.hpp"
#include "pptdetect/evalsuite.hpp"
#include "pptdetect/fusion.hpp"
#include "pptdetect/pipeline.hpp"
#include "pptdetect/synthcorpus.hpp"
#include "support.hpp"

using namespace pptdetect;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(const std::string& name, const std::function<std::string(bool&)>& check) {
  bool ok = false;
  std::string detail;
  try {
    detail = check(ok);
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  if (!ok) ++failures;
  std::cout << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : " (" + detail + ")") << std::endl;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<corpus::EmailRecord> records(std::size_t n_phish, std::size_t n_legit) {
  std::vector<corpus::EmailRecord> out;
  auto add = [&](corpus::Category c, std::size_t i) {
    corpus::EmailRecord r;
    r.source = corpus::Source::kIwspaNh;
    r.body = std::string(c == corpus::Category::kPhish ? "phish body " : "legit body ") + std::to_string(i);
    r.id = corpus::compute_id(r.source, std::nullopt, r.body);
    r.category = c;
    r.split = corpus::Split::kTrain;
    out.push_back(r);
  };
  for (std::size_t i = 0; i < n_phish; ++i) add(corpus::Category::kPhish, i);
  for (std::size_t i = 0; i < n_legit; ++i) add(corpus::Category::kLegit, i);
  return out;
}

/// Synthetic corpus (masked-text embeddings) plus the config used for the fusion comparison.
json fusion_config(const testutil::TempDir& dir) {
  synth::SynthOptions o;
  o.count = 2000;
  o.encoder.dimension = 64;
  synth::write_corpus(synth::generate(o), dir.file("corpus"), o.encoder);
  json doc{
      {"workspace", "ws"},
      {"corpora", {{{"path", "corpus/train.jsonl"}, {"format", "jsonl"}, {"source", "SYNTHETIC"}, {"role", "train"}},
                   {{"path", "corpus/test.jsonl"}, {"format", "jsonl"}, {"source", "SYNTHETIC"}, {"role", "test"}}}},
      {"labels", "corpus/labels.csv"},
      {"split_seeds", {11, 23, 47}},
      {"traits",
       {{"backbone", "CHAR_CNN"},
        {"config",
         {{"max_len", 640},
          {"conv_blocks", {{{"channels", 16}, {"kernel", 9}, {"pool_width", 0}, {"pool_stride", 0}}}},
          {"cnn_hidden", 0},
          {"train", {{"learning_rate", 0.01}, {"batch_size", 8}, {"max_epochs", 60}, {"patience", 15}}}}}}},
      {"embedding", {{"provider", "table"}, {"table", "corpus/embeddings.tsv"}}},
      {"fusion",
       {{"hidden", {64, 16}},
        {"train", {{"learning_rate", 0.001}, {"batch_size", 32}, {"max_epochs", 30}, {"patience", 5}}}}}};
  dir.write("config.json", doc.dump(2));
  return doc;
}

double mean_f1(const json& report, const std::string& arm) {
  for (const auto& a : report.at("arms"))
    if (a.at("arm") == arm) return a.at("summary").at("mean").at("f1").get<double>();
  throw Error("arm missing from report: " + arm);
}

}  // namespace

int main() {
  report("gradient check: 20 random networks, h=1e-5, relative 1e-4, under 60 s", [](bool& ok) {
    auto t0 = Clock::now();
    std::size_t compared = 0, bad = 0;
    double worst = 0.0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
      auto g = oracle::random_grad_case(derive_seed(2024, "grad/" + std::to_string(s)));
      auto r = oracle::check_gradients(g, 1e-5, 1e-4);
      compared += r.compared;
      bad += r.failures;
      worst = std::max(worst, r.worst_relative);
    }
    double secs = seconds_since(t0);
    ok = bad == 0 && compared > 0 && secs < 60.0;
    return std::to_string(compared) + " components, " + std::to_string(bad) + " off, " + fmt("%.1f s", secs);
  });

  report("metrics match brute force on 1000 random vectors; (8,2,2,88) gives F1 0.8", [](bool& ok) {
    Rng rng(5150);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::size_t n = 1 + rng.below(200);
      std::vector<bool> p(n), t(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = rng.uniform01() < 0.5;
        t[i] = rng.uniform01() < 0.3;
      }
      auto m = eval::metrics_from(eval::confusion(p, t));
      auto b = oracle::brute_confusion(p, t);
      if (std::abs(m.f1 - oracle::brute_f1(b)) > 1e-12 || std::abs(m.accuracy - oracle::brute_accuracy(b)) > 1e-12)
        ++mismatches;
    }
    auto ex = eval::metrics_from(eval::Confusion{8, 2, 2, 88});
    ok = mismatches == 0 && std::abs(ex.f1 - 0.8) < 1e-12 && std::abs(ex.accuracy - 0.96) < 1e-12;
    return std::to_string(mismatches) + " mismatches, F1 " + fmt("%.12f", ex.f1);
  });

  report("SMOTE samples lie on a base/neighbor segment, lambda recovered within 1e-9 over 100 runs", [](bool& ok) {
    Rng rng(77);
    std::size_t samples = 0, bad = 0;
    for (int run = 0; run < 100; ++run) {
      std::size_t n = 3 + rng.below(20), d = 1 + rng.below(8);
      std::size_t k = 1 + rng.below(std::min<std::size_t>(n - 1, 5));
      std::vector<std::vector<double>> pts(n, std::vector<double>(d));
      for (auto& p : pts)
        for (double& v : p) v = rng.uniform(-10, 10);
      for (const auto& s : balance::smote(pts, k, 1 + rng.below(40), rng.next_u64())) {
        ++samples;
        auto nb = oracle::brute_knn(pts, s.base, k);
        bool neighbor_ok = std::find(nb.begin(), nb.end(), s.neighbor) != nb.end();
        auto lam = oracle::recover_lambda(s.values, pts[s.base], pts[s.neighbor]);
        if (!neighbor_ok || !lam || std::abs(*lam - s.lambda) > 1e-9) ++bad;
      }
    }
    ok = bad == 0 && samples > 0;
    return std::to_string(samples) + " samples, " + std::to_string(bad) + " off";
  });

  report("feature width 771 for D=768, each masked trait removes one column", [](bool& ok) {
    std::vector<double> emb(768, 0.1);
    traitnet::PPTScore s{0.2, 0.5, 0.9};
    ok = fusion::build_features("x", emb, &s, fusion::FusionConfig{}).values.size() == 771;
    for (int mask = 0; mask < 8; ++mask) {
      fusion::FusionConfig c;
      c.trait_mask.clear();
      for (int t = 0; t < 3; ++t)
        if (mask & (1 << t)) c.trait_mask.push_back(static_cast<Trait>(t));
      ok = ok && fusion::build_features("x", emb, &s, c).values.size() == 768 + c.trait_mask.size();
    }
    fusion::FusionConfig none;
    none.include_ppt = false;
    ok = ok && fusion::build_features("x", emb, nullptr, none).values.size() == 768;
    return std::string();
  });

  report("centroid distance never shrinks when dimensions are appended (100 datasets)", [](bool& ok) {
    Rng rng(404);
    std::size_t bad = 0;
    for (int trial = 0; trial < 100; ++trial) {
      std::size_t d = 1 + rng.below(16), extra = 1 + rng.below(3);
      std::vector<std::vector<double>> a(1 + rng.below(30)), b(1 + rng.below(30));
      for (auto* set : {&a, &b})
        for (auto& v : *set) {
          v.resize(d);
          for (double& x : v) x = rng.uniform(-1, 1);
        }
      double base = eval::centroid_distance(a, b, eval::DistanceMetric::kEuclidean);
      if (std::abs(base - oracle::brute_centroid_euclidean(a, b)) > 1e-12) ++bad;
      for (auto* set : {&a, &b})
        for (auto& v : *set)
          for (std::size_t k = 0; k < extra; ++k) v.push_back(rng.uniform01());
      if (eval::centroid_distance(a, b, eval::DistanceMetric::kEuclidean) < base) ++bad;
    }
    ok = bad == 0;
    return std::to_string(bad) + " violations";
  });

  json fusion_report;
  testutil::TempDir fusion_dir;
  report("trait scores raise mean F1 by at least 5 points (2000 synthetic emails, 3 seeds, under 10 min)",
         [&](bool& ok) {
           auto t0 = Clock::now();
           json doc = fusion_config(fusion_dir);
           auto cfg = pipeline::RunConfig::from_json(doc, fusion_dir.path());
           fusion_report = pipeline::run_pipeline(cfg);
           double secs = seconds_since(t0);
           double with = mean_f1(fusion_report, "with_ppt"), without = mean_f1(fusion_report, "without_ppt");
           double gain = 100.0 * (with - without);
           ok = gain >= 5.0 && secs < 600.0;
           return fmt("with %.2f", 100 * with) + fmt(", without %.2f", 100 * without) + fmt(", gain %+.2f", gain) +
                  fmt(" points, %.1f s", secs);
         });

  report("80/20 stratified splits are deterministic and partition each class (3 seeds)", [](bool& ok) {
    auto recs = records(629, 5092);
    ok = true;
    std::set<std::string> digests;
    for (std::uint64_t seed : {11u, 23u, 47u}) {
      auto plan = corpus::make_split(recs, 0.8, seed);
      auto again = corpus::make_split(recs, 0.8, seed);
      ok = ok && plan.assignment == again.assignment && plan.assignment.size() == recs.size();
      std::size_t pt = 0, lt = 0, pv = 0, lv = 0;
      for (const auto& r : recs) {
        auto s = plan.assignment.at(r.id);
        bool phish = r.category == corpus::Category::kPhish;
        if (s == corpus::Split::kTrain) (phish ? pt : lt)++;
        else if (s == corpus::Split::kVal) (phish ? pv : lv)++;
      }
      ok = ok && pt == 503 && pv == 126 && lt == 4074 && lv == 1018;
      digests.insert(plan.digest());
    }
    ok = ok && digests.size() == 3;
    return std::string();
  });

  report("10% labeling sample of 629 phishing emails has 63 tasks", [](bool& ok) {
    auto recs = records(629, 500);
    auto ids = corpus::sample_for_trait_labeling(recs, 0.10, 9);
    std::set<std::string> phish;
    for (const auto& r : recs)
      if (r.category == corpus::Category::kPhish) phish.insert(r.id);
    ok = ids.size() == 63 && std::all_of(ids.begin(), ids.end(), [&](const auto& id) { return phish.count(id); });
    return std::to_string(ids.size()) + " tasks";
  });

  report("KDE integrates to 1 within 1e-2; score scatter CSV round-trips at 6 decimals", [](bool& ok) {
    Rng rng(88);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> s(1 + rng.below(300));
      double c = rng.uniform01(), w = std::pow(10.0, rng.uniform(-3, 0));
      for (double& x : s) x = std::clamp(c + w * rng.uniform(-1, 1), 0.0, 1.0);
      auto k = eval::kde_curve(s);
      worst = std::max(worst, std::abs(oracle::trapezoid(k.grid, k.densities) - 1.0));
    }
    std::vector<eval::ScatterRow> rows;
    for (int i = 0; i < 200; ++i) {
      traitnet::PPTScore s;
      for (Trait t : kAllTraits) s.set(t, std::round(rng.uniform01() * 1e6) / 1e6);
      rows.push_back({"e" + std::to_string(i), s, i % 3 ? corpus::Category::kLegit : corpus::Category::kPhish});
    }
    auto back = eval::parse_score_scatter(eval::export_score_scatter(rows));
    bool round = back.size() == rows.size();
    for (std::size_t i = 0; round && i < rows.size(); ++i)
      round = back[i].email_id == rows[i].email_id && back[i].score == rows[i].score &&
              back[i].category == rows[i].category;
    ok = worst <= 1e-2 && round;
    return fmt("worst integral error %.2e", worst);
  });

  report("McNemar (10,0) p = 2*0.5^10; paired t on identical arms p = 1", [](bool& ok) {
    double p = eval::mcnemar_exact(10, 0).p_value;
    std::vector<double> a{0.81, 0.84, 0.79};
    auto t = eval::paired_t(a, a);
    ok = std::abs(p - 2 * std::pow(0.5, 10)) <= 1e-12 && t.p_value == 1.0;
    return fmt("mcnemar p %.15f", p);
  });

  report("run-pipeline twice gives identical report digests", [&](bool& ok) {
    if (fusion_report.is_null()) throw Error("no first run to compare");
    json doc = json::parse(read_file(fusion_dir.file("config.json")));
    doc["workspace"] = "ws_second";
    auto second = pipeline::run_pipeline(pipeline::RunConfig::from_json(doc, fusion_dir.path()));
    ok = second.at("digest") == fusion_report.at("digest");
    return second.at("digest").get<std::string>().substr(0, 16);
  });

  report("runs without the labeling web front end built", [](bool& ok) {
    // Everything above links only the core library; nothing here needs node or a browser bundle.
    ok = true;
    return std::string();
  });

  std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
