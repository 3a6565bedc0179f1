// Command-line front end for the trait-scoring phishing detection pipeline.

#include <csignal>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pptdetect/balance.hpp"
#include "pptdetect/corpus.hpp"
#include "pptdetect/embeddings.hpp"
#include "pptdetect/evalsuite.hpp"
#include "pptdetect/fusion.hpp"
#include "pptdetect/label_service.hpp"
#include "pptdetect/neuralcore.hpp"
#include "pptdetect/pipeline.hpp"
#include "pptdetect/synthcorpus.hpp"
#include "pptdetect/traitnet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pptdetect;

namespace {

struct Common {
  std::string workspace;
  std::string config;
  std::vector<std::string> overrides;
};

pipeline::RunConfig load_config(const Common& c) {
  json doc = json::object();
  fs::path base;
  if (!c.config.empty()) {
    doc = nn::parse_document(read_file(c.config));
    base = fs::absolute(c.config).parent_path();
  }
  for (const auto& o : c.overrides) pipeline::apply_override(doc, o);
  if (!c.workspace.empty()) doc["workspace"] = fs::absolute(c.workspace).string();
  auto cfg = pipeline::RunConfig::from_json(doc, base);
  if (cfg.workspace.empty()) cfg.workspace = pipeline::resolve_workspace("").string();
  return cfg;
}

pipeline::Workspace open_workspace(const Common& c) {
  if (!c.workspace.empty()) return pipeline::Workspace(c.workspace);
  if (!c.config.empty()) return pipeline::Workspace(load_config(c).workspace);
  return pipeline::Workspace(pipeline::resolve_workspace(""));
}

void add_common(CLI::App* app, Common& c, bool with_config) {
  app->add_option("--workspace,-w", c.workspace, "Workspace root (defaults to $PPTDETECT_WORKSPACE)");
  if (with_config) {
    app->add_option("--config,-c", c.config, "Run config JSON")->check(CLI::ExistingFile);
    app->add_option("--set", c.overrides, "Config override key.path=value (repeatable)");
  }
}

void say(const std::string& s) { std::cout << s << "\n"; }

std::vector<const traitnet::TraitModel*> model_ptrs(const pipeline::Prepared& p) {
  std::vector<const traitnet::TraitModel*> out;
  for (const auto& m : p.trait_models) out.push_back(&m);
  return out;
}

fusion::FusionConfig arm_config(const pipeline::RunConfig& cfg, const std::string& arm) {
  if (arm != "with_ppt" && arm != "without_ppt") throw ValidationError("arm must be with_ppt or without_ppt");
  fusion::FusionConfig fc = cfg.fusion;
  fc.include_ppt = arm == "with_ppt";
  return fc;
}

pipeline::Prepared prepared_with_splits(const pipeline::RunConfig& cfg, const pipeline::Workspace& ws) {
  auto p = pipeline::load_prepared(cfg, ws);
  pipeline::build_splits(cfg, p, [](const std::string& s) { std::cerr << s << "\n"; });
  return p;
}

service::LabelService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pptdetect: phishing detection with psychological trait scores"};
  app.require_subcommand(1);
  std::function<void()> action;

  // ingest
  Common ingest_c;
  pipeline::CorpusSource src;
  std::string ingest_format = "jsonl", ingest_source = "OTHER", ingest_role = "train", ingest_label, ingest_origin = "REAL";
  auto* ingest = app.add_subcommand("ingest", "Parse a corpus into the workspace record store");
  add_common(ingest, ingest_c, false);
  ingest->add_option("--format", ingest_format, "csv | jsonl | eml_dir | mbox");
  ingest->add_option("--source", ingest_source, "IWSPA_NH | IWSPA_H | UNIV_PHISH | SYNTHETIC | OTHER");
  ingest->add_option("--role", ingest_role, "train | test");
  ingest->add_option("--label", ingest_label, "Category for records without a label of their own");
  ingest->add_option("--origin", ingest_origin, "REAL | GENERATED");
  ingest->add_option("path", src.path, "Corpus file or directory")->required();
  ingest->callback([&] {
    action = [&] {
      json j{{"path", fs::absolute(src.path).string()}, {"format", ingest_format}, {"source", ingest_source},
             {"role", ingest_role}, {"origin", ingest_origin}};
      if (!ingest_label.empty()) j["label"] = ingest_label;
      auto source = pipeline::CorpusSource::from_json(j, {});
      auto ws = open_workspace(ingest_c);
      auto s = pipeline::ingest(ws, source);
      for (const auto& w : s.result.warnings) std::cerr << "warning: " << w << "\n";
      say("parsed " + std::to_string(s.parsed) + " records (" + std::to_string(s.added) + " new, " +
          std::to_string(s.result.duplicates) + " duplicates, " + std::to_string(s.result.skipped) + " skipped)");
      say("workspace records: " + std::to_string(ws.manifest()["records"]["total"].get<std::size_t>()));
    };
  });

  // sample-label
  Common sample_c;
  double fraction = 0.1;
  std::uint64_t sample_seed = 11;
  auto* sample = app.add_subcommand("sample-label", "Sample phishing training emails for trait labeling");
  add_common(sample, sample_c, false);
  sample->add_option("--fraction", fraction, "Fraction of phishing training emails")->capture_default_str();
  sample->add_option("--seed", sample_seed, "Sampling seed")->capture_default_str();
  sample->callback([&] {
    action = [&] {
      auto ws = open_workspace(sample_c);
      auto ids = corpus::sample_for_trait_labeling(ws.load_records(), fraction, sample_seed);
      ws.save_sample(ids, fraction, sample_seed);
      say(std::to_string(ids.size()) + " labeling tasks created");
    };
  });

  // label-serve
  Common serve_c;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("label-serve", "Serve the labeling HTTP API");
  add_common(serve, serve_c, false);
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();
  serve->callback([&] {
    action = [&] {
      auto ws = open_workspace(serve_c);
      service::LabelService svc(ws);
      g_service = &svc;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      int bound = svc.bind(host, port);
      std::cerr << "listening on http://" << host << ":" << bound << "\n";
      svc.listen();
      g_service = nullptr;
    };
  });

  // labels-import / labels-export
  Common limport_c, lexport_c;
  std::string labels_in, labels_out;
  auto* limport = app.add_subcommand("labels-import", "Import a trait labels CSV");
  add_common(limport, limport_c, false);
  limport->add_option("csv", labels_in, "Labels CSV")->required()->check(CLI::ExistingFile);
  limport->callback([&] {
    action = [&] {
      auto ws = open_workspace(limport_c);
      auto records = ws.load_records();
      auto imported = corpus::import_trait_labels(labels_in, &records);
      auto labels = ws.load_labels();
      labels.insert(labels.end(), imported.annotations.begin(), imported.annotations.end());
      ws.save_labels(corpus::current_per_email(labels));
      say(imported.summary.describe());
    };
  });
  auto* lexport = app.add_subcommand("labels-export", "Export the trait labels CSV");
  add_common(lexport, lexport_c, false);
  lexport->add_option("csv", labels_out, "Destination CSV")->required();
  lexport->callback([&] {
    action = [&] {
      auto ws = open_workspace(lexport_c);
      auto labels = ws.load_labels();
      corpus::export_trait_labels(labels, labels_out);
      say("exported " + std::to_string(labels.size()) + " annotations");
    };
  });

  // embed
  Common embed_c;
  auto* embed = app.add_subcommand("embed", "Resolve text embeddings for every record");
  add_common(embed, embed_c, true);
  embed->callback([&] {
    action = [&] {
      auto cfg = load_config(embed_c);
      pipeline::Workspace ws(cfg.workspace);
      auto table = pipeline::resolve_embeddings(cfg, ws.load_records());
      ws.write_artifact("embeddings/table.tsv", embeddings::format_embedding_table(table), cfg.digest());
      say("embedded " + std::to_string(table.vectors.size()) + " records, dimension " + std::to_string(table.dimension));
    };
  });

  // train-traits
  Common traits_c;
  auto* traits = app.add_subcommand("train-traits", "Train the three trait classifiers on the sampled labels");
  add_common(traits, traits_c, true);
  traits->callback([&] {
    action = [&] {
      auto cfg = load_config(traits_c);
      pipeline::Workspace ws(cfg.workspace);
      auto records = ws.load_records();
      auto annotations = pipeline::sampled_annotations(ws.load_labels(), ws.load_sample());
      std::optional<embeddings::EmbeddingTable> table;
      if (cfg.trait_backbone == traitnet::Backbone::kEmbeddingHead) {
        table = embeddings::parse_embedding_table(ws.read_artifact("embeddings/table.tsv", cfg.digest()));
      }
      auto models = pipeline::train_traits(cfg, records, annotations, table ? &*table : nullptr,
                                           [](const std::string& s) { say(s); });
      for (const auto& m : models) {
        ws.write_artifact("models/trait_" + std::string(trait_name(m.trait)) + ".json",
                          pipeline::canonical(m.to_json()), cfg.digest());
      }
    };
  });

  // score-ppt
  Common score_c;
  auto* score = app.add_subcommand("score-ppt", "Score every record with the trait classifiers");
  add_common(score, score_c, true);
  score->callback([&] {
    action = [&] {
      auto cfg = load_config(score_c);
      pipeline::Workspace ws(cfg.workspace);
      auto p = pipeline::load_prepared(cfg, ws, false);
      if (p.trait_models.size() != 3) throw ValidationError("trait models missing; run train-traits first");
      p.scores = traitnet::score_corpus(model_ptrs(p), p.records, &p.table);
      ws.write_artifact("scores/ppt_scores.csv", traitnet::format_scores(p.scores), cfg.digest());
      say("scored " + std::to_string(p.scores.size()) + " records");
    };
  });

  // train-detector
  Common det_c;
  std::uint64_t det_seed = 11;
  std::string det_arm = "with_ppt";
  auto* det = app.add_subcommand("train-detector", "Train one fusion detector for a split seed");
  add_common(det, det_c, true);
  det->add_option("--seed", det_seed, "Split seed")->capture_default_str();
  det->add_option("--arm", det_arm, "with_ppt | without_ppt")->capture_default_str();
  det->callback([&] {
    action = [&] {
      auto cfg = load_config(det_c);
      cfg.split_seeds = {det_seed};
      pipeline::Workspace ws(cfg.workspace);
      auto full = load_config(det_c);
      auto p = pipeline::load_prepared(full, ws);
      pipeline::build_splits(cfg, p, [](const std::string& s) { std::cerr << s << "\n"; });
      fusion::DetectorModel model;
      auto r = eval::run_arm(p.splits.front(), arm_config(cfg, det_arm), cfg.balance, &model);
      std::string rel = "models/detector_" + det_arm + "_" + std::to_string(det_seed) + ".json";
      ws.write_artifact(rel, pipeline::canonical(model.to_json()), full.digest());
      say(rel + ": F1 " + eval::format_percent(r.entry.metrics.f1) + "%, accuracy " +
          eval::format_percent(r.entry.metrics.accuracy) + "%");
    };
  });

  // predict
  Common pred_c;
  std::string pred_model, pred_out;
  bool pred_all = false;
  auto* pred = app.add_subcommand("predict", "Predict with a trained detector");
  add_common(pred, pred_c, true);
  pred->add_option("--model", pred_model, "Detector artifact path relative to the workspace")->required();
  pred->add_option("--out", pred_out, "Output CSV (default reports/predictions.csv)");
  pred->add_flag("--all", pred_all, "Predict every record instead of the test set");
  pred->callback([&] {
    action = [&] {
      auto cfg = load_config(pred_c);
      pipeline::Workspace ws(cfg.workspace);
      auto p = pipeline::load_prepared(cfg, ws);
      auto model = fusion::DetectorModel::from_json(nn::parse_document(ws.read_artifact(pred_model, cfg.digest())));
      std::vector<fusion::FeatureVector> features;
      std::vector<std::string> ids;
      for (const auto& r : p.records) {
        if (!pred_all && r.split != corpus::Split::kTest) continue;
        auto it = p.scores.find(r.id);
        features.push_back(fusion::build_features(r.id, p.table.at(r.id), it == p.scores.end() ? nullptr : &it->second,
                                                  model.config));
        ids.push_back(r.id);
      }
      std::string csv = fusion::format_predictions(ids, fusion::predict(model, features));
      std::string out = pred_out.empty() ? ws.path("reports/predictions.csv").string() : pred_out;
      write_file_atomic(out, csv);
      say("wrote " + std::to_string(ids.size()) + " predictions to " + out);
    };
  });

  // evaluate
  Common evalc;
  auto* evaluate = app.add_subcommand("evaluate", "Train and evaluate the configured arms across split seeds");
  add_common(evaluate, evalc, true);
  evaluate->callback([&] {
    action = [&] {
      auto cfg = load_config(evalc);
      pipeline::Workspace ws(cfg.workspace);
      auto p = prepared_with_splits(cfg, ws);
      std::vector<eval::EvalReport> reports;
      json j = json::array();
      for (const auto& arm : cfg.evaluation.arms) {
        std::vector<eval::SplitEntry> entries;
        for (const auto& s : p.splits) entries.push_back(eval::run_arm(s, arm_config(cfg, arm), cfg.balance).entry);
        reports.push_back(eval::make_report(arm, entries, cfg.digest()));
        j.push_back(reports.back().to_json());
      }
      std::string text = eval::format_reports(reports);
      ws.write_artifact("reports/evaluation.json", pipeline::canonical(json{{"arms", j}}), cfg.digest());
      ws.write_artifact("reports/evaluation.txt", text, cfg.digest());
      std::cout << text;
    };
  });

  // ablate
  Common abl_c;
  auto* ablate = app.add_subcommand("ablate", "Drop one trait at a time and report metric deltas");
  add_common(ablate, abl_c, true);
  ablate->callback([&] {
    action = [&] {
      auto cfg = load_config(abl_c);
      pipeline::Workspace ws(cfg.workspace);
      auto p = prepared_with_splits(cfg, ws);
      auto table = eval::ablation_run(p.splits, cfg.fusion, cfg.balance);
      ws.write_artifact("reports/ablation.json", pipeline::canonical(table.to_json()), cfg.digest());
      ws.write_artifact("reports/ablation.txt", table.format(), cfg.digest());
      std::cout << table.format();
    };
  });

  // sweep
  Common sweep_c;
  std::vector<double> fractions;
  bool single_trait = false;
  auto* sweep = app.add_subcommand("sweep", "Vary the training fraction with and without trait scores");
  add_common(sweep, sweep_c, true);
  sweep->add_option("--fractions", fractions, "Training fractions in (0,1]")->delimiter(',');
  sweep->add_flag("--single-trait", single_trait, "Add one arm per single trait");
  sweep->callback([&] {
    action = [&] {
      auto cfg = load_config(sweep_c);
      if (fractions.empty()) fractions = cfg.evaluation.sweep_fractions;
      if (fractions.empty()) fractions = {0.2, 0.4, 0.6, 0.8, 1.0};
      pipeline::Workspace ws(cfg.workspace);
      auto p = prepared_with_splits(cfg, ws);
      auto curve = eval::proportion_sweep(p.splits, fractions, cfg.fusion, cfg.balance,
                                          single_trait || cfg.evaluation.sweep_single_trait);
      ws.write_artifact("reports/sweep.json", pipeline::canonical(curve.to_json()), cfg.digest());
      ws.write_artifact("reports/sweep.txt", curve.format(), cfg.digest());
      std::cout << curve.format();
    };
  });

  // augment
  Common aug_c;
  std::size_t aug_count = 0;
  bool aug_merge = false;
  auto* augment = app.add_subcommand("augment", "Generate phishing text with a word-level Markov chain");
  add_common(augment, aug_c, true);
  augment->add_option("--count", aug_count, "Emails to generate (default: enough to reach the target ratio)");
  augment->add_flag("--merge", aug_merge, "Add the generated emails to the workspace records");
  augment->callback([&] {
    action = [&] {
      auto cfg = load_config(aug_c);
      pipeline::Workspace ws(cfg.workspace);
      auto records = ws.load_records();
      std::vector<std::string> texts;
      std::size_t phish = 0, legit = 0;
      for (const auto& r : records) {
        if (r.split == corpus::Split::kTest) continue;
        if (r.category == corpus::Category::kPhish) {
          ++phish;
          if (r.origin == corpus::Origin::kReal) texts.push_back(r.body);
        } else if (r.category == corpus::Category::kLegit) {
          ++legit;
        }
      }
      std::size_t n = aug_count ? aug_count : balance::synthetic_needed(legit, phish, cfg.balance.target_ratio);
      if (texts.empty()) throw ValidationError("no real phishing training text to learn from");
      auto model = balance::markov_train(texts, cfg.balance.markov_order, cfg.balance.seed);
      auto generated = balance::markov_generate(
          model, {n, cfg.balance.min_words, cfg.balance.max_words, derive_seed(cfg.balance.seed, "generate")});
      ws.write_artifact("corpora/generated.jsonl", corpus::to_jsonl(generated), cfg.digest());
      if (aug_merge) {
        records.insert(records.end(), generated.begin(), generated.end());
        ws.save_records(records);
      }
      say("generated " + std::to_string(generated.size()) + " phishing emails" + (aug_merge ? " (merged)" : ""));
    };
  });

  // analyze
  Common an_c;
  std::string an_trait = "urgency", an_category = "all";
  std::size_t top_k = 20;
  auto* analyze = app.add_subcommand("analyze", "Score distributions, scatter export, token counts, centroids");
  add_common(analyze, an_c, true);
  analyze->require_subcommand(1);
  auto* kde = analyze->add_subcommand("kde", "KDE curve of one trait's scores");
  kde->add_option("--trait", an_trait, "urgency | fear | desire")->capture_default_str();
  kde->add_option("--category", an_category, "PHISH | LEGIT | all")->capture_default_str();
  auto* scatter = analyze->add_subcommand("scatter", "CSV of all three scores per email");
  auto* tokens = analyze->add_subcommand("tokens", "Most frequent tokens among emails labeled with a trait");
  tokens->add_option("--trait", an_trait, "urgency | fear | desire")->capture_default_str();
  tokens->add_option("--top-k", top_k, "Entries to report")->capture_default_str();
  auto* centroids = analyze->add_subcommand("centroids", "Centroid separation with and without trait scores");
  analyze->callback([&] {
    action = [&] {
      auto cfg = load_config(an_c);
      pipeline::Workspace ws(cfg.workspace);
      const std::string digest = cfg.digest();
      if (*tokens) {
        Trait t = parse_trait(an_trait);
        std::set<std::string> positive;
        for (const auto& a : corpus::current_per_email(ws.load_labels()))
          if (a.value(t) == 1) positive.insert(a.email_id);
        std::vector<std::string> texts;
        for (const auto& r : ws.load_records())
          if (positive.count(r.id)) texts.push_back(r.body);
        auto ranked = eval::token_frequency(texts, eval::default_stopwords(), top_k);
        std::string csv = "token,count\n";
        for (const auto& [tok, n] : ranked) csv += tok + "," + std::to_string(n) + "\n";
        ws.write_artifact("reports/tokens_" + an_trait + ".csv", csv, digest);
        std::cout << csv;
        return;
      }
      auto p = pipeline::load_prepared(cfg, ws);
      if (*kde) {
        Trait t = parse_trait(an_trait);
        std::vector<double> values;
        for (const auto& r : p.records) {
          if (an_category != "all" && corpus::to_string(r.category) != an_category) continue;
          values.push_back(p.scores.at(r.id).get(t));
        }
        auto curve = eval::kde_curve(values);
        std::string rel = "reports/kde_" + an_trait + "_" + an_category + ".csv";
        ws.write_artifact(rel, curve.to_csv(), digest);
        say(rel + ": " + std::to_string(values.size()) + " scores, bandwidth " + format_fixed(curve.bandwidth, 6) +
            (curve.degenerate ? " (degenerate)" : "") + ", integral " + format_fixed(curve.integral(), 4));
      } else if (*scatter) {
        std::vector<eval::ScatterRow> rows;
        for (const auto& r : p.records) rows.push_back({r.id, p.scores.at(r.id), r.category});
        ws.write_artifact("reports/scatter.csv", eval::export_score_scatter(rows), digest);
        say("reports/scatter.csv: " + std::to_string(rows.size()) + " rows");
      } else if (*centroids) {
        json j = pipeline::centroid_report(p, p.table.dimension);
        ws.write_artifact("reports/centroids.json", pipeline::canonical(j), digest);
        std::cout << j.dump(2) << "\n";
      }
    };
  });

  // run-pipeline
  Common run_c;
  auto* run = app.add_subcommand("run-pipeline", "Run the full flow from a config");
  add_common(run, run_c, true);
  run->callback([&] {
    action = [&] {
      auto cfg = load_config(run_c);
      auto report = pipeline::run_pipeline(cfg, [](const std::string& s) { std::cerr << s << "\n"; });
      std::cout << read_file((fs::path(cfg.workspace) / "reports" / "report.txt").string());
    };
  });

  // synth-corpus
  std::string synth_out;
  synth::SynthOptions synth_opts;
  std::size_t synth_dim = 64;
  auto* synthc = app.add_subcommand("synth-corpus", "Write a synthetic corpus with trait phrases");
  synthc->add_option("--out", synth_out, "Output directory")->required();
  synthc->add_option("--count", synth_opts.count, "Emails")->capture_default_str();
  synthc->add_option("--seed", synth_opts.seed, "Seed")->capture_default_str();
  synthc->add_option("--phish-fraction", synth_opts.phish_fraction, "Phishing share")->capture_default_str();
  synthc->add_option("--dimension", synth_dim, "Embedding dimension of the masked-text table")->capture_default_str();
  synthc->callback([&] {
    action = [&] {
      synth_opts.encoder.dimension = synth_dim;
      auto corpus = synth::generate(synth_opts);
      for (const auto& p : synth::write_corpus(corpus, synth_out, synth_opts.encoder)) say("wrote " + p);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (action) action();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
