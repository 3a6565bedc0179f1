#include "pptdetect/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "pptdetect/neuralcore.hpp"

namespace pptdetect::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve_path(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

std::string lower_copy(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string canonical(const json& j) { return nn::dump_canonical(j); }

json CorpusSource::to_json() const {
  return json{{"path", path},
              {"format", std::string(corpus::to_string(format))},
              {"source", std::string(corpus::to_string(source))},
              {"role", role == corpus::Split::kTest ? "test" : "train"},
              {"label", std::string(corpus::to_string(default_category))},
              {"origin", std::string(corpus::to_string(origin))}};
}

CorpusSource CorpusSource::from_json(const json& j, const fs::path& base) {
  CorpusSource c;
  c.path = resolve_path(j.at("path").get<std::string>(), base);
  c.format = corpus::parse_format(j.value("format", std::string("jsonl")));
  c.source = corpus::parse_source(j.value("source", std::string("OTHER")));
  std::string role = lower_copy(j.value("role", std::string("train")));
  if (role == "train") c.role = corpus::Split::kTrain;
  else if (role == "test") c.role = corpus::Split::kTest;
  else throw ValidationError("corpus role must be 'train' or 'test', got '" + role + "'");
  if (j.contains("label")) {
    bool ok = false;
    std::string label = j["label"].get<std::string>();
    c.default_category = corpus::map_label(label, &ok);
    if (!ok && label != "UNKNOWN") throw ValidationError("unrecognized corpus label '" + label + "'");
  }
  if (j.contains("origin")) c.origin = corpus::parse_origin(j["origin"].get<std::string>());
  return c;
}

json EmbeddingProvider::to_json() const {
  return json{{"provider", kind == Kind::kNative ? "native" : "table"},
              {"table", table_path},
              {"fallback_native", fallback_native},
              {"native", native.to_json()}};
}

EmbeddingProvider EmbeddingProvider::from_json(const json& j, const fs::path& base) {
  EmbeddingProvider p;
  std::string kind = lower_copy(j.value("provider", std::string("native")));
  if (kind == "native") p.kind = Kind::kNative;
  else if (kind == "table") p.kind = Kind::kTable;
  else throw ValidationError("embedding provider must be 'native' or 'table', got '" + kind + "'");
  p.table_path = resolve_path(j.value("table", std::string()), base);
  p.fallback_native = j.value("fallback_native", p.fallback_native);
  if (j.contains("native")) p.native = embeddings::NativeEncoderConfig::from_json(j["native"]);
  return p;
}

json EvaluationOptions::to_json() const {
  return json{{"arms", arms},
              {"ablation", ablation},
              {"sweep_fractions", sweep_fractions},
              {"sweep_single_trait", sweep_single_trait},
              {"significance", std::string(eval::to_string(significance))}};
}

EvaluationOptions EvaluationOptions::from_json(const json& j) {
  EvaluationOptions e;
  if (j.contains("arms")) e.arms = j["arms"].get<std::vector<std::string>>();
  e.ablation = j.value("ablation", e.ablation);
  if (j.contains("sweep_fractions")) e.sweep_fractions = j["sweep_fractions"].get<std::vector<double>>();
  e.sweep_single_trait = j.value("sweep_single_trait", e.sweep_single_trait);
  if (j.contains("significance")) e.significance = eval::parse_significance_test(j["significance"].get<std::string>());
  for (const auto& a : e.arms) {
    if (a != "with_ppt" && a != "without_ppt") throw ValidationError("unknown evaluation arm '" + a + "'");
  }
  return e;
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base) {
  try {
    RunConfig c;
    c.workspace = resolve_path(j.value("workspace", std::string()), base);
    for (const auto& s : j.value("corpora", json::array())) c.corpora.push_back(CorpusSource::from_json(s, base));
    c.labels_path = resolve_path(j.value("labels", std::string()), base);
    c.label_fraction = j.value("label_fraction", c.label_fraction);
    if (j.contains("split_seeds")) c.split_seeds = j["split_seeds"].get<std::vector<std::uint64_t>>();
    c.split_ratio = j.value("split_ratio", c.split_ratio);
    if (j.contains("traits")) {
      const auto& t = j["traits"];
      if (t.contains("backbone")) c.trait_backbone = traitnet::parse_backbone(t["backbone"].get<std::string>());
      if (t.contains("config")) c.traitnet = traitnet::TraitNetConfig::from_json(t["config"]);
    }
    if (j.contains("embedding")) c.embedding = EmbeddingProvider::from_json(j["embedding"], base);
    if (j.contains("fusion")) c.fusion = fusion::FusionConfig::from_json(j["fusion"]);
    if (j.contains("balance")) c.balance = balance::BalanceConfig::from_json(j["balance"]);
    if (j.contains("evaluation")) c.evaluation = EvaluationOptions::from_json(j["evaluation"]);
    c.validate();
    return c;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(std::string("invalid run config: ") + e.what());
  }
}

RunConfig RunConfig::load(const std::string& path) {
  json j = nn::parse_document(read_file(path));
  return from_json(j, fs::absolute(path).parent_path());
}

json RunConfig::to_json() const {
  json corpora_j = json::array();
  for (const auto& c : corpora) corpora_j.push_back(c.to_json());
  return json{{"workspace", workspace},
              {"corpora", corpora_j},
              {"labels", labels_path},
              {"label_fraction", label_fraction},
              {"split_seeds", split_seeds},
              {"split_ratio", split_ratio},
              {"traits", {{"backbone", std::string(traitnet::to_string(trait_backbone))}, {"config", traitnet.to_json()}}},
              {"embedding", embedding.to_json()},
              {"fusion", fusion.to_json()},
              {"balance", balance.to_json()},
              {"evaluation", evaluation.to_json()}};
}

void RunConfig::validate() const {
  if (split_seeds.empty()) throw ValidationError("split_seeds must not be empty");
  std::set<std::uint64_t> distinct(split_seeds.begin(), split_seeds.end());
  if (distinct.size() != split_seeds.size()) throw ValidationError("split_seeds must be distinct");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ValidationError("split_ratio must be in (0, 1)");
  if (!(label_fraction > 0.0 && label_fraction <= 1.0)) throw ValidationError("label_fraction must be in (0, 1]");
  for (const auto& c : corpora) {
    if (!fs::exists(c.path)) throw ValidationError("corpus path does not exist: '" + c.path + "'");
  }
  if (!labels_path.empty() && !fs::exists(labels_path)) {
    throw ValidationError("labels path does not exist: '" + labels_path + "'");
  }
  if (embedding.kind == EmbeddingProvider::Kind::kTable) {
    if (embedding.table_path.empty()) throw ValidationError("embedding provider 'table' needs a table path");
    if (!fs::exists(embedding.table_path)) {
      throw ValidationError("embedding table does not exist: '" + embedding.table_path + "'");
    }
  }
  if (evaluation.arms.empty()) throw ValidationError("evaluation needs at least one arm");
  for (double f : evaluation.sweep_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("sweep fractions must be in (0, 1]");
  }
}

std::string RunConfig::digest() const {
  json j = to_json();
  j.erase("workspace");
  return sha256_hex(canonical(j));
}

fs::path resolve_workspace(const std::string& flag) {
  if (!flag.empty()) return fs::path(flag);
  if (const char* env = std::getenv("PPTDETECT_WORKSPACE"); env && *env) return fs::path(env);
  throw ValidationError("no workspace given: pass --workspace or set PPTDETECT_WORKSPACE");
}

Workspace::Workspace(fs::path root) : root_(std::move(root)) {
  if (root_.empty()) throw ValidationError("workspace path is empty");
  for (const char* sub : {"corpora", "labels", "models", "scores", "embeddings", "reports"}) {
    fs::create_directories(root_ / sub);
  }
  if (!fs::exists(root_ / "manifest.json")) {
    write_file_atomic((root_ / "manifest.json").string(),
                      canonical(json{{"artifacts", json::object()}, {"corpora", json::array()},
                                     {"records", {{"total", 0}}}}));
  }
}

json Workspace::manifest() const { return nn::parse_document(read_file((root_ / "manifest.json").string())); }

void Workspace::update_manifest(const std::function<void(json&)>& edit) {
  json m = manifest();
  edit(m);
  write_file_atomic((root_ / "manifest.json").string(), canonical(m));
}

std::vector<corpus::EmailRecord> Workspace::load_records() const {
  fs::path p = root_ / "corpora" / "records.jsonl";
  if (!fs::exists(p)) return {};
  return corpus::records_from_jsonl(read_file(p.string()));
}

void Workspace::save_records(const std::vector<corpus::EmailRecord>& records) {
  write_file_atomic((root_ / "corpora" / "records.jsonl").string(), corpus::to_jsonl(records));
  std::map<std::string, std::size_t> by_cat, by_source, by_split;
  for (const auto& r : records) {
    by_cat[std::string(corpus::to_string(r.category))]++;
    by_source[std::string(corpus::to_string(r.source))]++;
    by_split[std::string(corpus::to_string(r.split))]++;
  }
  update_manifest([&](json& m) {
    m["records"] = json{{"total", records.size()}, {"by_category", by_cat}, {"by_source", by_source}, {"by_split", by_split}};
  });
}

void Workspace::write_artifact(const std::string& relative, std::string_view content, const std::string& config_digest) {
  fs::path p = root_ / relative;
  fs::create_directories(p.parent_path());
  write_file_atomic(p.string(), content);
  std::string hash = sha256_hex(content);
  update_manifest([&](json& m) { m["artifacts"][relative] = json{{"config_digest", config_digest}, {"sha256", hash}}; });
}

bool Workspace::has_artifact(const std::string& relative) const {
  json m = manifest();
  return m.contains("artifacts") && m["artifacts"].contains(relative) && fs::exists(root_ / relative);
}

std::string Workspace::read_artifact(const std::string& relative, const std::string& config_digest) const {
  json m = manifest();
  if (!m.contains("artifacts") || !m["artifacts"].contains(relative)) {
    throw ValidationError("artifact '" + relative + "' is not recorded in the workspace manifest");
  }
  const auto& entry = m["artifacts"][relative];
  std::string recorded = entry.at("config_digest").get<std::string>();
  if (recorded != config_digest) {
    throw ValidationError("artifact '" + relative + "' was produced under config digest " + recorded.substr(0, 12) +
                          ", current config digest is " + config_digest.substr(0, 12));
  }
  std::string content = read_file((root_ / relative).string());
  if (sha256_hex(content) != entry.at("sha256").get<std::string>()) {
    throw ValidationError("artifact '" + relative + "' does not match its recorded hash");
  }
  return content;
}

std::vector<corpus::TraitAnnotation> Workspace::load_labels() const {
  fs::path p = root_ / "labels" / "labels.csv";
  if (!fs::exists(p)) return {};
  return corpus::parse_trait_labels(read_file(p.string())).annotations;
}

void Workspace::save_labels(const std::vector<corpus::TraitAnnotation>& annotations) {
  corpus::export_trait_labels(annotations, (root_ / "labels" / "labels.csv").string());
}

std::vector<std::string> Workspace::load_sample() const {
  fs::path p = root_ / "labels" / "sample.json";
  if (!fs::exists(p)) throw ValidationError("no labeling sample in the workspace; run sample-label first");
  return nn::parse_document(read_file(p.string())).at("ids").get<std::vector<std::string>>();
}

void Workspace::save_sample(const std::vector<std::string>& ids, double fraction, std::uint64_t seed) {
  write_file_atomic((root_ / "labels" / "sample.json").string(),
                    canonical(json{{"fraction", fraction}, {"seed", seed}, {"ids", ids}, {"size", ids.size()}}));
}

IngestSummary ingest(Workspace& ws, const CorpusSource& source) {
  corpus::ParseOptions opts;
  opts.source = source.source;
  opts.origin = source.origin;
  opts.default_category = source.default_category;
  opts.split = source.role;
  IngestSummary s;
  s.result = corpus::parse_corpus(source.path, source.format, opts);
  s.parsed = s.result.records.size();
  auto records = ws.load_records();
  std::set<std::string> known;
  for (const auto& r : records) known.insert(r.id);
  for (auto& r : s.result.records) {
    if (known.insert(r.id).second) {
      records.push_back(r);
      ++s.added;
    } else {
      ++s.already_present;
    }
  }
  ws.save_records(records);
  json entry = source.to_json();
  entry["parsed"] = s.parsed;
  entry["added"] = s.added;
  entry["duplicates"] = s.result.duplicates;
  entry["skipped"] = s.result.skipped;
  entry["empty_bodies"] = s.result.empty_bodies;
  entry["unknown_labels"] = s.result.unknown_labels;
  // The manifest keeps one entry per corpus path.
  json m = ws.manifest();
  json list = json::array();
  for (const auto& e : m.value("corpora", json::array()))
    if (e.value("path", std::string()) != source.path) list.push_back(e);
  list.push_back(entry);
  m["corpora"] = list;
  write_file_atomic(ws.path("manifest.json").string(), canonical(m));
  return s;
}

std::vector<corpus::TraitAnnotation> sampled_annotations(const std::vector<corpus::TraitAnnotation>& all,
                                                         const std::vector<std::string>& sample) {
  std::set<std::string> wanted(sample.begin(), sample.end());
  std::vector<corpus::TraitAnnotation> out;
  std::set<std::string> covered;
  for (const auto& a : all) {
    if (wanted.count(a.email_id)) {
      out.push_back(a);
      covered.insert(a.email_id);
    }
  }
  if (covered.size() != wanted.size()) {
    std::string first;
    for (const auto& id : sample)
      if (!covered.count(id)) {
        first = id;
        break;
      }
    throw ValidationError(std::to_string(wanted.size() - covered.size()) + " of " + std::to_string(wanted.size()) +
                          " sampled emails have no trait labels (first: " + first + ")");
  }
  return out;
}

std::vector<traitnet::TraitModel> train_traits(const RunConfig& config, const std::vector<corpus::EmailRecord>& records,
                                               const std::vector<corpus::TraitAnnotation>& annotations,
                                               const embeddings::EmbeddingTable* table, const Log& log) {
  std::vector<traitnet::TraitModel> models;
  const std::uint64_t seed = derive_seed(config.split_seeds.front(), "traits");
  for (Trait t : kAllTraits) {
    std::string line;
    models.push_back(traitnet::train_trait_model(annotations, records, t, config.trait_backbone, config.traitnet, seed,
                                                 table, &line));
    if (log) log(line);
  }
  return models;
}

embeddings::EmbeddingTable resolve_embeddings(const RunConfig& config, const std::vector<corpus::EmailRecord>& records) {
  if (config.embedding.kind == EmbeddingProvider::Kind::kNative) {
    return embeddings::encode_records(records, config.embedding.native);
  }
  embeddings::EmbeddingTable table = embeddings::load_embedding_table(config.embedding.table_path);
  auto cov = embeddings::coverage_check(table, records);
  if (!cov.complete()) {
    if (!config.embedding.fallback_native) {
      throw ValidationError(std::to_string(cov.missing.size()) + " records have no vector in the embedding table (first: " +
                            cov.missing.front() + "); enable fallback_native to encode them natively");
    }
    table = embeddings::fill_missing(std::move(table), records, config.embedding.native);
  }
  for (const auto& id : cov.extra) table.vectors.erase(id);
  return table;
}

void build_splits(const RunConfig& config, Prepared& p, const Log& log) {
  p.splits.clear();
  p.generated.clear();
  bool has_test = std::any_of(p.records.begin(), p.records.end(), [](const auto& r) {
    return r.split == corpus::Split::kTest && r.category != corpus::Category::kUnknown;
  });
  if (!has_test && log) log("no test corpus: evaluating on the validation split");
  std::vector<const traitnet::TraitModel*> model_ptrs;
  for (const auto& m : p.trait_models) model_ptrs.push_back(&m);

  for (std::uint64_t seed : config.split_seeds) {
    corpus::SplitPlan plan = corpus::make_split(p.records, config.split_ratio, seed);
    std::vector<corpus::EmailRecord> recs = corpus::apply_split(p.records, plan);
    balance::ClassCounts counts;
    if (config.balance.strategy == balance::Strategy::kGenerated) {
      balance::BalanceConfig bc = config.balance;
      bc.seed = derive_seed(config.balance.seed, "generated/" + std::to_string(seed));
      auto added = balance::generate_for_balance(recs, bc);
      counts = added.counts;
      if (!added.added.empty()) {
        if (config.embedding.kind == EmbeddingProvider::Kind::kTable && !config.embedding.fallback_native) {
          throw ValidationError("generated emails need embeddings: enable fallback_native or use the native provider");
        }
        embeddings::NativeEncoderConfig enc = config.embedding.native;
        enc.dimension = p.table.dimension;
        for (const auto& r : added.added) p.table.vectors.emplace(r.id, embeddings::native_encode(r.body, enc));
        auto scored = traitnet::score_corpus(model_ptrs, added.added, &p.table);
        p.scores.insert(scored.begin(), scored.end());
        recs.insert(recs.end(), added.added.begin(), added.added.end());
      }
      if (log) {
        log("seed " + std::to_string(seed) + ": generated " + std::to_string(counts.synthetic) +
            " phishing emails (train phish " + std::to_string(counts.phish) + ", legit " + std::to_string(counts.legit) + ")");
      }
    }
    p.generated.push_back(counts);
    eval::SplitData sd;
    sd.seed = seed;
    sd.split_digest = plan.digest();
    for (const auto& r : recs) {
      if (r.category == corpus::Category::kUnknown) continue;
      const auto* e = &p.table.at(r.id);
      auto it = p.scores.find(r.id);
      const traitnet::PPTScore* s = it == p.scores.end() ? nullptr : &it->second;
      if (r.split == corpus::Split::kTrain) sd.train.add(r.id, r.category, e, s);
      else if (r.split == corpus::Split::kVal) sd.val.add(r.id, r.category, e, s);
      else if (r.split == corpus::Split::kTest) sd.test.add(r.id, r.category, e, s);
    }
    if (!has_test) sd.test = sd.val;
    if (sd.test.size() == 0) throw ValidationError("no labeled evaluation emails");
    p.splits.push_back(std::move(sd));
  }
}

json centroid_report(const Prepared& p, std::size_t /*embedding_dimension*/) {
  std::vector<std::vector<double>> pw, lw, po, lo;
  for (const auto& r : p.records) {
    if (r.split == corpus::Split::kTest || r.origin == corpus::Origin::kGenerated) continue;
    if (r.category == corpus::Category::kUnknown) continue;
    const auto& e = p.table.at(r.id);
    std::vector<double> with = e;
    const auto& s = p.scores.at(r.id);
    for (Trait t : kAllTraits) with.push_back(s.get(t));
    bool phish = r.category == corpus::Category::kPhish;
    (phish ? pw : lw).push_back(std::move(with));
    (phish ? po : lo).push_back(e);
  }
  json out = json::object();
  if (pw.empty() || lw.empty()) return out;
  for (auto [name, metric] : {std::pair{"euclidean", eval::DistanceMetric::kEuclidean},
                              std::pair{"manhattan", eval::DistanceMetric::kManhattan}}) {
    try {
      auto s = eval::centroid_separation(pw, lw, po, lo, metric);
      out[name] = json{{"with_ppt", s.with_ppt}, {"without_ppt", s.without_ppt}, {"ratio", s.ratio},
                       {"increase_percent", eval::format_percent(s.ratio)}};
    } catch (const ValidationError& e) {
      out[name] = json{{"error", e.what()}};
    }
  }
  return out;
}

Prepared load_prepared(const RunConfig& config, const Workspace& ws, bool need_scores) {
  const std::string digest = config.digest();
  Prepared p;
  p.records = ws.load_records();
  if (p.records.empty()) throw ValidationError("workspace holds no records; run ingest first");
  p.table = embeddings::parse_embedding_table(ws.read_artifact("embeddings/table.tsv", digest), "embeddings/table.tsv");
  auto cov = embeddings::coverage_check(p.table, p.records);
  if (!cov.complete()) {
    throw ValidationError("embedding artifact misses " + std::to_string(cov.missing.size()) + " records; rerun embed");
  }
  for (Trait t : kAllTraits) {
    std::string rel = "models/trait_" + std::string(trait_name(t)) + ".json";
    if (!ws.has_artifact(rel)) continue;
    p.trait_models.push_back(traitnet::TraitModel::from_json(nn::parse_document(ws.read_artifact(rel, digest))));
  }
  if (need_scores) p.scores = traitnet::parse_scores(ws.read_artifact("scores/ppt_scores.csv", digest));
  return p;
}

void apply_override(json& doc, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override must look like key=value: '" + assignment + "'");
  std::string key = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const std::exception&) {
    value = raw;
  }
  std::string pointer;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = key.find('.', start);
    pointer += "/" + key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  doc[json::json_pointer(pointer)] = value;
}

namespace {

template <typename F>
auto stage(const std::string& name, const Log& log, F&& f) {
  if (log) log("[" + name + "]");
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

json trait_info(const traitnet::TraitModel& m) {
  return json{{"trait", trait_name(m.trait)},
              {"backbone", std::string(traitnet::to_string(m.backbone))},
              {"n_train", m.info.n_train},
              {"n_val", m.info.n_val},
              {"positive_prior", m.info.positive_prior},
              {"best_epoch", m.info.best_epoch},
              {"best_val_f1", m.info.best_val_f1}};
}

}  // namespace

json run_pipeline(const RunConfig& config, const Log& log) {
  config.validate();
  if (config.workspace.empty()) throw ValidationError("run config has no workspace");
  const std::string digest = config.digest();
  Workspace ws(config.workspace);
  Prepared p;

  stage("ingest", log, [&] {
    for (const auto& src : config.corpora) {
      auto s = ingest(ws, src);
      if (log) log(src.path + ": " + std::to_string(s.parsed) + " parsed, " + std::to_string(s.added) + " added");
    }
    p.records = ws.load_records();
    if (p.records.empty()) throw ValidationError("workspace holds no records");
    return 0;
  });

  auto sample = stage("sample-label", log, [&] {
    auto ids = corpus::sample_for_trait_labeling(p.records, config.label_fraction, config.split_seeds.front());
    ws.save_sample(ids, config.label_fraction, config.split_seeds.front());
    if (log) log(std::to_string(ids.size()) + " emails sampled for trait labeling");
    return ids;
  });

  auto annotations = stage("labels", log, [&] {
    auto labels = ws.load_labels();
    if (!config.labels_path.empty()) {
      auto imported = corpus::import_trait_labels(config.labels_path, &p.records);
      labels.insert(labels.end(), imported.annotations.begin(), imported.annotations.end());
      labels = corpus::current_per_email(labels);
      ws.save_labels(labels);
    }
    auto used = sampled_annotations(labels, sample);
    if (log) log(corpus::summarize_labels(used).describe());
    return used;
  });

  stage("embeddings", log, [&] {
    p.table = resolve_embeddings(config, p.records);
    ws.write_artifact("embeddings/table.tsv", embeddings::format_embedding_table(p.table), digest);
    return 0;
  });

  stage("train-traits", log, [&] {
    p.trait_models = train_traits(config, p.records, annotations, &p.table, log);
    for (const auto& m : p.trait_models) {
      ws.write_artifact("models/trait_" + std::string(trait_name(m.trait)) + ".json", canonical(m.to_json()), digest);
    }
    return 0;
  });

  stage("score-ppt", log, [&] {
    std::vector<const traitnet::TraitModel*> ptrs;
    for (const auto& m : p.trait_models) ptrs.push_back(&m);
    p.scores = traitnet::score_corpus(ptrs, p.records, &p.table);
    ws.write_artifact("scores/ppt_scores.csv", traitnet::format_scores(p.scores), digest);
    return 0;
  });

  stage("split", log, [&] {
    build_splits(config, p, log);
    return 0;
  });

  std::vector<eval::EvalReport> reports;
  std::map<std::string, std::vector<bool>> pooled_correct;
  stage("train-detector", log, [&] {
    for (const auto& arm : config.evaluation.arms) {
      fusion::FusionConfig fc = config.fusion;
      fc.include_ppt = arm == "with_ppt";
      std::vector<eval::SplitEntry> entries;
      for (const auto& split : p.splits) {
        fusion::DetectorModel model;
        auto r = eval::run_arm(split, fc, config.balance, &model);
        ws.write_artifact("models/detector_" + arm + "_" + std::to_string(split.seed) + ".json",
                          canonical(model.to_json()), digest);
        entries.push_back(r.entry);
        auto& pool = pooled_correct[arm];
        pool.insert(pool.end(), r.correct.begin(), r.correct.end());
        if (log) {
          log(arm + " seed " + std::to_string(split.seed) + ": F1 " + eval::format_percent(r.entry.metrics.f1) +
              "%, accuracy " + eval::format_percent(r.entry.metrics.accuracy) + "%");
        }
      }
      reports.push_back(eval::make_report(arm, std::move(entries), digest));
    }
    return 0;
  });

  json report;
  report["config_digest"] = digest;
  report["config"] = [&] {
    json c = config.to_json();
    c.erase("workspace");
    return c;
  }();
  report["records"] = ws.manifest().at("records");
  report["label_sample"] = {{"size", sample.size()}, {"summary", corpus::summarize_labels(annotations).describe()}};
  report["trait_models"] = json::array();
  for (const auto& m : p.trait_models) report["trait_models"].push_back(trait_info(m));
  report["arms"] = json::array();
  for (const auto& r : reports) report["arms"].push_back(r.to_json());

  stage("evaluate", log, [&] {
    const eval::EvalReport* with = nullptr;
    const eval::EvalReport* without = nullptr;
    for (const auto& r : reports) (r.arm == "with_ppt" ? with : without) = &r;
    json sig = json::object();
    if (with && without && with->splits.size() >= 2) {
      std::vector<double> a, b;
      for (const auto& e : with->splits) a.push_back(e.metrics.f1);
      for (const auto& e : without->splits) b.push_back(e.metrics.f1);
      sig["paired_t_f1"] = eval::paired_t(a, b).to_json();
    }
    if (with && without) sig["mcnemar_exact_pooled"] = eval::mcnemar_exact(pooled_correct["with_ppt"], pooled_correct["without_ppt"]).to_json();
    sig["primary"] = std::string(eval::to_string(config.evaluation.significance));
    report["significance"] = sig;
    if (with && without) {
      report["f1_gain_points"] = 100.0 * (with->summary.mean.f1 - without->summary.mean.f1);
    }
    report["centroid_separation"] = centroid_report(p, p.table.dimension);
    return 0;
  });

  if (config.evaluation.ablation) {
    stage("ablate", log, [&] {
      auto table = eval::ablation_run(p.splits, config.fusion, config.balance);
      report["ablation"] = table.to_json();
      ws.write_artifact("reports/ablation.txt", table.format(), digest);
      return 0;
    });
  }
  if (!config.evaluation.sweep_fractions.empty()) {
    stage("sweep", log, [&] {
      auto curve = eval::proportion_sweep(p.splits, config.evaluation.sweep_fractions, config.fusion, config.balance,
                                          config.evaluation.sweep_single_trait);
      report["sweep"] = curve.to_json();
      ws.write_artifact("reports/sweep.txt", curve.format(), digest);
      return 0;
    });
  }

  report["digest"] = sha256_hex(canonical(report));
  ws.write_artifact("reports/report.json", canonical(report), digest);
  std::string text = eval::format_reports(reports);
  if (report.contains("f1_gain_points")) {
    text += "\nF1 gain with PPT: " + format_fixed(report["f1_gain_points"].get<double>(), 2) + " points\n";
  }
  text += "report digest: " + report["digest"].get<std::string>() + "\n";
  ws.write_artifact("reports/report.txt", text, digest);
  return report;
}

}  // namespace pptdetect::pipeline
