#include "pptdetect/synthcorpus.hpp"

#include <filesystem>
#include <set>

#include <json.hpp>

namespace pptdetect::synth {

namespace {

const std::vector<std::string>& neutral_words() {
  static const std::vector<std::string> words{
      "meeting", "report",   "quarter",  "project",  "schedule", "team",     "budget",  "review",   "update",
      "document", "office",  "client",   "invoice",  "payment",  "service",  "account", "order",    "delivery",
      "message", "attached", "please",   "thanks",   "regards",  "tomorrow", "monday",  "friday",   "week",
      "agenda",  "notes",    "summary",  "draft",    "proposal", "contract", "details", "request",  "support",
      "customer", "policy",  "system",   "portal",   "online",   "email",    "link",    "website",  "login",
      "password", "form",    "check",    "confirm",  "verify",   "information", "records", "statement", "bank",
      "card",    "transfer", "balance",  "team",     "manager",  "department", "staff",  "colleague", "lunch",
      "call",    "phone",    "number",   "address",  "shipping", "package",  "tracking", "receipt", "copy",
      "file",    "folder",   "share",    "access",   "upload",   "download", "note",    "reminder", "calendar",
      "event",   "conference", "travel", "booking",  "hotel",    "flight",   "plan",    "goal",     "progress",
      "result",  "data",     "analysis", "chart",    "table",    "slide",    "deck",    "feedback", "question"};
  return words;
}

const std::vector<std::string>& glue_words() {
  static const std::vector<std::string> words{"the", "a", "our", "your", "this", "that", "for", "with",
                                              "about", "on", "in", "to", "and", "of", "from", "we", "you"};
  return words;
}

std::string pick(const std::vector<std::string>& v, Rng& rng) { return v[rng.below(v.size())]; }

std::string neutral_sentence(Rng& rng) {
  std::size_t n = 5 + rng.below(8);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s.push_back(' ');
    s += rng.below(3) == 0 ? pick(glue_words(), rng) : pick(neutral_words(), rng);
  }
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s + ".";
}

}  // namespace

const std::vector<std::vector<std::string>>& trait_phrases() {
  static const std::vector<std::vector<std::string>> phrases{
      {"act immediately", "respond within 24 hours", "urgent action required", "do it right now",
       "this offer expires today", "time is running out"},
      {"account will be suspended", "legal action will be taken", "unauthorized access was detected",
       "your account will be closed", "a security breach occurred", "you will lose access"},
      {"you have won a prize", "claim your free gift card", "exclusive cash reward", "you are eligible for a bonus",
       "get a free vacation", "win an iphone today"}};
  return phrases;
}

std::string mask_trait_phrases(std::string_view body) {
  std::string out(body);
  for (const auto& list : trait_phrases()) {
    for (const auto& p : list) {
      // Phrases are inserted as ", <phrase>"; removing the comma too restores the neutral sentence.
      for (const std::string& needle : {", " + p, p}) {
        std::size_t pos;
        while ((pos = out.find(needle)) != std::string::npos) out.erase(pos, needle.size());
      }
    }
  }
  return out;
}

SynthCorpus generate(const SynthOptions& o) {
  if (o.count < 10) throw ValidationError("synthetic corpus needs at least 10 emails");
  if (!(o.phish_fraction > 0.0 && o.phish_fraction < 1.0)) throw ValidationError("phish_fraction must be in (0,1)");
  if (!(o.test_fraction > 0.0 && o.test_fraction < 1.0)) throw ValidationError("test_fraction must be in (0,1)");
  if (o.min_sentences < 1 || o.max_sentences < o.min_sentences) throw ValidationError("bad sentence range");
  Rng rng(derive_seed(o.seed, "synth-corpus"));
  const auto n_phish = static_cast<std::size_t>(std::llround(o.phish_fraction * static_cast<double>(o.count)));
  std::vector<SynthEmail> all;
  std::set<std::string> seen;
  const double probs[3] = {o.p_urgency, o.p_fear, o.p_desire};
  for (std::size_t i = 0; i < o.count; ++i) {
    const bool phish = i < n_phish;
    SynthEmail e;
    int present[3] = {0, 0, 0};
    if (phish) {
      do {
        for (int t = 0; t < 3; ++t) present[t] = rng.uniform01() < probs[t] ? 1 : 0;
      } while (present[0] + present[1] + present[2] == 0);
    }
    std::string body;
    do {
      std::vector<std::string> sentences;
      std::size_t n = o.min_sentences + rng.below(o.max_sentences - o.min_sentences + 1);
      for (std::size_t s = 0; s < n; ++s) sentences.push_back(neutral_sentence(rng));
      for (int t = 0; t < 3; ++t) {
        if (!present[t]) continue;
        std::size_t k = 1 + rng.below(2);
        for (std::size_t j = 0; j < k; ++j) {
          std::size_t at = rng.below(sentences.size());
          std::string& s = sentences[at];
          s.pop_back();
          s += ", " + pick(trait_phrases()[static_cast<std::size_t>(t)], rng) + ".";
        }
      }
      body.clear();
      for (std::size_t s = 0; s < sentences.size(); ++s) body += (s ? (rng.below(3) == 0 ? "\n" : " ") : "") + sentences[s];
      body = corpus::normalize_text(body);
    } while (!seen.insert(body).second);
    e.record.source = corpus::Source::kSynthetic;
    e.record.body = body;
    e.record.category = phish ? corpus::Category::kPhish : corpus::Category::kLegit;
    e.record.id = corpus::compute_id(e.record.source, std::nullopt, body);
    e.masked_body = mask_trait_phrases(body);
    e.urgency = present[0];
    e.fear = present[1];
    e.desire = present[2];
    all.push_back(std::move(e));
  }
  // Stratified test holdout.
  std::vector<std::string> ids;
  std::vector<int> strata;
  for (const auto& e : all) {
    ids.push_back(e.record.id);
    strata.push_back(e.record.category == corpus::Category::kPhish ? 0 : 1);
  }
  auto assign = corpus::stratified_assign(ids, strata, 1.0 - o.test_fraction, derive_seed(o.seed, "synth-holdout"));
  SynthCorpus out;
  for (auto& e : all) {
    if (assign.at(e.record.id) == corpus::Split::kTrain) {
      e.record.split = corpus::Split::kTrain;
      out.train.push_back(std::move(e));
    } else {
      e.record.split = corpus::Split::kTest;
      out.test.push_back(std::move(e));
    }
  }
  return out;
}

std::vector<std::string> write_corpus(const SynthCorpus& corpus, const std::string& dir,
                                      const embeddings::NativeEncoderConfig& encoder) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto jsonl = [](const std::vector<SynthEmail>& emails) {
    std::string out;
    for (const auto& e : emails) {
      nlohmann::json obj{{"body", e.record.body}, {"label", e.record.category == corpus::Category::kPhish ? "phish" : "legit"}};
      out += obj.dump() + "\n";
    }
    return out;
  };
  std::vector<std::string> paths{(fs::path(dir) / "train.jsonl").string(), (fs::path(dir) / "test.jsonl").string(),
                                 (fs::path(dir) / "labels.csv").string(), (fs::path(dir) / "embeddings.tsv").string()};
  write_file_atomic(paths[0], jsonl(corpus.train));
  write_file_atomic(paths[1], jsonl(corpus.test));
  std::vector<corpus::TraitAnnotation> labels;
  for (const auto& e : corpus.train) {
    if (e.record.category == corpus::Category::kPhish) {
      labels.push_back({e.record.id, e.urgency, e.fear, e.desire, "synth", 0});
    }
  }
  corpus::export_trait_labels(labels, paths[2]);
  embeddings::EmbeddingTable table;
  table.dimension = encoder.dimension;
  for (const auto* part : {&corpus.train, &corpus.test}) {
    for (const auto& e : *part) table.vectors[e.record.id] = embeddings::native_encode(e.masked_body, encoder);
  }
  embeddings::save_embedding_table(table, paths[3]);
  return paths;
}

}  // namespace pptdetect::synth
