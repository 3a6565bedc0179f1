#include "pptdetect/traitnet.hpp"

#include <algorithm>
#include <set>

#include "pptdetect/csv.hpp"

namespace pptdetect::traitnet {

using nlohmann::json;

CharQuantization CharQuantization::standard(std::size_t max_len) {
  CharQuantization q;
  q.max_len = max_len;
  for (char32_t c = U'a'; c <= U'z'; ++c) q.alphabet.push_back(c);
  for (char32_t c = U'0'; c <= U'9'; ++c) q.alphabet.push_back(c);
  for (char c : std::string_view("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~")) q.alphabet.push_back(static_cast<char32_t>(c));
  q.alphabet.push_back(U' ');
  q.alphabet.push_back(U'\n');
  return q;
}

void CharQuantization::validate() const {
  if (max_len == 0) throw ValidationError("quantization max_len must be positive");
  if (alphabet.empty()) throw ValidationError("quantization alphabet is empty");
  std::set<char32_t> seen(alphabet.begin(), alphabet.end());
  if (seen.size() != alphabet.size()) throw ValidationError("quantization alphabet has repeated symbols");
}

int CharQuantization::index_of(char32_t cp) const {
  auto pos = alphabet.find(cp);
  return pos == std::u32string::npos ? -1 : static_cast<int>(pos);
}

nn::Tensor quantize_text(std::string_view text, const CharQuantization& q) {
  nn::Tensor m({q.alphabet.size(), q.max_len});
  std::u32string cps = utf8_decode(text);
  const std::size_t n = std::min(cps.size(), q.max_len);
  for (std::size_t t = 0; t < n; ++t) {
    int row = q.index_of(to_lower(cps[t]));
    if (row >= 0) m.values[static_cast<std::size_t>(row) * q.max_len + t] = 1.0;
  }
  return m;
}

std::string_view to_string(Backbone b) { return b == Backbone::kCharCnn ? "CHAR_CNN" : "EMBEDDING_HEAD"; }

Backbone parse_backbone(std::string_view s) {
  if (s == "CHAR_CNN" || s == "char_cnn") return Backbone::kCharCnn;
  if (s == "EMBEDDING_HEAD" || s == "embedding_head") return Backbone::kEmbeddingHead;
  throw ValidationError("unknown trait backbone '" + std::string(s) + "'");
}

json TraitNetConfig::to_json() const {
  json blocks = json::array();
  for (const auto& b : conv_blocks) {
    blocks.push_back({{"channels", b.channels}, {"kernel", b.kernel}, {"pool_width", b.pool_width},
                      {"pool_stride", b.pool_stride}});
  }
  return json{{"max_len", max_len},       {"conv_blocks", blocks},   {"cnn_hidden", cnn_hidden},
              {"head_hidden", head_hidden}, {"split_ratio", split_ratio}, {"train", train.to_json()}};
}

TraitNetConfig TraitNetConfig::from_json(const json& j) {
  TraitNetConfig c;
  c.max_len = j.value("max_len", c.max_len);
  if (j.contains("conv_blocks")) {
    c.conv_blocks.clear();
    for (const auto& b : j["conv_blocks"]) {
      ConvBlock blk;
      blk.channels = b.value("channels", blk.channels);
      blk.kernel = b.value("kernel", blk.kernel);
      blk.pool_width = b.value("pool_width", blk.pool_width);
      blk.pool_stride = b.value("pool_stride", blk.pool_stride);
      c.conv_blocks.push_back(blk);
    }
  }
  c.cnn_hidden = j.value("cnn_hidden", c.cnn_hidden);
  if (j.contains("head_hidden")) c.head_hidden = j["head_hidden"].get<std::vector<std::size_t>>();
  c.split_ratio = j.value("split_ratio", c.split_ratio);
  if (j.contains("train")) c.train = nn::TrainConfig::from_json(j["train"]);
  return c;
}

std::vector<nn::LayerSpec> trait_layers(Backbone backbone, const TraitNetConfig& config, std::size_t input_width,
                                        nn::Shape* input_shape) {
  std::vector<nn::LayerSpec> specs;
  if (backbone == Backbone::kCharCnn) {
    *input_shape = {input_width, config.max_len};
    std::size_t channels = input_width, length = config.max_len;
    for (const auto& b : config.conv_blocks) {
      if (length < b.kernel) throw ValidationError("char-cnn: sequence too short for kernel " + std::to_string(b.kernel));
      specs.push_back(nn::LayerSpec::conv1d(channels, b.channels, b.kernel));
      specs.push_back(nn::LayerSpec::relu());
      length = length - b.kernel + 1;
      channels = b.channels;
      std::size_t width = b.pool_width == 0 ? length : b.pool_width;
      std::size_t stride = b.pool_width == 0 ? length : b.pool_stride;
      if (width > 1 || stride > 1) {
        if (length < width) throw ValidationError("char-cnn: sequence too short for pool width " + std::to_string(width));
        specs.push_back(nn::LayerSpec::maxpool1d(width, stride));
        length = (length - width) / stride + 1;
      }
    }
    if (config.cnn_hidden > 0) {
      specs.push_back(nn::LayerSpec::dense(0, config.cnn_hidden));
      specs.push_back(nn::LayerSpec::relu());
    }
  } else {
    *input_shape = {input_width};
    for (std::size_t h : config.head_hidden) {
      specs.push_back(nn::LayerSpec::dense(0, h));
      specs.push_back(nn::LayerSpec::relu());
    }
  }
  specs.push_back(nn::LayerSpec::dense(0, 2));
  specs.push_back(nn::LayerSpec::softmax());
  return specs;
}

json TraitModel::to_json() const {
  json doc;
  doc["trait"] = trait_name(trait);
  doc["backbone"] = to_string(backbone);
  doc["network"] = nn::serialize_model(network);
  if (backbone == Backbone::kCharCnn) {
    doc["quantization"] = {{"alphabet", utf8_encode(quantization.alphabet)}, {"max_len", quantization.max_len}};
  } else {
    doc["embedding_dimension"] = embedding_dimension;
  }
  json hist = json::array();
  for (const auto& e : info.history) {
    hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_f1", e.val_f1},
                    {"val_accuracy", e.val_accuracy}});
  }
  doc["training"] = {{"seed", info.seed},           {"split_digest", info.split_digest},
                     {"n_train", info.n_train},     {"n_val", info.n_val},
                     {"positive_prior", info.positive_prior}, {"best_epoch", info.best_epoch},
                     {"best_val_f1", info.best_val_f1},       {"history", hist}};
  return doc;
}

TraitModel TraitModel::from_json(const json& doc) {
  try {
    TraitModel m;
    m.trait = parse_trait(doc.at("trait").get<std::string>());
    m.backbone = parse_backbone(doc.at("backbone").get<std::string>());
    m.network = nn::deserialize_model(doc.at("network"));
    if (m.backbone == Backbone::kCharCnn) {
      m.quantization.alphabet = utf8_decode(doc.at("quantization").at("alphabet").get<std::string>());
      m.quantization.max_len = doc.at("quantization").at("max_len").get<std::size_t>();
      m.quantization.validate();
    } else {
      m.embedding_dimension = doc.at("embedding_dimension").get<std::size_t>();
    }
    const auto& t = doc.at("training");
    m.info.seed = t.value("seed", std::uint64_t{0});
    m.info.split_digest = t.value("split_digest", std::string());
    m.info.n_train = t.value("n_train", std::size_t{0});
    m.info.n_val = t.value("n_val", std::size_t{0});
    m.info.positive_prior = t.value("positive_prior", 0.0);
    m.info.best_epoch = t.value("best_epoch", std::size_t{0});
    m.info.best_val_f1 = t.value("best_val_f1", 0.0);
    for (const auto& e : t.value("history", json::array())) {
      m.info.history.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                                e.at("val_loss").get<double>(), e.at("val_f1").get<double>(),
                                e.at("val_accuracy").get<double>()});
    }
    if (m.network.output_shape() != nn::Shape{2}) throw ValidationError("trait network must have exactly 2 outputs");
    return m;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("malformed trait model document: ") + e.what());
  }
}

namespace {

nn::Tensor model_input(const TraitModel& model, const corpus::EmailRecord& record,
                       const embeddings::EmbeddingTable* table) {
  if (model.backbone == Backbone::kCharCnn) return quantize_text(record.body, model.quantization);
  if (!table) throw ValidationError("embedding-head trait model needs an embedding table");
  if (!table->contains(record.id)) throw ValidationError("embedding table has no vector for '" + record.id + "'");
  const auto& v = table->at(record.id);
  return nn::Tensor({v.size()}, v);
}

}  // namespace

TraitModel train_trait_model(const std::vector<corpus::TraitAnnotation>& annotations,
                             const std::vector<corpus::EmailRecord>& records, Trait trait, Backbone backbone,
                             const TraitNetConfig& config, std::uint64_t seed, const embeddings::EmbeddingTable* table,
                             std::string* log) {
  std::map<std::string, const corpus::EmailRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;

  TraitModel model;
  model.trait = trait;
  model.backbone = backbone;
  if (backbone == Backbone::kCharCnn) {
    model.quantization = CharQuantization::standard(config.max_len);
  } else {
    if (!table) throw ValidationError("embedding-head trait model needs an embedding table");
    model.embedding_dimension = table->dimension;
  }

  std::vector<std::string> ids;
  std::vector<int> labels;
  std::size_t excluded_empty = 0;
  for (const auto& a : corpus::current_per_email(annotations)) {
    auto it = by_id.find(a.email_id);
    if (it == by_id.end()) throw ValidationError("annotation for unknown email '" + a.email_id + "'");
    if (backbone == Backbone::kCharCnn && it->second->body.empty()) {
      ++excluded_empty;
      continue;
    }
    if (backbone == Backbone::kEmbeddingHead && !table->contains(a.email_id)) {
      throw ValidationError("embedding table does not cover annotated email '" + a.email_id + "'");
    }
    ids.push_back(a.email_id);
    labels.push_back(a.value(trait) ? 0 : 1);
  }
  std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 0));
  const std::string name(trait_name(trait));
  if (positives == 0 || positives == labels.size()) {
    throw ValidationError("trait '" + name + "' has single-class training data (" + std::to_string(positives) + " of " +
                          std::to_string(labels.size()) + " positive)");
  }

  auto assignment = corpus::stratified_assign(ids, labels, config.split_ratio, derive_seed(seed, "trait-split/" + name));
  std::vector<nn::Tensor> train_x, val_x;
  std::vector<int> train_y, val_y;
  std::string digest_src;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    nn::Tensor x = model_input(model, *by_id[ids[i]], table);
    bool train = assignment.at(ids[i]) == corpus::Split::kTrain;
    digest_src += ids[i] + (train ? "=T;" : "=V;");
    (train ? train_x : val_x).push_back(std::move(x));
    (train ? train_y : val_y).push_back(labels[i]);
  }
  if (std::count(train_y.begin(), train_y.end(), 0) == 0 || std::count(train_y.begin(), train_y.end(), 1) == 0) {
    throw ValidationError("trait '" + name + "' training split is single-class");
  }

  nn::Shape input_shape;
  std::size_t width = backbone == Backbone::kCharCnn ? model.quantization.alphabet.size() : model.embedding_dimension;
  auto specs = trait_layers(backbone, config, width, &input_shape);
  nn::Network net = nn::Network::build(input_shape, specs, derive_seed(seed, "trait-init/" + name));
  nn::TrainConfig tc = config.train;
  tc.seed = derive_seed(seed, "trait-fit/" + name);
  nn::TrainResult fitted = nn::fit(std::move(net), train_x, train_y, val_x, val_y, {1.0, 1.0}, tc);

  model.network = std::move(fitted.best);
  model.info.seed = seed;
  model.info.split_digest = sha256_hex(digest_src);
  model.info.n_train = train_x.size();
  model.info.n_val = val_x.size();
  model.info.positive_prior = static_cast<double>(positives) / static_cast<double>(labels.size());
  model.info.best_epoch = fitted.best_epoch;
  model.info.best_val_f1 = fitted.best_val_f1;
  model.info.history = std::move(fitted.history);
  if (log) {
    *log += "trait " + name + ": " + format_fixed(100.0 * model.info.positive_prior, 2) + "% of " +
            std::to_string(labels.size()) + " annotated emails labeled positive; train " +
            std::to_string(model.info.n_train) + ", val " + std::to_string(model.info.n_val) +
            (excluded_empty ? ", " + std::to_string(excluded_empty) + " empty bodies excluded" : "") + "; best epoch " +
            std::to_string(model.info.best_epoch) + " (val F1 " + format_fixed(model.info.best_val_f1, 4) + ")\n";
  }
  return model;
}

double ppt_score_text(const TraitModel& model, std::string_view text) {
  if (model.backbone != Backbone::kCharCnn) throw ValidationError("text scoring requires a CHAR_CNN trait model");
  return model.network.forward(quantize_text(text, model.quantization)).values[kPresentUnit];
}

double ppt_score_embedding(const TraitModel& model, const std::vector<double>& embedding) {
  if (model.backbone != Backbone::kEmbeddingHead) {
    throw ValidationError("embedding scoring requires an EMBEDDING_HEAD trait model");
  }
  return model.network.forward(nn::Tensor({embedding.size()}, embedding)).values[kPresentUnit];
}

double ppt_score_one(const TraitModel& model, const corpus::EmailRecord& record, const embeddings::EmbeddingTable* table) {
  return model.network.forward(model_input(model, record, table)).values[kPresentUnit];
}

double PPTScore::get(Trait t) const {
  switch (t) {
    case Trait::kUrgency: return urgency;
    case Trait::kFear: return fear;
    case Trait::kDesire: return desire;
  }
  return 0.0;
}

void PPTScore::set(Trait t, double v) {
  switch (t) {
    case Trait::kUrgency: urgency = v; break;
    case Trait::kFear: fear = v; break;
    case Trait::kDesire: desire = v; break;
  }
}

ScoreMap score_corpus(const std::vector<const TraitModel*>& models, const std::vector<corpus::EmailRecord>& records,
                      const embeddings::EmbeddingTable* table) {
  std::array<const TraitModel*, 3> by_trait{};
  for (const TraitModel* m : models) {
    if (!m) continue;
    auto& slot = by_trait[static_cast<std::size_t>(m->trait)];
    if (slot) throw ValidationError("two models given for trait '" + std::string(trait_name(m->trait)) + "'");
    slot = m;
  }
  for (Trait t : kAllTraits) {
    if (!by_trait[static_cast<std::size_t>(t)]) {
      throw ValidationError("missing trait model for '" + std::string(trait_name(t)) + "'");
    }
  }
  if (by_trait[1]->backbone != by_trait[0]->backbone || by_trait[2]->backbone != by_trait[0]->backbone) {
    throw ValidationError("trait models must share one backbone");
  }
  ScoreMap out;
  for (const auto& r : records) {
    PPTScore s;
    for (Trait t : kAllTraits) s.set(t, ppt_score_one(*by_trait[static_cast<std::size_t>(t)], r, table));
    out[r.id] = s;
  }
  return out;
}

std::string format_scores(const ScoreMap& scores) {
  std::string out = "email_id,urgency,fear,desire\n";
  for (const auto& [id, s] : scores) {
    out += csv::format_row({id, format_fixed(s.urgency, 6), format_fixed(s.fear, 6), format_fixed(s.desire, 6)});
  }
  return out;
}

ScoreMap parse_scores(std::string_view text) {
  auto rows = csv::parse(text);
  if (rows.empty() || csv::format_row(rows[0].fields) != "email_id,urgency,fear,desire\n") {
    throw ParseError("score file must start with header email_id,urgency,fear,desire");
  }
  ScoreMap out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    if (f.size() != 4) throw ParseError("score file line " + std::to_string(rows[i].line) + ": expected 4 columns");
    PPTScore s{parse_double(f[1]), parse_double(f[2]), parse_double(f[3])};
    for (Trait t : kAllTraits) {
      if (!(s.get(t) >= 0.0 && s.get(t) <= 1.0)) {
        throw ParseError("score file line " + std::to_string(rows[i].line) + ": score outside [0,1]");
      }
    }
    out[f[0]] = s;
  }
  return out;
}

}  // namespace pptdetect::traitnet
