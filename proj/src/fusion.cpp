#include "pptdetect/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "pptdetect/csv.hpp"

namespace pptdetect::fusion {

using nlohmann::json;

std::vector<Trait> FusionConfig::appended_traits() const {
  std::vector<Trait> out;
  if (!include_ppt) return out;
  for (Trait t : kAllTraits) {
    if (std::find(trait_mask.begin(), trait_mask.end(), t) != trait_mask.end()) out.push_back(t);
  }
  return out;
}

void FusionConfig::validate() const {
  for (std::size_t h : hidden)
    if (h == 0) throw ValidationError("fusion hidden layer sizes must be positive");
}

json FusionConfig::to_json() const {
  json mask = json::array();
  for (Trait t : kAllTraits) {
    if (std::find(trait_mask.begin(), trait_mask.end(), t) != trait_mask.end()) mask.push_back(trait_name(t));
  }
  return json{{"include_ppt", include_ppt},
              {"trait_mask", mask},
              {"hidden", hidden},
              {"class_weighting", weighting == ClassWeighting::kNone ? "none" : "inverse_frequency"},
              {"seed", seed},
              {"train", train.to_json()}};
}

FusionConfig FusionConfig::from_json(const json& j) {
  FusionConfig c;
  c.include_ppt = j.value("include_ppt", c.include_ppt);
  if (j.contains("trait_mask")) {
    c.trait_mask.clear();
    for (const auto& t : j["trait_mask"]) c.trait_mask.push_back(parse_trait(t.get<std::string>()));
  }
  if (j.contains("hidden")) c.hidden = j["hidden"].get<std::vector<std::size_t>>();
  std::string w = j.value("class_weighting", std::string("none"));
  if (w == "none" || w == "NONE") c.weighting = ClassWeighting::kNone;
  else if (w == "inverse_frequency" || w == "INVERSE_FREQUENCY") c.weighting = ClassWeighting::kInverseFrequency;
  else throw ValidationError("unknown class_weighting '" + w + "'");
  c.seed = j.value("seed", c.seed);
  if (j.contains("train")) c.train = nn::TrainConfig::from_json(j["train"]);
  c.validate();
  return c;
}

FeatureVector build_features(const std::string& email_id, const std::vector<double>& embedding,
                             const traitnet::PPTScore* ppt, const FusionConfig& config) {
  FeatureVector fv;
  fv.email_id = email_id;
  fv.appended = config.appended_traits();
  fv.values = embedding;
  if (!fv.appended.empty()) {
    if (!ppt) throw ValidationError("PPT scores required but missing for '" + email_id + "'");
    for (Trait t : fv.appended) {
      double v = ppt->get(t);
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("PPT score outside [0,1] for '" + email_id + "'");
      fv.values.push_back(v);
    }
  }
  return fv;
}

std::array<double, 2> class_weights(std::size_t n_phish, std::size_t n_legit, ClassWeighting mode) {
  if (mode == ClassWeighting::kNone) return {1.0, 1.0};
  if (n_phish == 0 || n_legit == 0) throw ValidationError("class weights need both categories present");
  const double total = static_cast<double>(n_phish + n_legit);
  return {total / (2.0 * static_cast<double>(n_phish)), total / (2.0 * static_cast<double>(n_legit))};
}

json DetectorModel::to_json() const {
  json hist = json::array();
  for (const auto& e : history) {
    hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_f1", e.val_f1},
                    {"val_accuracy", e.val_accuracy}});
  }
  return json{{"network", nn::serialize_model(network)},
              {"fusion_config", config.to_json()},
              {"embedding_dimension", embedding_dimension},
              {"standardization", {{"mean", mean}, {"scale", scale}}},
              {"training",
               {{"class_weights", weights},
                {"split_digest", split_digest},
                {"best_epoch", best_epoch},
                {"best_val_f1", best_val_f1},
                {"history", hist}}}};
}

DetectorModel DetectorModel::from_json(const json& doc) {
  try {
    DetectorModel m;
    m.network = nn::deserialize_model(doc.at("network"));
    m.config = FusionConfig::from_json(doc.at("fusion_config"));
    m.embedding_dimension = doc.at("embedding_dimension").get<std::size_t>();
    m.mean = doc.at("standardization").at("mean").get<std::vector<double>>();
    m.scale = doc.at("standardization").at("scale").get<std::vector<double>>();
    const auto& t = doc.at("training");
    m.weights = t.at("class_weights").get<std::array<double, 2>>();
    m.split_digest = t.value("split_digest", std::string());
    m.best_epoch = t.value("best_epoch", std::size_t{0});
    m.best_val_f1 = t.value("best_val_f1", 0.0);
    for (const auto& e : t.value("history", json::array())) {
      m.history.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                           e.at("val_loss").get<double>(), e.at("val_f1").get<double>(),
                           e.at("val_accuracy").get<double>()});
    }
    const std::size_t width = m.embedding_dimension + m.config.appended_traits().size();
    if (m.mean.size() != m.embedding_dimension || m.scale.size() != m.embedding_dimension ||
        m.network.input_shape() != nn::Shape{width} || m.network.output_shape() != nn::Shape{2}) {
      throw ValidationError("detector document is internally inconsistent");
    }
    return m;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("malformed detector document: ") + e.what());
  }
}

namespace {

nn::Tensor standardized(const DetectorModel& m, const FeatureVector& fv) {
  if (fv.values.size() != m.input_width()) {
    throw ValidationError("feature width mismatch for '" + fv.email_id + "': expected " +
                          std::to_string(m.input_width()) + ", got " + std::to_string(fv.values.size()));
  }
  std::vector<double> v = fv.values;
  for (std::size_t i = 0; i < m.embedding_dimension; ++i) v[i] = (v[i] - m.mean[i]) / m.scale[i];
  const std::size_t n = v.size();
  return nn::Tensor({n}, std::move(v));
}

int target_of(corpus::Category c) {
  if (c == corpus::Category::kPhish) return static_cast<int>(kPhishUnit);
  if (c == corpus::Category::kLegit) return 1;
  throw ValidationError("detector training accepts only PHISH or LEGIT categories");
}

}  // namespace

DetectorModel train_detector(const LabeledFeatures& train, const LabeledFeatures& val, const FusionConfig& config,
                             const std::string& split_digest) {
  config.validate();
  if (train.features.empty() || train.features.size() != train.categories.size()) {
    throw ValidationError("detector training set is empty or inconsistent");
  }
  if (val.features.size() != val.categories.size()) throw ValidationError("detector validation set is inconsistent");
  const std::size_t width = train.features.front().values.size();
  const std::size_t n_ppt = config.appended_traits().size();
  if (width < n_ppt + 1) throw ValidationError("feature vectors too short for the configured traits");
  for (const auto* set : {&train, &val}) {
    for (const auto& fv : set->features) {
      if (fv.values.size() != width) {
        throw ValidationError("inconsistent feature width for '" + fv.email_id + "': expected " +
                              std::to_string(width) + ", got " + std::to_string(fv.values.size()));
      }
    }
  }
  std::size_t n_phish = 0, n_legit = 0;
  for (auto c : train.categories) (target_of(c) == 0 ? n_phish : n_legit)++;
  if (n_phish == 0 || n_legit == 0) throw ValidationError("detector training data contains a single category");

  DetectorModel model;
  model.config = config;
  model.embedding_dimension = width - n_ppt;
  model.split_digest = split_digest;
  model.weights = class_weights(n_phish, n_legit, config.weighting);

  const std::size_t d = model.embedding_dimension;
  model.mean.assign(d, 0.0);
  model.scale.assign(d, 0.0);
  const double n = static_cast<double>(train.features.size());
  for (const auto& fv : train.features)
    for (std::size_t i = 0; i < d; ++i) model.mean[i] += fv.values[i];
  for (double& m : model.mean) m /= n;
  for (const auto& fv : train.features)
    for (std::size_t i = 0; i < d; ++i) model.scale[i] += (fv.values[i] - model.mean[i]) * (fv.values[i] - model.mean[i]);
  for (double& s : model.scale) {
    s = std::sqrt(s / n);
    if (!(s > 1e-12)) s = 1.0;
  }

  std::vector<nn::LayerSpec> specs;
  for (std::size_t h : config.hidden) {
    specs.push_back(nn::LayerSpec::dense(0, h));
    specs.push_back(nn::LayerSpec::relu());
  }
  specs.push_back(nn::LayerSpec::dense(0, 2));
  specs.push_back(nn::LayerSpec::softmax());
  model.network = nn::Network::build({width}, specs, derive_seed(config.seed, "detector-init"));

  auto tensors = [&](const LabeledFeatures& set, std::vector<nn::Tensor>& xs, std::vector<int>& ys) {
    for (std::size_t i = 0; i < set.features.size(); ++i) {
      xs.push_back(standardized(model, set.features[i]));
      ys.push_back(target_of(set.categories[i]));
    }
  };
  std::vector<nn::Tensor> tx, vx;
  std::vector<int> ty, vy;
  tensors(train, tx, ty);
  tensors(val, vx, vy);
  nn::TrainConfig tc = config.train;
  tc.seed = derive_seed(config.seed, "detector-fit");
  auto fitted = nn::fit(model.network, tx, ty, vx, vy, {model.weights[0], model.weights[1]}, tc);
  model.network = std::move(fitted.best);
  model.best_epoch = fitted.best_epoch;
  model.best_val_f1 = fitted.best_val_f1;
  model.history = std::move(fitted.history);
  return model;
}

std::array<double, 2> predict_units(const DetectorModel& model, const FeatureVector& features) {
  nn::Tensor p = model.network.forward(standardized(model, features));
  return {p.values[0], p.values[1]};
}

std::vector<double> predict(const DetectorModel& model, const std::vector<FeatureVector>& features) {
  std::vector<double> out;
  out.reserve(features.size());
  for (const auto& fv : features) out.push_back(predict_units(model, fv)[kPhishUnit]);
  return out;
}

std::string format_predictions(const std::vector<std::string>& ids, const std::vector<double>& probabilities) {
  if (ids.size() != probabilities.size()) throw ValidationError("format_predictions: size mismatch");
  std::string out = "email_id,probability,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out += csv::format_row({ids[i], format_fixed(probabilities[i], 6), is_phish(probabilities[i]) ? "PHISH" : "LEGIT"});
  }
  return out;
}

}  // namespace pptdetect::fusion
