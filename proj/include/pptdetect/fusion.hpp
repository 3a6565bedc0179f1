#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pptdetect/corpus.hpp"
#include "pptdetect/neuralcore.hpp"
#include "pptdetect/traitnet.hpp"

namespace pptdetect::fusion {

/// Detector output unit holding the phishing probability.
inline constexpr std::size_t kPhishUnit = 0;

enum class ClassWeighting { kNone, kInverseFrequency };

struct FusionConfig {
  bool include_ppt = true;
  /// Traits appended, always in urgency, fear, desire order regardless of listing order.
  std::vector<Trait> trait_mask{Trait::kUrgency, Trait::kFear, Trait::kDesire};
  std::vector<std::size_t> hidden{128, 32};
  ClassWeighting weighting = ClassWeighting::kNone;
  std::uint64_t seed = 0;
  nn::TrainConfig train;

  /// Traits actually appended, in canonical order (empty when include_ppt is false).
  std::vector<Trait> appended_traits() const;
  void validate() const;
  nlohmann::json to_json() const;
  static FusionConfig from_json(const nlohmann::json& j);
};

struct FeatureVector {
  std::string email_id;
  std::vector<double> values;
  std::vector<Trait> appended;
};

/// embedding followed by the selected PPT scores. Masked traits are omitted.
FeatureVector build_features(const std::string& email_id, const std::vector<double>& embedding,
                             const traitnet::PPTScore* ppt, const FusionConfig& config);

/// Per-class weights (phish, legit): N / (2 * N_c) for kInverseFrequency, 1 otherwise.
std::array<double, 2> class_weights(std::size_t n_phish, std::size_t n_legit, ClassWeighting mode);

struct DetectorModel {
  nn::Network network;
  FusionConfig config;
  std::size_t embedding_dimension = 0;
  /// Standardization of the embedding part, fitted on training features.
  std::vector<double> mean;
  std::vector<double> scale;
  std::array<double, 2> weights{1.0, 1.0};
  std::string split_digest;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  std::vector<nn::EpochMetrics> history;

  std::size_t input_width() const { return network.input_shape().at(0); }
  nlohmann::json to_json() const;
  static DetectorModel from_json(const nlohmann::json& doc);
};

struct LabeledFeatures {
  std::vector<FeatureVector> features;
  std::vector<corpus::Category> categories;
};

/// Trains the fully connected detector; the best validation-F1 epoch is kept.
/// Only PHISH/LEGIT categories are accepted.
DetectorModel train_detector(const LabeledFeatures& train, const LabeledFeatures& val, const FusionConfig& config,
                             const std::string& split_digest = {});

/// Phishing probability per feature vector.
std::vector<double> predict(const DetectorModel& model, const std::vector<FeatureVector>& features);

/// Probabilities of both output units for one vector; they sum to 1.
std::array<double, 2> predict_units(const DetectorModel& model, const FeatureVector& features);

/// Ties at 0.5 resolve to PHISH.
inline bool is_phish(double probability) { return probability >= 0.5; }

/// email_id,probability,label CSV.
std::string format_predictions(const std::vector<std::string>& ids, const std::vector<double>& probabilities);

}  // namespace pptdetect::fusion
