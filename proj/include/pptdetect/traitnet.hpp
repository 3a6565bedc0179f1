#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pptdetect/corpus.hpp"
#include "pptdetect/embeddings.hpp"
#include "pptdetect/neuralcore.hpp"

namespace pptdetect::traitnet {

/// Output unit holding the trait-present probability.
inline constexpr std::size_t kPresentUnit = 0;

/// Character one-hot encoding: one row per alphabet symbol, one column per position.
struct CharQuantization {
  std::u32string alphabet;
  std::size_t max_len = 512;

  /// 26 lowercase letters, 10 digits, 32 ASCII punctuation marks, space and newline.
  static CharQuantization standard(std::size_t max_len = 512);

  void validate() const;
  /// Row index of a code point, or -1 when it is not in the alphabet.
  int index_of(char32_t cp) const;
};

/// Lowercases the text, truncates to max_len and one-hot encodes it into an
/// [|alphabet|, max_len] tensor. Unknown symbols and padding are zero columns.
nn::Tensor quantize_text(std::string_view text, const CharQuantization& q);

enum class Backbone { kCharCnn, kEmbeddingHead };

std::string_view to_string(Backbone b);
Backbone parse_backbone(std::string_view s);

struct ConvBlock {
  std::size_t channels = 64;
  std::size_t kernel = 7;
  /// Pool width 0 pools over the whole remaining length.
  std::size_t pool_width = 3;
  std::size_t pool_stride = 3;
};

struct TraitNetConfig {
  std::size_t max_len = 512;
  std::vector<ConvBlock> conv_blocks{{64, 7, 3, 3}, {64, 3, 3, 3}};
  std::size_t cnn_hidden = 128;
  std::vector<std::size_t> head_hidden{64};
  double split_ratio = 0.8;
  nn::TrainConfig train;

  nlohmann::json to_json() const;
  static TraitNetConfig from_json(const nlohmann::json& j);
};

/// Layer stack for a backbone. input_shape receives the expected input shape.
std::vector<nn::LayerSpec> trait_layers(Backbone backbone, const TraitNetConfig& config, std::size_t input_width,
                                        nn::Shape* input_shape);

struct TrainingInfo {
  std::uint64_t seed = 0;
  std::string split_digest;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  double positive_prior = 0.0;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  std::vector<nn::EpochMetrics> history;
};

struct TraitModel {
  Trait trait = Trait::kUrgency;
  Backbone backbone = Backbone::kCharCnn;
  nn::Network network;
  CharQuantization quantization;       // kCharCnn
  std::size_t embedding_dimension = 0;  // kEmbeddingHead
  TrainingInfo info;

  nlohmann::json to_json() const;
  static TraitModel from_json(const nlohmann::json& doc);
};

/// Trains one binary trait classifier on annotated phishing emails. Annotations
/// are collapsed to one per email, emails with empty bodies are excluded, and
/// the remainder is split (stratified on the trait) into train/validation.
/// `log`, when given, receives the class prior and split sizes.
TraitModel train_trait_model(const std::vector<corpus::TraitAnnotation>& annotations,
                             const std::vector<corpus::EmailRecord>& records, Trait trait, Backbone backbone,
                             const TraitNetConfig& config, std::uint64_t seed,
                             const embeddings::EmbeddingTable* table = nullptr, std::string* log = nullptr);

/// Softmax probability of the trait-present unit.
double ppt_score_one(const TraitModel& model, const corpus::EmailRecord& record,
                     const embeddings::EmbeddingTable* table = nullptr);
double ppt_score_text(const TraitModel& model, std::string_view text);
double ppt_score_embedding(const TraitModel& model, const std::vector<double>& embedding);

struct PPTScore {
  double urgency = 0.0;
  double fear = 0.0;
  double desire = 0.0;

  double get(Trait t) const;
  void set(Trait t, double v);
  bool operator==(const PPTScore&) const = default;
};

using ScoreMap = std::map<std::string, PPTScore>;

/// Scores every record with one model per trait. Models must cover all three
/// traits with one backbone.
ScoreMap score_corpus(const std::vector<const TraitModel*>& models, const std::vector<corpus::EmailRecord>& records,
                      const embeddings::EmbeddingTable* table = nullptr);

/// CSV with header email_id,urgency,fear,desire and six decimals per score.
std::string format_scores(const ScoreMap& scores);
ScoreMap parse_scores(std::string_view text);

}  // namespace pptdetect::traitnet
