#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pptdetect/corpus.hpp"
#include "pptdetect/fusion.hpp"

namespace pptdetect::balance {

struct SmoteSample {
  std::vector<double> values;
  std::size_t base = 0;
  std::size_t neighbor = 0;
  double lambda = 0.0;
};

/// k Euclidean nearest neighbours of minority[i] (self excluded, ties by index).
std::vector<std::size_t> nearest_neighbors(const std::vector<std::vector<double>>& minority, std::size_t i,
                                           std::size_t k);

/// Classic SMOTE. Sample j uses its own stream derive_seed(seed, "smote/<j>").
std::vector<SmoteSample> smote(const std::vector<std::vector<double>>& minority, std::size_t k,
                               std::size_t n_synthetic, std::uint64_t seed);

/// Word-level Markov chain. Contexts are joined with a single space.
struct MarkovModel {
  std::size_t order = 2;
  std::uint64_t seed = 0;
  std::vector<std::string> vocabulary;  // sorted
  std::map<std::string, std::map<std::string, std::size_t>> transitions;
  std::map<std::string, std::size_t> starts;

  nlohmann::json to_json() const;
  static MarkovModel from_json(const nlohmann::json& j);
};

/// Terminal symbol recorded after the last word of every training text.
inline constexpr const char* kEndToken = "\x03";

std::vector<std::string> split_words(std::string_view text);

MarkovModel markov_train(const std::vector<std::string>& texts, std::size_t order = 2, std::uint64_t seed = 0);

struct GenerateOptions {
  std::size_t count = 0;
  std::size_t min_words = 20;
  std::size_t max_words = 120;
  std::uint64_t seed = 0;
};

/// Generated records are PHISH, GENERATED, SYNTHETIC and TRAIN. A chain that
/// ends before min_words restarts from a fresh start context.
std::vector<corpus::EmailRecord> markov_generate(const MarkovModel& model, const GenerateOptions& options);

enum class Strategy { kNone, kSmote, kWeights, kGenerated };
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

struct BalanceConfig {
  Strategy strategy = Strategy::kNone;
  /// Desired minority/majority ratio after balancing, in (0, 1].
  double target_ratio = 1.0;
  std::size_t smote_k = 5;
  std::size_t markov_order = 2;
  std::size_t min_words = 20;
  std::size_t max_words = 120;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static BalanceConfig from_json(const nlohmann::json& j);
};

/// max(0, round(target_ratio * n_major) - n_minor).
std::size_t synthetic_needed(std::size_t n_major, std::size_t n_minor, double target_ratio);

struct ClassCounts {
  std::size_t phish = 0;
  std::size_t legit = 0;
  std::size_t synthetic = 0;
};

struct FeatureRebalance {
  fusion::LabeledFeatures train;
  fusion::ClassWeighting weighting = fusion::ClassWeighting::kNone;
  ClassCounts counts;
};

/// Feature-space balancing (NONE, SMOTE, WEIGHTS). Input vectors are kept and
/// synthetic ones appended; GENERATED is handled upstream and is a no-op here.
FeatureRebalance rebalance_features(const fusion::LabeledFeatures& train, const BalanceConfig& config);

struct RecordRebalance {
  std::vector<corpus::EmailRecord> added;
  ClassCounts counts;
};

/// GENERATED strategy: trains a chain on the real TRAIN phishing bodies and
/// returns the synthetic records needed to reach the target ratio.
RecordRebalance generate_for_balance(const std::vector<corpus::EmailRecord>& records, const BalanceConfig& config);

}  // namespace pptdetect::balance
