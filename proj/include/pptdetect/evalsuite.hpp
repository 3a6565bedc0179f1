#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pptdetect/balance.hpp"
#include "pptdetect/corpus.hpp"
#include "pptdetect/fusion.hpp"
#include "pptdetect/metrics.hpp"
#include "pptdetect/traitnet.hpp"

namespace pptdetect::eval {

/// "12.34" for 0.1234.
std::string format_percent(double fraction);

struct SplitEntry {
  std::uint64_t seed = 0;
  Confusion confusion;
  Metrics metrics;
};

struct Summary {
  Metrics mean;
  Metrics sd;  // sample standard deviation, 0 for a single split
};

Summary aggregate(const std::vector<Metrics>& per_split);

struct EvalReport {
  std::string arm;
  std::vector<SplitEntry> splits;
  Summary summary;
  std::string config_digest;

  nlohmann::json to_json() const;
};

/// PHISH is the positive class. Throws on length mismatch or empty input.
SplitEntry evaluate(const std::vector<corpus::Category>& predicted, const std::vector<corpus::Category>& truth,
                    std::uint64_t seed = 0);

EvalReport make_report(std::string arm, std::vector<SplitEntry> splits, std::string config_digest = {});

/// Aligned-column text rendering, percentages at 2 decimals.
std::string format_reports(const std::vector<EvalReport>& reports);

enum class SignificanceTest { kPairedT, kMcnemarExact };
std::string_view to_string(SignificanceTest t);
SignificanceTest parse_significance_test(std::string_view s);

struct SignificanceResult {
  SignificanceTest test = SignificanceTest::kPairedT;
  double statistic = 0.0;
  double p_value = 1.0;
  bool degenerate = false;
  std::string description;

  nlohmann::json to_json() const;
};

/// Two-sided paired t-test on a[i] - b[i]. Zero variance is flagged degenerate.
SignificanceResult paired_t(const std::vector<double>& a, const std::vector<double>& b);

/// Exact two-sided binomial test on discordant counts (b, c).
SignificanceResult mcnemar_exact(std::size_t b, std::size_t c);

/// Discordant counts from two systems' correctness on the same emails.
SignificanceResult mcnemar_exact(const std::vector<bool>& a_correct, const std::vector<bool>& b_correct);

/// Detector inputs for one partition. Pointers refer into caller-owned maps.
struct ArmData {
  std::vector<std::string> ids;
  std::vector<corpus::Category> categories;
  std::vector<const std::vector<double>*> embeddings;
  std::vector<const traitnet::PPTScore*> scores;

  std::size_t size() const { return ids.size(); }
  void add(const std::string& id, corpus::Category c, const std::vector<double>* e, const traitnet::PPTScore* s);
};

struct SplitData {
  std::uint64_t seed = 0;
  std::string split_digest;
  ArmData train;
  ArmData val;
  ArmData test;
};

struct ArmResult {
  SplitEntry entry;
  std::vector<double> probabilities;
  std::vector<bool> correct;
  balance::ClassCounts train_counts;
};

fusion::LabeledFeatures features_for(const ArmData& data, const fusion::FusionConfig& config);

/// Trains one detector on split.train (early stopping on split.val) and
/// evaluates it on split.test. The detector seed is derived from the split seed.
ArmResult run_arm(const SplitData& split, const fusion::FusionConfig& config, const balance::BalanceConfig& balance,
                  fusion::DetectorModel* model_out = nullptr);

struct AblationRow {
  Trait dropped = Trait::kUrgency;
  double delta_accuracy = 0.0;
  double delta_f1 = 0.0;
  std::optional<std::string> error;
};

struct AblationTable {
  Summary baseline;
  std::vector<AblationRow> rows;  // always one per trait

  nlohmann::json to_json() const;
  std::string format() const;
};

/// Deltas are masked minus baseline, averaged over splits. A failing arm is
/// reported with its error while the other rows are still computed.
AblationTable ablation_run(const std::vector<SplitData>& splits, const fusion::FusionConfig& base,
                           const balance::BalanceConfig& balance);

/// Stratified subsample preserving the original order: round(fraction * n_c)
/// per category. Throws when a category would be left empty.
ArmData subsample(const ArmData& data, double fraction, std::uint64_t seed);

struct SweepPoint {
  double fraction = 1.0;
  std::string arm;
  std::size_t train_size = 0;
  std::vector<SplitEntry> splits;
  Summary summary;
};

struct SweepCurve {
  std::vector<SweepPoint> points;

  nlohmann::json to_json() const;
  std::string format() const;
};

/// Arms: "with_ppt", "without_ppt" and, when requested, one arm per single trait.
SweepCurve proportion_sweep(const std::vector<SplitData>& splits, const std::vector<double>& fractions,
                            const fusion::FusionConfig& base, const balance::BalanceConfig& balance,
                            bool single_trait_arms = false);

enum class DistanceMetric { kEuclidean, kManhattan };

std::vector<double> centroid(const std::vector<std::vector<double>>& vectors);
double distance(const std::vector<double>& a, const std::vector<double>& b, DistanceMetric metric);
/// Distance between the mean vectors of two non-empty groups.
double centroid_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                         DistanceMetric metric);

struct CentroidSeparation {
  double with_ppt = 0.0;
  double without_ppt = 0.0;
  /// (with - without) / without
  double ratio = 0.0;
};

CentroidSeparation centroid_separation(const std::vector<std::vector<double>>& phish_with,
                                       const std::vector<std::vector<double>>& legit_with,
                                       const std::vector<std::vector<double>>& phish_without,
                                       const std::vector<std::vector<double>>& legit_without,
                                       DistanceMetric metric);

inline constexpr std::size_t kKdeGridPoints = 256;
/// Smallest bandwidth; it keeps at least 1.5 grid steps per bandwidth.
inline constexpr double kKdeMinBandwidth = 1.5 / 246.0;

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> densities;
  double bandwidth = 0.0;
  std::size_t sample_size = 0;
  bool degenerate = false;

  double integral() const;
  std::string to_csv() const;
};

double silverman_bandwidth(const std::vector<double>& samples);
KdeCurve kde_curve(const std::vector<double>& scores);

inline constexpr int kStopwordListVersion = 1;
const std::set<std::string>& default_stopwords();

/// Lowercased alphanumeric tokens with stopwords removed, ranked by count
/// then lexicographically.
std::vector<std::pair<std::string, std::size_t>> token_frequency(const std::vector<std::string>& texts,
                                                                 const std::set<std::string>& stopwords,
                                                                 std::size_t top_k);

struct ScatterRow {
  std::string email_id;
  traitnet::PPTScore score;
  corpus::Category category = corpus::Category::kUnknown;
};

std::string export_score_scatter(const std::vector<ScatterRow>& rows);
std::vector<ScatterRow> parse_score_scatter(std::string_view text);

}  // namespace pptdetect::eval
