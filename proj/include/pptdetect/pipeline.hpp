#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pptdetect/balance.hpp"
#include "pptdetect/corpus.hpp"
#include "pptdetect/embeddings.hpp"
#include "pptdetect/evalsuite.hpp"
#include "pptdetect/fusion.hpp"
#include "pptdetect/traitnet.hpp"

namespace pptdetect::pipeline {

struct CorpusSource {
  std::string path;
  corpus::Format format = corpus::Format::kJsonl;
  corpus::Source source = corpus::Source::kOther;
  /// kTrain for training corpora, kTest for held-out test sets.
  corpus::Split role = corpus::Split::kTrain;
  corpus::Category default_category = corpus::Category::kUnknown;
  corpus::Origin origin = corpus::Origin::kReal;

  nlohmann::json to_json() const;
  static CorpusSource from_json(const nlohmann::json& j, const std::filesystem::path& base);
};

struct EmbeddingProvider {
  enum class Kind { kNative, kTable };
  Kind kind = Kind::kNative;
  std::string table_path;
  /// Encode ids missing from the table natively instead of failing.
  bool fallback_native = false;
  embeddings::NativeEncoderConfig native;

  nlohmann::json to_json() const;
  static EmbeddingProvider from_json(const nlohmann::json& j, const std::filesystem::path& base);
};

struct EvaluationOptions {
  std::vector<std::string> arms{"with_ppt", "without_ppt"};
  bool ablation = false;
  std::vector<double> sweep_fractions;
  bool sweep_single_trait = false;
  eval::SignificanceTest significance = eval::SignificanceTest::kPairedT;

  nlohmann::json to_json() const;
  static EvaluationOptions from_json(const nlohmann::json& j);
};

struct RunConfig {
  std::string workspace;
  std::vector<CorpusSource> corpora;
  std::string labels_path;
  double label_fraction = 0.1;
  std::vector<std::uint64_t> split_seeds{11, 23, 47};
  double split_ratio = 0.8;
  traitnet::Backbone trait_backbone = traitnet::Backbone::kCharCnn;
  traitnet::TraitNetConfig traitnet;
  EmbeddingProvider embedding;
  fusion::FusionConfig fusion;
  balance::BalanceConfig balance;
  EvaluationOptions evaluation;

  /// Relative paths resolve against base.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;
  /// Hash of the canonical config without the workspace location.
  std::string digest() const;
};

/// Canonical JSON text: sorted keys, one-space indent, trailing newline.
std::string canonical(const nlohmann::json& j);

/// The workspace root: flag value, else PPTDETECT_WORKSPACE, else an error.
std::filesystem::path resolve_workspace(const std::string& flag);

class Workspace {
 public:
  explicit Workspace(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path(const std::string& relative) const { return root_ / relative; }

  std::vector<corpus::EmailRecord> load_records() const;
  void save_records(const std::vector<corpus::EmailRecord>& records);

  nlohmann::json manifest() const;
  /// Records an artifact with the digest of the config that produced it.
  void write_artifact(const std::string& relative, std::string_view content, const std::string& config_digest);
  /// Reads an artifact, refusing one produced under a different config digest.
  std::string read_artifact(const std::string& relative, const std::string& config_digest) const;
  bool has_artifact(const std::string& relative) const;

  std::vector<corpus::TraitAnnotation> load_labels() const;
  void save_labels(const std::vector<corpus::TraitAnnotation>& annotations);

  std::vector<std::string> load_sample() const;
  void save_sample(const std::vector<std::string>& ids, double fraction, std::uint64_t seed);

 private:
  void update_manifest(const std::function<void(nlohmann::json&)>& edit);
  std::filesystem::path root_;
};

struct IngestSummary {
  std::size_t parsed = 0;
  std::size_t added = 0;
  std::size_t already_present = 0;
  corpus::ParseResult result;
};

/// Parses a corpus and merges it into the workspace record store.
IngestSummary ingest(Workspace& ws, const CorpusSource& source);

using Log = std::function<void(const std::string&)>;

/// A stage failure carries the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Annotations restricted to the sampled ids; every sampled id must be labeled.
std::vector<corpus::TraitAnnotation> sampled_annotations(const std::vector<corpus::TraitAnnotation>& all,
                                                         const std::vector<std::string>& sample);

std::vector<traitnet::TraitModel> train_traits(const RunConfig& config, const std::vector<corpus::EmailRecord>& records,
                                               const std::vector<corpus::TraitAnnotation>& annotations,
                                               const embeddings::EmbeddingTable* table, const Log& log);

embeddings::EmbeddingTable resolve_embeddings(const RunConfig& config, const std::vector<corpus::EmailRecord>& records);

/// Everything the detector arms need, with storage for the pointers in SplitData.
struct Prepared {
  std::vector<corpus::EmailRecord> records;
  embeddings::EmbeddingTable table;
  traitnet::ScoreMap scores;
  std::vector<traitnet::TraitModel> trait_models;
  std::vector<eval::SplitData> splits;
  std::vector<balance::ClassCounts> generated;
};

/// Splits per seed, adds GENERATED augmentation when configured (scored and
/// embedded like real text) and assembles train/val/test detector inputs.
void build_splits(const RunConfig& config, Prepared& prepared, const Log& log);

/// Reloads records, embeddings, scores and (when present) trait models from
/// workspace artifacts written under this config's digest.
Prepared load_prepared(const RunConfig& config, const Workspace& ws, bool need_scores = true);

/// Applies a "dotted.key=value" override to a config document. The value is
/// parsed as JSON and taken as a string when that fails.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Full flow: ingest, sample, label check, trait training, scoring, embedding,
/// detector arms across seeds, evaluation. Writes artifacts and returns the report
/// (its "digest" field hashes the rest of the report).
nlohmann::json run_pipeline(const RunConfig& config, const Log& log = {});

/// Feature matrices for centroid analysis over non-test records.
nlohmann::json centroid_report(const Prepared& prepared, std::size_t embedding_dimension);

}  // namespace pptdetect::pipeline
