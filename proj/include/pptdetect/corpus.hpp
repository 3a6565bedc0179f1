#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pptdetect/common.hpp"

namespace pptdetect::corpus {

enum class Source { kIwspaNh, kIwspaH, kUnivPhish, kSynthetic, kOther };
enum class Category { kPhish, kLegit, kUnknown };
enum class Origin { kReal, kGenerated };
enum class Split { kTrain, kVal, kTest, kUnassigned };
enum class Format { kCsv, kJsonl, kEmlDir, kMbox };

std::string_view to_string(Source s);
std::string_view to_string(Category c);
std::string_view to_string(Origin o);
std::string_view to_string(Split s);
std::string_view to_string(Format f);
Source parse_source(std::string_view s);
Origin parse_origin(std::string_view s);
Split parse_split(std::string_view s);
Format parse_format(std::string_view s);
/// Strict parse of the canonical names written by this library ("PHISH", "LEGIT", "UNKNOWN").
Category parse_category(std::string_view s);

/// Maps a free-form corpus label onto a category. Unrecognized strings map to
/// kUnknown and set *recognized to false.
Category map_label(std::string_view label, bool* recognized = nullptr);

using HeaderMap = std::map<std::string, std::string>;

struct EmailRecord {
  std::string id;
  Source source = Source::kOther;
  std::optional<HeaderMap> header;
  std::string body;
  Category category = Category::kUnknown;
  Origin origin = Origin::kReal;
  Split split = Split::kUnassigned;

  bool operator==(const EmailRecord&) const = default;
};

/// Content id: source tag plus a hash of header and body. Identical content
/// always yields an identical id.
std::string compute_id(Source source, const std::optional<HeaderMap>& header, std::string_view body);

/// NFC, CRLF/CR to LF, trailing whitespace stripped per line. Invalid UTF-8 is
/// replaced with U+FFFD. Case is preserved.
std::string normalize_text(std::string_view raw);

struct ParseOptions {
  Source source = Source::kOther;
  Origin origin = Origin::kReal;
  /// Category assigned when a record carries no label of its own.
  Category default_category = Category::kUnknown;
  /// Split assigned to every parsed record (kTest for held-out corpora).
  Split split = Split::kUnassigned;
  std::string body_column = "body";
  std::string label_column = "label";
};

struct ParseResult {
  std::vector<EmailRecord> records;
  std::size_t skipped = 0;
  std::size_t duplicates = 0;
  std::size_t empty_bodies = 0;
  std::size_t unknown_labels = 0;
  std::vector<std::string> warnings;
};

ParseResult parse_corpus(const std::string& path, Format format, const ParseOptions& options);

/// Parses one RFC 822 message into a header map and body. Folded header lines
/// are unfolded; repeated fields are joined with ", ".
std::pair<HeaderMap, std::string> parse_message(std::string_view raw);

EmailRecord strip_headers(const EmailRecord& record);

/// JSONL form used for workspace storage and generated-corpus export.
std::string to_jsonl(const std::vector<EmailRecord>& records);
std::vector<EmailRecord> records_from_jsonl(std::string_view text);

struct SplitPlan {
  std::uint64_t seed = 0;
  double ratio = 0.8;
  std::map<std::string, Split> assignment;

  std::size_t count(Split s) const;
  /// Hash over the sorted assignment, used as a provenance tag.
  std::string digest() const;
};

/// Stratified assignment of ids to kTrain/kVal. Each stratum receives exactly
/// round(ratio * n) training ids; deterministic in (ids, strata, ratio, seed).
std::map<std::string, Split> stratified_assign(const std::vector<std::string>& ids,
                                               const std::vector<int>& strata, double ratio,
                                               std::uint64_t seed);

/// Splits records with category PHISH or LEGIT. Records already marked kTest or
/// with category UNKNOWN are out of scope and left unassigned in the plan.
SplitPlan make_split(const std::vector<EmailRecord>& records, double ratio, std::uint64_t seed);

/// Copies records with the plan's assignment applied. kTest records are kept as is.
std::vector<EmailRecord> apply_split(std::vector<EmailRecord> records, const SplitPlan& plan);

/// ceil(fraction * n), tolerant to floating-point noise in the product.
std::size_t ceil_count(double fraction, std::size_t n);

/// Uniform sample without replacement of ceil(fraction * |PHISH and TRAIN|) ids,
/// returned in sorted order.
std::vector<std::string> sample_for_trait_labeling(const std::vector<EmailRecord>& records,
                                                   double fraction, std::uint64_t seed);

struct TraitAnnotation {
  std::string email_id;
  int urgency = 0;
  int fear = 0;
  int desire = 0;
  std::string annotator;
  std::int64_t timestamp = 0;

  int value(Trait t) const;
  bool operator==(const TraitAnnotation&) const = default;
};

struct LabelSummary {
  std::size_t rows = 0;
  std::size_t duplicates_superseded = 0;
  double urgency_marginal = 0.0;
  double fear_marginal = 0.0;
  double desire_marginal = 0.0;
  double urgency_and_fear = 0.0;
  double all_three = 0.0;

  std::string describe() const;
};

LabelSummary summarize_labels(const std::vector<TraitAnnotation>& annotations);

struct LabelImport {
  std::vector<TraitAnnotation> annotations;
  LabelSummary summary;
};

inline constexpr std::string_view kLabelsHeader = "email_id,urgency,fear,desire,annotator,timestamp";

/// Parses the six-column labels CSV. When known_records is given, ids not in it
/// (or not PHISH) are rejected with their row numbers. Duplicate
/// (email_id, annotator) rows resolve to the last row and are counted.
LabelImport parse_trait_labels(std::string_view text,
                               const std::vector<EmailRecord>* known_records = nullptr);
LabelImport import_trait_labels(const std::string& csv_path,
                                const std::vector<EmailRecord>* known_records = nullptr);
std::string format_trait_labels(const std::vector<TraitAnnotation>& annotations);
void export_trait_labels(const std::vector<TraitAnnotation>& annotations, const std::string& csv_path);

/// Collapses annotations to one per email id: the latest timestamp wins, ties
/// resolved by annotator name. Result is sorted by id.
std::vector<TraitAnnotation> current_per_email(const std::vector<TraitAnnotation>& annotations);

}  // namespace pptdetect::corpus
