#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pptdetect/corpus.hpp"

namespace pptdetect::embeddings {

/// Dense vectors keyed by email id, all of one dimension.
struct EmbeddingTable {
  std::size_t dimension = 0;
  std::map<std::string, std::vector<double>> vectors;
  std::string provenance;

  const std::vector<double>& at(const std::string& id) const;
  bool contains(const std::string& id) const { return vectors.count(id) > 0; }
};

/// Parses the table format: a first line `dim=<D>`, then one
/// `email_id<TAB>v1,v2,...,vD` line per vector. Errors carry the line number.
EmbeddingTable parse_embedding_table(std::string_view text, std::string provenance = {});
EmbeddingTable load_embedding_table(const std::string& path);
/// Components are written with 17 significant digits.
std::string format_embedding_table(const EmbeddingTable& table);
void save_embedding_table(const EmbeddingTable& table, const std::string& path);

enum class Normalization { kNone, kL2 };

struct NativeEncoderConfig {
  std::size_t ngram_min = 3;
  std::size_t ngram_max = 5;
  std::size_t dimension = 768;
  std::uint32_t hash_seed = 0x5eed;
  bool signed_hashing = true;
  bool lowercase = true;
  Normalization normalization = Normalization::kL2;

  void validate() const;
  nlohmann::json to_json() const;
  static NativeEncoderConfig from_json(const nlohmann::json& j);
};

/// MurmurHash3 x86 32-bit.
std::uint32_t murmur3_32(std::string_view data, std::uint32_t seed);

/// Signed feature hashing of character n-grams (over code points) into
/// `dimension` buckets. Empty text yields the zero vector.
std::vector<double> native_encode(std::string_view text, const NativeEncoderConfig& config);

EmbeddingTable encode_records(const std::vector<corpus::EmailRecord>& records, const NativeEncoderConfig& config);

struct CoverageReport {
  std::vector<std::string> missing;  // record ids absent from the table
  std::vector<std::string> extra;    // table ids with no record

  bool complete() const { return missing.empty(); }
};

CoverageReport coverage_check(const EmbeddingTable& table, const std::vector<corpus::EmailRecord>& records);

/// Fills ids missing from the table with native encodings. The encoder
/// dimension is forced to the table's dimension.
EmbeddingTable fill_missing(EmbeddingTable table, const std::vector<corpus::EmailRecord>& records,
                            NativeEncoderConfig config);

}  // namespace pptdetect::embeddings
