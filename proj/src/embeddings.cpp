#include "pptdetect/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>

namespace pptdetect::embeddings {

using nlohmann::json;

const std::vector<double>& EmbeddingTable::at(const std::string& id) const {
  auto it = vectors.find(id);
  if (it == vectors.end()) throw ValidationError("embedding table has no vector for '" + id + "'");
  return it->second;
}

EmbeddingTable parse_embedding_table(std::string_view text, std::string provenance) {
  EmbeddingTable table;
  table.provenance = std::move(provenance);
  std::size_t pos = 0, lineno = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto where = [&] { return "embedding table line " + std::to_string(lineno) + ": "; };
    if (!have_header) {
      if (line.substr(0, 4) != "dim=") throw ParseError(where() + "expected header 'dim=<D>'");
      double d = parse_double(line.substr(4));
      if (d < 1 || d != std::floor(d)) throw ParseError(where() + "dimension must be a positive integer");
      table.dimension = static_cast<std::size_t>(d);
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) throw ParseError(where() + "expected 'email_id<TAB>values'");
    std::string id(line.substr(0, tab));
    std::vector<double> v;
    v.reserve(table.dimension);
    std::string_view rest = line.substr(tab + 1);
    std::size_t start = 0;
    while (true) {
      std::size_t comma = rest.find(',', start);
      std::string_view token = rest.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      double value;
      try {
        value = parse_double(token);
      } catch (const ParseError&) {
        throw ParseError(where() + "non-numeric component '" + std::string(token) + "'");
      }
      if (!std::isfinite(value)) throw ParseError(where() + "non-finite component");
      v.push_back(value);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (v.size() != table.dimension) {
      throw ParseError(where() + "expected " + std::to_string(table.dimension) + " components, got " +
                       std::to_string(v.size()));
    }
    if (!table.vectors.emplace(std::move(id), std::move(v)).second) {
      throw ParseError(where() + "duplicate email id '" + std::string(line.substr(0, tab)) + "'");
    }
  }
  if (!have_header) throw ParseError("embedding table is empty (header 'dim=<D>' required)");
  return table;
}

EmbeddingTable load_embedding_table(const std::string& path) { return parse_embedding_table(read_file(path), path); }

std::string format_embedding_table(const EmbeddingTable& table) {
  std::string out = "dim=" + std::to_string(table.dimension) + "\n";
  char buf[40];
  for (const auto& [id, v] : table.vectors) {
    if (v.size() != table.dimension) throw ValidationError("vector for '" + id + "' has the wrong dimension");
    out += id;
    out.push_back('\t');
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out.push_back(',');
      std::snprintf(buf, sizeof buf, "%.17g", v[i]);
      out += buf;
    }
    out.push_back('\n');
  }
  return out;
}

void save_embedding_table(const EmbeddingTable& table, const std::string& path) {
  write_file_atomic(path, format_embedding_table(table));
}

void NativeEncoderConfig::validate() const {
  if (dimension < 1) throw ValidationError("native encoder dimension must be >= 1");
  if (ngram_min < 1 || ngram_max < ngram_min) throw ValidationError("native encoder n-gram range is empty");
}

json NativeEncoderConfig::to_json() const {
  return json{{"ngram_min", ngram_min},           {"ngram_max", ngram_max}, {"dimension", dimension},
              {"hash_seed", hash_seed},           {"signed_hashing", signed_hashing},
              {"lowercase", lowercase},           {"normalization", normalization == Normalization::kL2 ? "l2" : "none"}};
}

NativeEncoderConfig NativeEncoderConfig::from_json(const json& j) {
  NativeEncoderConfig c;
  c.ngram_min = j.value("ngram_min", c.ngram_min);
  c.ngram_max = j.value("ngram_max", c.ngram_max);
  c.dimension = j.value("dimension", c.dimension);
  c.hash_seed = j.value("hash_seed", c.hash_seed);
  c.signed_hashing = j.value("signed_hashing", c.signed_hashing);
  c.lowercase = j.value("lowercase", c.lowercase);
  std::string norm = j.value("normalization", std::string("l2"));
  if (norm == "l2" || norm == "L2") c.normalization = Normalization::kL2;
  else if (norm == "none") c.normalization = Normalization::kNone;
  else throw ValidationError("unknown normalization '" + norm + "'");
  c.validate();
  return c;
}

std::uint32_t murmur3_32(std::string_view data, std::uint32_t seed) {
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(data.data());
  const std::size_t len = data.size();
  const std::size_t nblocks = len / 4;
  std::uint32_t h = seed;
  constexpr std::uint32_t c1 = 0xcc9e2d51, c2 = 0x1b873593;
  auto rotl32 = [](std::uint32_t x, int r) { return (x << r) | (x >> (32 - r)); };
  for (std::size_t i = 0; i < nblocks; ++i) {
    std::uint32_t k = static_cast<std::uint32_t>(bytes[4 * i]) | (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                      (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                      (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    k *= c1;
    k = rotl32(k, 15);
    k *= c2;
    h ^= k;
    h = rotl32(h, 13);
    h = h * 5 + 0xe6546b64;
  }
  const std::uint8_t* tail = bytes + nblocks * 4;
  std::uint32_t k1 = 0;
  switch (len & 3) {
    case 3: k1 ^= static_cast<std::uint32_t>(tail[2]) << 16; [[fallthrough]];
    case 2: k1 ^= static_cast<std::uint32_t>(tail[1]) << 8; [[fallthrough]];
    case 1:
      k1 ^= tail[0];
      k1 *= c1;
      k1 = rotl32(k1, 15);
      k1 *= c2;
      h ^= k1;
  }
  h ^= static_cast<std::uint32_t>(len);
  h ^= h >> 16;
  h *= 0x85ebca6b;
  h ^= h >> 13;
  h *= 0xc2b2ae35;
  h ^= h >> 16;
  return h;
}

std::vector<double> native_encode(std::string_view text, const NativeEncoderConfig& config) {
  config.validate();
  std::vector<double> out(config.dimension, 0.0);
  std::u32string cps = utf8_decode(text);
  if (config.lowercase) {
    for (auto& c : cps) c = to_lower(c);
  }
  const std::uint32_t sign_seed = config.hash_seed ^ 0x9e3779b9u;
  for (std::size_t n = config.ngram_min; n <= config.ngram_max; ++n) {
    if (cps.size() < n) break;
    for (std::size_t i = 0; i + n <= cps.size(); ++i) {
      std::string gram = utf8_encode(std::u32string_view(cps).substr(i, n));
      std::size_t bucket = murmur3_32(gram, config.hash_seed) % config.dimension;
      double sign = 1.0;
      if (config.signed_hashing && (murmur3_32(gram, sign_seed) & 1u)) sign = -1.0;
      out[bucket] += sign;
    }
  }
  if (config.normalization == Normalization::kL2) {
    double norm = 0.0;
    for (double v : out) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : out) v /= norm;
    }
  }
  return out;
}

EmbeddingTable encode_records(const std::vector<corpus::EmailRecord>& records, const NativeEncoderConfig& config) {
  EmbeddingTable table;
  table.dimension = config.dimension;
  table.provenance = "native-hashed-ngram";
  for (const auto& r : records) table.vectors[r.id] = native_encode(r.body, config);
  return table;
}

CoverageReport coverage_check(const EmbeddingTable& table, const std::vector<corpus::EmailRecord>& records) {
  CoverageReport report;
  std::set<std::string> ids;
  for (const auto& r : records) {
    ids.insert(r.id);
    if (!table.contains(r.id)) report.missing.push_back(r.id);
  }
  for (const auto& [id, v] : table.vectors) {
    if (!ids.count(id)) report.extra.push_back(id);
  }
  std::sort(report.missing.begin(), report.missing.end());
  report.missing.erase(std::unique(report.missing.begin(), report.missing.end()), report.missing.end());
  return report;
}

EmbeddingTable fill_missing(EmbeddingTable table, const std::vector<corpus::EmailRecord>& records,
                            NativeEncoderConfig config) {
  config.dimension = table.dimension;
  for (const auto& r : records) {
    if (!table.contains(r.id)) table.vectors[r.id] = native_encode(r.body, config);
  }
  return table;
}

}  // namespace pptdetect::embeddings
