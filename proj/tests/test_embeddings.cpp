#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "pptdetect/embeddings.hpp"
#include "pptdetect/fusion.hpp"
#include "support.hpp"

using namespace pptdetect;
using namespace pptdetect::embeddings;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<corpus::EmailRecord> records(std::size_t n) {
  std::vector<corpus::EmailRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    corpus::EmailRecord r;
    r.body = "message body " + std::to_string(i);
    r.id = "x:" + std::to_string(i);
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST(Murmur3, ReferenceValues) {
  EXPECT_EQ(murmur3_32("", 0), 0u);
  EXPECT_EQ(murmur3_32("", 1), 0x514E28B7u);
  EXPECT_EQ(murmur3_32("hello", 0), 0x248BFA47u);
  EXPECT_EQ(murmur3_32("The quick brown fox jumps over the lazy dog", 0), 0x2E4FF723u);
}

TEST(TableFormat, ParsesValidRows) {
  auto t = parse_embedding_table("dim=4\na\t1,2,3,4\nb\t0,0,0,0\nc\t-1,0.5,1e-3,2\n");
  EXPECT_EQ(t.dimension, 4u);
  EXPECT_EQ(t.vectors.size(), 3u);
  EXPECT_EQ(t.at("c")[2], 1e-3);
}

TEST(TableFormat, ShortRowNamesLine) {
  try {
    parse_embedding_table("dim=4\na\t1,2,3,4\nb\t1,2,3\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_embedding_table("a\t1\n"), ParseError);
  EXPECT_THROW(parse_embedding_table("dim=1\na\tnan\n"), ParseError);
}

TEST(TableFormat, RoundTripIsExact) {
  testutil::TempDir dir;
  EmbeddingTable t;
  t.dimension = 3;
  t.vectors["a"] = {0.1, 1.0 / 3.0, -2.5e-17};
  t.vectors["b"] = {1e300, -0.0, 7.0};
  save_embedding_table(t, dir.file("t.tsv"));
  auto back = load_embedding_table(dir.file("t.tsv"));
  EXPECT_EQ(back.vectors, t.vectors);
}

TEST(TableFormat, Dim768GivesFusionWidth771) {
  std::string text = "dim=768\ne\t";
  for (int i = 0; i < 768; ++i) text += (i ? "," : "") + std::to_string(i * 0.001);
  auto t = parse_embedding_table(text + "\n");
  traitnet::PPTScore s{0.1, 0.2, 0.3};
  auto fv = fusion::build_features("e", t.at("e"), &s, fusion::FusionConfig{});
  EXPECT_EQ(fv.values.size(), 771u);
}

TEST(NativeEncode, EmptyTextIsZero) {
  NativeEncoderConfig c;
  auto v = native_encode("", c);
  ASSERT_EQ(v.size(), 768u);
  for (double x : v) EXPECT_EQ(x, 0.0);
}

TEST(NativeEncode, UnitNorm) {
  NativeEncoderConfig c;
  for (std::string text : {"abc", "hello world", "Your account will be suspended, act immediately!"}) {
    auto v = native_encode(text, c);
    EXPECT_NEAR(std::sqrt(dot(v, v)), 1.0, 1e-9) << text;
  }
}

TEST(NativeEncode, MatchesNgramHashingOracle) {
  NativeEncoderConfig c;
  c.dimension = 64;
  c.normalization = Normalization::kNone;
  c.signed_hashing = false;
  std::string text = "abcdef";
  std::vector<double> expect(64, 0.0);
  for (std::size_t n = 3; n <= 5; ++n)
    for (std::size_t i = 0; i + n <= text.size(); ++i) expect[murmur3_32(text.substr(i, n), c.hash_seed) % 64] += 1.0;
  EXPECT_EQ(native_encode(text, c), expect);
}

TEST(NativeEncode, DifferentNgramsLowerCosine) {
  NativeEncoderConfig c;
  auto a = native_encode("please verify your account today", c);
  auto b = native_encode("please verify your account tomorrow", c);
  EXPECT_LT(dot(a, b), 1.0);
  EXPECT_GT(dot(a, b), 0.3);
  EXPECT_EQ(native_encode("please verify your account today", c), a);
}

TEST(NativeEncode, LowercaseOption) {
  NativeEncoderConfig c;
  EXPECT_EQ(native_encode("HELLO", c), native_encode("hello", c));
  c.lowercase = false;
  EXPECT_NE(native_encode("HELLO", c), native_encode("hello", c));
}

TEST(NativeEncode, ConfigValidation) {
  NativeEncoderConfig c;
  c.dimension = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c.dimension = 8;
  c.ngram_min = 5;
  c.ngram_max = 3;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Coverage, MissingAndFallback) {
  auto recs = records(10);
  NativeEncoderConfig c;
  c.dimension = 16;
  EmbeddingTable full = encode_records(recs, c);
  EXPECT_TRUE(coverage_check(full, recs).complete());

  EmbeddingTable partial = full;
  partial.vectors.erase(recs[3].id);
  partial.vectors.erase(recs[7].id);
  partial.vectors["stray"] = std::vector<double>(16, 0.0);
  auto cov = coverage_check(partial, recs);
  EXPECT_EQ(cov.missing.size(), 2u);
  EXPECT_EQ(cov.extra, std::vector<std::string>{"stray"});

  NativeEncoderConfig other = c;
  other.dimension = 768;
  auto filled = fill_missing(partial, recs, other);
  EXPECT_TRUE(coverage_check(filled, recs).complete());
  EXPECT_EQ(filled.at(recs[3].id).size(), 16u);
  EXPECT_EQ(filled.at(recs[3].id), full.at(recs[3].id));
}
