#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "pptdetect/common.hpp"
#include "pptdetect/csv.hpp"
#include "support.hpp"

using namespace pptdetect;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformRanges) {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform01();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
  }
  EXPECT_THROW(r.below(0), Error);
}

TEST(Rng, ShuffleIsPermutation) {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  Rng r(9);
  r.shuffle(v);
  std::set<int> s(v.begin(), v.end());
  EXPECT_EQ(s.size(), 50u);
  EXPECT_EQ(*s.begin(), 0);
  EXPECT_EQ(*s.rbegin(), 49);
}

TEST(DeriveSeed, TagsSeparateStreams) {
  EXPECT_EQ(derive_seed(5, "x"), derive_seed(5, "x"));
  EXPECT_NE(derive_seed(5, "x"), derive_seed(5, "y"));
  EXPECT_NE(derive_seed(5, "x"), derive_seed(6, "x"));
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Format, FixedAndRoundtrip) {
  EXPECT_EQ(format_fixed(0.8254, 2), "0.83");
  EXPECT_EQ(format_fixed(1.0 / 3.0, 6), "0.333333");
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    double x = r.uniform(-1e6, 1e6) * std::pow(10.0, r.uniform(-20, 20));
    EXPECT_EQ(parse_double(format_roundtrip(x)), x);
  }
  EXPECT_THROW(parse_double("1.5x"), ParseError);
}

TEST(Utf8, InvalidBytesBecomeReplacement) {
  auto cps = utf8_decode("a\xff" "b");
  ASSERT_EQ(cps.size(), 3u);
  EXPECT_EQ(cps[1], U'�');
  EXPECT_EQ(utf8_encode(utf8_decode("h\xC3\xA9llo")), "h\xC3\xA9llo");
  EXPECT_EQ(to_lower(U'É'), U'é');
  EXPECT_EQ(to_lower(U'Q'), U'q');
}

TEST(Traits, NamesRoundTrip) {
  for (Trait t : kAllTraits) EXPECT_EQ(parse_trait(trait_name(t)), t);
  EXPECT_EQ(trait_name(Trait::kUrgency), "urgency");
  EXPECT_THROW(parse_trait("greed"), Error);
}

TEST(Files, AtomicWriteReplacesContent) {
  testutil::TempDir dir;
  auto p = dir.file("x.txt");
  write_file_atomic(p, "one");
  write_file_atomic(p, "two");
  EXPECT_EQ(read_file(p), "two");
  EXPECT_THROW(read_file(dir.file("missing")), Error);
}

TEST(Csv, QuotedFieldsSpanLines) {
  auto rows = csv::parse("a,b\n\"x,1\",\"line\nbreak \"\"q\"\"\"\n\nz,w\n");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].fields[0], "x,1");
  EXPECT_EQ(rows[1].fields[1], "line\nbreak \"q\"");
  EXPECT_EQ(rows[1].line, 2u);
  EXPECT_EQ(rows[2].line, 5u);
  EXPECT_THROW(csv::parse("a,\"open\n"), ParseError);
}

TEST(Csv, FormatParsesBack) {
  std::vector<std::string> fields{"plain", "with,comma", "with \"quote\"", "multi\nline", ""};
  auto rows = csv::parse(csv::format_row(fields));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].fields, fields);
}
