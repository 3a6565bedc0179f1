#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pptdetect {

/// Base class for every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document or file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input that parses but violates a precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Three trait dimensions in their fixed order.
enum class Trait { kUrgency = 0, kFear = 1, kDesire = 2 };

inline constexpr Trait kAllTraits[] = {Trait::kUrgency, Trait::kFear, Trait::kDesire};

std::string_view trait_name(Trait t);
Trait parse_trait(std::string_view name);

/// Seeded generator whose outputs do not depend on the standard library's
/// distribution implementations, so results are reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform01();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

/// Mixes a base seed with a tag into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

std::string sha256_hex(std::string_view data);

/// printf-style "%.<decimals>f".
std::string format_fixed(double value, int decimals);
/// Shortest decimal string that parses back to the same double.
std::string format_roundtrip(double value);

double parse_double(std::string_view text);

/// Decodes UTF-8 into code points; invalid sequences become U+FFFD.
std::u32string utf8_decode(std::string_view text);
std::string utf8_encode(std::u32string_view code_points);
/// Full Unicode simple lowercase mapping per code point.
char32_t to_lower(char32_t cp);

std::string read_file(const std::string& path);
/// Writes via a temporary file and rename, after flushing to disk.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace pptdetect
