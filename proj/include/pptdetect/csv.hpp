#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace pptdetect::csv {

/// One parsed row with the 1-based physical line number it started on.
struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

/// RFC 4180 reader: quoted fields may span lines and contain doubled quotes.
/// Blank lines are skipped. Throws ParseError on an unterminated quote.
std::vector<Row> parse(std::string_view text);

std::string escape_field(std::string_view field);
std::string format_row(const std::vector<std::string>& fields);

}  // namespace pptdetect::csv
