#include "pptdetect/corpus.hpp"

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pptdetect/csv.hpp"

namespace pptdetect::corpus {

using nlohmann::json;

std::string_view to_string(Source s) {
  switch (s) {
    case Source::kIwspaNh: return "IWSPA_NH";
    case Source::kIwspaH: return "IWSPA_H";
    case Source::kUnivPhish: return "UNIV_PHISH";
    case Source::kSynthetic: return "SYNTHETIC";
    case Source::kOther: return "OTHER";
  }
  return "OTHER";
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::kPhish: return "PHISH";
    case Category::kLegit: return "LEGIT";
    case Category::kUnknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

std::string_view to_string(Origin o) { return o == Origin::kReal ? "REAL" : "GENERATED"; }

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "TRAIN";
    case Split::kVal: return "VAL";
    case Split::kTest: return "TEST";
    case Split::kUnassigned: return "UNASSIGNED";
  }
  return "UNASSIGNED";
}

std::string_view to_string(Format f) {
  switch (f) {
    case Format::kCsv: return "csv";
    case Format::kJsonl: return "jsonl";
    case Format::kEmlDir: return "eml_dir";
    case Format::kMbox: return "mbox";
  }
  return "csv";
}

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

Source parse_source(std::string_view s) {
  std::string u = upper(s);
  if (u == "IWSPA_NH") return Source::kIwspaNh;
  if (u == "IWSPA_H") return Source::kIwspaH;
  if (u == "UNIV_PHISH") return Source::kUnivPhish;
  if (u == "SYNTHETIC") return Source::kSynthetic;
  if (u == "OTHER") return Source::kOther;
  throw ValidationError("unknown source tag '" + std::string(s) + "'");
}

Origin parse_origin(std::string_view s) {
  std::string u = upper(s);
  if (u == "REAL") return Origin::kReal;
  if (u == "GENERATED") return Origin::kGenerated;
  throw ValidationError("unknown origin '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  std::string u = upper(s);
  if (u == "TRAIN") return Split::kTrain;
  if (u == "VAL") return Split::kVal;
  if (u == "TEST") return Split::kTest;
  if (u == "UNASSIGNED") return Split::kUnassigned;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

Format parse_format(std::string_view s) {
  std::string l = lower(s);
  if (l == "csv") return Format::kCsv;
  if (l == "jsonl") return Format::kJsonl;
  if (l == "eml_dir" || l == "eml") return Format::kEmlDir;
  if (l == "mbox") return Format::kMbox;
  throw ValidationError("unknown corpus format '" + std::string(s) + "'");
}

Category parse_category(std::string_view s) {
  if (s == "PHISH") return Category::kPhish;
  if (s == "LEGIT") return Category::kLegit;
  if (s == "UNKNOWN") return Category::kUnknown;
  throw ValidationError("unknown category '" + std::string(s) + "'");
}

Category map_label(std::string_view label, bool* recognized) {
  std::string l = lower(trim(label));
  if (recognized) *recognized = true;
  if (l == "phish" || l == "phishing" || l == "1") return Category::kPhish;
  if (l == "legit" || l == "ham" || l == "0") return Category::kLegit;
  if (recognized) *recognized = false;
  return Category::kUnknown;
}

std::string compute_id(Source source, const std::optional<HeaderMap>& header, std::string_view body) {
  std::string canonical;
  if (header) {
    canonical += "H";
    for (const auto& [k, v] : *header) {
      canonical += k;
      canonical.push_back('\x1f');
      canonical += v;
      canonical.push_back('\x1e');
    }
  }
  canonical.push_back('\x1d');
  canonical.append(body);
  return lower(to_string(source)) + ":" + sha256_hex(canonical).substr(0, 20);
}

std::string normalize_text(std::string_view raw) {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  UErrorCode ec = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(ec);
  if (U_FAILURE(ec)) throw Error("ICU NFC normalizer unavailable");
  icu::UnicodeString normalized = nfc->normalize(u, ec);
  if (U_FAILURE(ec)) throw Error("NFC normalization failed");
  std::string utf8;
  normalized.toUTF8String(utf8);

  std::string out;
  out.reserve(utf8.size());
  std::string line;
  auto flush_line = [&](bool newline) {
    std::size_t end = line.find_last_not_of(" \t\f\v");
    line.erase(end == std::string::npos ? 0 : end + 1);
    out += line;
    if (newline) out.push_back('\n');
    line.clear();
  };
  for (std::size_t i = 0; i < utf8.size(); ++i) {
    char c = utf8[i];
    if (c == '\r') {
      if (i + 1 < utf8.size() && utf8[i + 1] == '\n') ++i;
      flush_line(true);
    } else if (c == '\n') {
      flush_line(true);
    } else {
      line.push_back(c);
    }
  }
  flush_line(false);
  return out;
}

std::pair<HeaderMap, std::string> parse_message(std::string_view raw) {
  HeaderMap header;
  std::size_t pos = 0;
  std::string last_key;
  bool any_header = false;
  while (pos < raw.size()) {
    std::size_t eol = raw.find('\n', pos);
    std::string_view line = raw.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::size_t next = eol == std::string_view::npos ? raw.size() : eol + 1;
    if (line.empty()) {
      pos = next;
      break;
    }
    if ((line.front() == ' ' || line.front() == '\t') && !last_key.empty()) {
      header[last_key] += " " + std::string(trim(line));
      pos = next;
      continue;
    }
    std::size_t colon = line.find(':');
    bool valid_name = colon != std::string_view::npos && colon > 0 &&
                      std::all_of(line.begin(), line.begin() + static_cast<std::ptrdiff_t>(colon), [](char ch) {
                        return ch > 32 && ch < 127;
                      });
    if (!valid_name) {
      // Not a header block at all: the whole message is body.
      if (!any_header) return {HeaderMap{}, std::string(raw)};
      break;
    }
    any_header = true;
    std::string key(line.substr(0, colon));
    std::string value(trim(line.substr(colon + 1)));
    auto it = header.find(key);
    if (it != header.end()) {
      it->second += ", " + value;
    } else {
      header.emplace(key, value);
    }
    last_key = key;
    pos = next;
  }
  return {header, std::string(raw.substr(std::min(pos, raw.size())))};
}

namespace {

struct Builder {
  const ParseOptions& opts;
  ParseResult& result;
  std::set<std::string> seen;

  void add(std::optional<HeaderMap> header, std::string_view raw_body, std::optional<std::string> label,
           std::optional<Origin> origin, std::size_t where) {
    EmailRecord r;
    r.source = opts.source;
    r.origin = origin.value_or(opts.origin);
    r.split = opts.split;
    r.body = normalize_text(raw_body);
    if (opts.source != Source::kIwspaNh && header) {
      HeaderMap normalized;
      for (auto& [k, v] : *header) normalized[k] = normalize_text(v);
      r.header = std::move(normalized);
    }
    if (label) {
      bool recognized = false;
      r.category = map_label(*label, &recognized);
      if (!recognized) {
        ++result.unknown_labels;
        result.warnings.push_back("entry " + std::to_string(where) + ": unrecognized label '" + *label +
                                  "' mapped to UNKNOWN");
      }
    } else {
      r.category = opts.default_category;
    }
    if (r.origin == Origin::kGenerated) {
      if (r.category != Category::kPhish && r.category != Category::kUnknown) {
        ++result.skipped;
        result.warnings.push_back("entry " + std::to_string(where) + ": generated email not labeled phishing, skipped");
        return;
      }
      r.category = Category::kPhish;
      if (r.split == Split::kUnassigned) r.split = Split::kTrain;
    }
    if (r.body.empty()) {
      ++result.empty_bodies;
      result.warnings.push_back("entry " + std::to_string(where) + ": empty body");
    }
    r.id = compute_id(r.source, r.header, r.body);
    if (!seen.insert(r.id).second) {
      ++result.duplicates;
      return;
    }
    result.records.push_back(std::move(r));
  }
};

std::optional<std::string> json_label(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  if (it->is_boolean()) return it->get<bool>() ? "1" : "0";
  throw ParseError("label must be a string or integer");
}

void parse_csv_corpus(const std::string& text, Builder& b) {
  auto rows = csv::parse(text);
  if (rows.empty()) throw ValidationError("csv corpus has no header row");
  const auto& head = rows.front().fields;
  auto find_col = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < head.size(); ++i) {
      if (lower(trim(head[i])) == lower(name)) return i;
    }
    return std::nullopt;
  };
  auto body_col = find_col(b.opts.body_column);
  if (!body_col) throw ValidationError("csv header is missing the body column '" + b.opts.body_column + "'");
  auto label_col = find_col(b.opts.label_column);
  auto subject_col = find_col("subject");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() != head.size()) {
      ++b.result.skipped;
      b.result.warnings.push_back("line " + std::to_string(rows[r].line) + ": expected " +
                                  std::to_string(head.size()) + " fields, got " + std::to_string(f.size()));
      continue;
    }
    std::string body = f[*body_col];
    if (subject_col && !f[*subject_col].empty()) body = f[*subject_col] + "\n" + body;
    std::optional<std::string> label;
    if (label_col && !f[*label_col].empty()) label = f[*label_col];
    b.add(std::nullopt, body, label, std::nullopt, rows[r].line);
  }
}

void parse_jsonl_corpus(const std::string& text, Builder& b) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      json obj = json::parse(line);
      if (!obj.is_object() || !obj.contains("body") || !obj["body"].is_string()) {
        throw ParseError("missing string field 'body'");
      }
      std::optional<HeaderMap> header;
      if (auto it = obj.find("header"); it != obj.end() && !it->is_null()) {
        HeaderMap h;
        for (auto& [k, v] : it->items()) h[k] = v.get<std::string>();
        header = std::move(h);
      }
      auto label = json_label(obj, "label");
      if (!label) label = json_label(obj, "category");
      std::optional<Origin> origin;
      if (auto it = obj.find("origin"); it != obj.end() && it->is_string()) {
        origin = parse_origin(it->get<std::string>());
      }
      b.add(std::move(header), obj["body"].get<std::string>(), label, origin, lineno);
    } catch (const std::exception& e) {
      ++b.result.skipped;
      b.result.warnings.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void add_message(Builder& b, std::string_view raw, std::optional<std::string> label, std::size_t where) {
  if (b.opts.source == Source::kIwspaNh) {
    b.add(std::nullopt, raw, label, std::nullopt, where);
    return;
  }
  auto [header, body] = parse_message(raw);
  if (!label) {
    if (auto it = header.find("X-Label"); it != header.end()) label = it->second;
  }
  std::optional<HeaderMap> h;
  if (!header.empty()) h = std::move(header);
  b.add(std::move(h), body, label, std::nullopt, where);
}

void parse_eml_dir(const std::string& path, Builder& b) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (auto& entry : fs::recursive_directory_iterator(path)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::size_t index = 0;
  for (const auto& file : files) {
    ++index;
    std::optional<std::string> label;
    fs::path parent = fs::relative(file.parent_path(), path);
    if (!parent.empty() && parent != ".") {
      bool recognized = false;
      std::string dir = parent.filename().string();
      map_label(dir, &recognized);
      if (recognized) label = dir;
    }
    try {
      add_message(b, read_file(file.string()), label, index);
    } catch (const std::exception& e) {
      ++b.result.skipped;
      b.result.warnings.push_back(file.string() + ": " + e.what());
    }
  }
}

bool is_mbox_separator(std::string_view line) { return line.substr(0, 5) == "From "; }

void parse_mbox(const std::string& text, Builder& b) {
  std::vector<std::string> messages;
  std::string current;
  bool started = false;
  bool prev_blank = true;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::size_t next = eol == std::string::npos ? text.size() : eol + 1;
    std::string_view line(text.data() + pos, (eol == std::string::npos ? text.size() : eol) - pos);
    std::string_view bare = line;
    if (!bare.empty() && bare.back() == '\r') bare.remove_suffix(1);
    if (is_mbox_separator(bare) && prev_blank) {
      if (started) messages.push_back(std::move(current));
      current.clear();
      started = true;
    } else if (started) {
      // mboxrd quoting: one '>' is removed from lines matching ^>+From .
      std::size_t gts = bare.find_first_not_of('>');
      if (gts != std::string_view::npos && gts > 0 && bare.substr(gts, 5) == "From ") line.remove_prefix(1);
      current.append(line);
      current.push_back('\n');
    }
    prev_blank = trim(bare).empty();
    pos = next;
  }
  if (started) messages.push_back(std::move(current));
  for (std::size_t i = 0; i < messages.size(); ++i) {
    std::string& m = messages[i];
    // The blank line preceding the next separator belongs to the envelope.
    if (m.size() >= 2 && m.ends_with("\n\n")) m.pop_back();
    add_message(b, m, std::nullopt, i + 1);
  }
}

}  // namespace

ParseResult parse_corpus(const std::string& path, Format format, const ParseOptions& options) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::exists(path, ec)) throw Error("corpus path not readable: '" + path + "'");
  ParseResult result;
  Builder b{options, result, {}};
  switch (format) {
    case Format::kCsv: parse_csv_corpus(read_file(path), b); break;
    case Format::kJsonl: parse_jsonl_corpus(read_file(path), b); break;
    case Format::kEmlDir:
      if (!fs::is_directory(path)) throw Error("eml_dir path is not a directory: '" + path + "'");
      parse_eml_dir(path, b);
      break;
    case Format::kMbox: parse_mbox(read_file(path), b); break;
  }
  return result;
}

EmailRecord strip_headers(const EmailRecord& record) {
  EmailRecord out = record;
  out.header.reset();
  out.id = compute_id(out.source, out.header, out.body);
  return out;
}

std::string to_jsonl(const std::vector<EmailRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json obj;
    obj["id"] = r.id;
    obj["source"] = to_string(r.source);
    obj["body"] = r.body;
    obj["category"] = to_string(r.category);
    obj["label"] = r.category == Category::kPhish ? "phish" : r.category == Category::kLegit ? "legit" : "unknown";
    obj["origin"] = to_string(r.origin);
    obj["split"] = to_string(r.split);
    if (r.header) obj["header"] = *r.header;
    out += obj.dump(-1, ' ', false, json::error_handler_t::replace);
    out.push_back('\n');
  }
  return out;
}

std::vector<EmailRecord> records_from_jsonl(std::string_view text) {
  std::vector<EmailRecord> out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      json obj = json::parse(line);
      EmailRecord r;
      r.id = obj.at("id").get<std::string>();
      r.source = parse_source(obj.at("source").get<std::string>());
      r.body = obj.at("body").get<std::string>();
      r.category = parse_category(obj.at("category").get<std::string>());
      r.origin = parse_origin(obj.at("origin").get<std::string>());
      r.split = parse_split(obj.at("split").get<std::string>());
      if (obj.contains("header")) r.header = obj["header"].get<HeaderMap>();
      out.push_back(std::move(r));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError("records line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::size_t SplitPlan::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(assignment.begin(), assignment.end(), [s](const auto& kv) { return kv.second == s; }));
}

std::string SplitPlan::digest() const {
  std::string canonical = "seed=" + std::to_string(seed) + ";ratio=" + format_roundtrip(ratio) + ";";
  for (const auto& [id, s] : assignment) {
    canonical += id;
    canonical.push_back('=');
    canonical += to_string(s);
    canonical.push_back(';');
  }
  return sha256_hex(canonical);
}

std::map<std::string, Split> stratified_assign(const std::vector<std::string>& ids, const std::vector<int>& strata,
                                               double ratio, std::uint64_t seed) {
  if (ids.size() != strata.size()) throw ValidationError("stratified_assign: size mismatch");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must lie in (0,1)");
  std::map<int, std::vector<std::string>> groups;
  for (std::size_t i = 0; i < ids.size(); ++i) groups[strata[i]].push_back(ids[i]);
  std::map<std::string, Split> out;
  for (auto& [stratum, members] : groups) {
    std::sort(members.begin(), members.end());
    Rng rng(derive_seed(seed, "split/" + std::to_string(stratum)));
    rng.shuffle(members);
    auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(members.size())));
    for (std::size_t i = 0; i < members.size(); ++i) {
      out[members[i]] = i < n_train ? Split::kTrain : Split::kVal;
    }
  }
  return out;
}

SplitPlan make_split(const std::vector<EmailRecord>& records, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must lie in (0,1)");
  std::vector<std::string> ids;
  std::vector<int> strata;
  std::size_t phish = 0, legit = 0;
  for (const auto& r : records) {
    if (r.split == Split::kTest || r.category == Category::kUnknown) continue;
    // Generated emails are training-only and never enter validation.
    if (r.origin == Origin::kGenerated) continue;
    ids.push_back(r.id);
    strata.push_back(static_cast<int>(r.category));
    (r.category == Category::kPhish ? phish : legit)++;
  }
  if (ids.empty()) throw ValidationError("make_split: no labeled records to split");
  if ((phish > 0 && phish < 2) || (legit > 0 && legit < 2)) {
    throw ValidationError("make_split: a category has fewer than 2 members and cannot be stratified (phish=" +
                          std::to_string(phish) + ", legit=" + std::to_string(legit) + ")");
  }
  SplitPlan plan;
  plan.seed = seed;
  plan.ratio = ratio;
  plan.assignment = stratified_assign(ids, strata, ratio, seed);
  return plan;
}

std::vector<EmailRecord> apply_split(std::vector<EmailRecord> records, const SplitPlan& plan) {
  for (auto& r : records) {
    if (r.split == Split::kTest) continue;
    if (r.origin == Origin::kGenerated) {
      r.split = Split::kTrain;
      continue;
    }
    auto it = plan.assignment.find(r.id);
    r.split = it == plan.assignment.end() ? Split::kUnassigned : it->second;
  }
  return records;
}

std::size_t ceil_count(double fraction, std::size_t n) {
  double product = fraction * static_cast<double>(n);
  return static_cast<std::size_t>(std::ceil(product - 1e-9 * std::max(1.0, product)));
}

std::vector<std::string> sample_for_trait_labeling(const std::vector<EmailRecord>& records, double fraction,
                                                   std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("labeling fraction must lie in (0,1]");
  std::vector<std::string> pool;
  for (const auto& r : records) {
    if (r.category == Category::kPhish && r.split == Split::kTrain && r.origin == Origin::kReal) pool.push_back(r.id);
  }
  if (pool.empty()) throw ValidationError("no phishing training records to sample for trait labeling");
  std::sort(pool.begin(), pool.end());
  Rng rng(derive_seed(seed, "trait-label-sample"));
  rng.shuffle(pool);
  pool.resize(ceil_count(fraction, pool.size()));
  std::sort(pool.begin(), pool.end());
  return pool;
}

int TraitAnnotation::value(Trait t) const {
  switch (t) {
    case Trait::kUrgency: return urgency;
    case Trait::kFear: return fear;
    case Trait::kDesire: return desire;
  }
  return 0;
}

LabelSummary summarize_labels(const std::vector<TraitAnnotation>& annotations) {
  LabelSummary s;
  s.rows = annotations.size();
  if (annotations.empty()) return s;
  double n = static_cast<double>(annotations.size());
  std::size_t u = 0, f = 0, d = 0, uf = 0, all = 0;
  for (const auto& a : annotations) {
    u += a.urgency;
    f += a.fear;
    d += a.desire;
    uf += a.urgency && a.fear;
    all += a.urgency && a.fear && a.desire;
  }
  s.urgency_marginal = u / n;
  s.fear_marginal = f / n;
  s.desire_marginal = d / n;
  s.urgency_and_fear = uf / n;
  s.all_three = all / n;
  return s;
}

std::string LabelSummary::describe() const {
  auto pct = [](double v) { return format_fixed(100.0 * v, 2) + "%"; };
  std::string out = std::to_string(rows) + " annotations; urgency " + pct(urgency_marginal) + ", fear " +
                    pct(fear_marginal) + ", desire " + pct(desire_marginal) + ", urgency+fear " +
                    pct(urgency_and_fear) + ", all three " + pct(all_three);
  if (duplicates_superseded) out += "; " + std::to_string(duplicates_superseded) + " duplicate rows superseded";
  return out;
}

LabelImport parse_trait_labels(std::string_view text, const std::vector<EmailRecord>* known_records) {
  auto rows = csv::parse(text);
  if (rows.empty()) throw ValidationError("labels csv is empty (header required)");
  if (csv::format_row(rows.front().fields) != std::string(kLabelsHeader) + "\n") {
    throw ValidationError("labels csv header must be exactly '" + std::string(kLabelsHeader) + "'");
  }
  std::map<std::string, Category> known;
  if (known_records) {
    for (const auto& r : *known_records) known[r.id] = r.category;
  }
  LabelImport out;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  std::vector<std::string> rejected;
  auto parse_bit = [](const std::string& v, const char* column, std::size_t line) {
    if (v == "0") return 0;
    if (v == "1") return 1;
    throw ValidationError("labels row at line " + std::to_string(line) + ": " + column + " must be 0 or 1, got '" +
                          v + "'");
  };
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    std::size_t line = rows[i].line;
    if (f.size() != 6) {
      throw ValidationError("labels row at line " + std::to_string(line) + ": expected 6 columns, got " +
                            std::to_string(f.size()));
    }
    TraitAnnotation a;
    a.email_id = f[0];
    a.urgency = parse_bit(f[1], "urgency", line);
    a.fear = parse_bit(f[2], "fear", line);
    a.desire = parse_bit(f[3], "desire", line);
    a.annotator = f[4];
    try {
      std::size_t used = 0;
      a.timestamp = std::stoll(f[5], &used);
      if (used != f[5].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError("labels row at line " + std::to_string(line) + ": timestamp must be integer seconds");
    }
    if (known_records) {
      auto it = known.find(a.email_id);
      if (it == known.end() || it->second != Category::kPhish) {
        rejected.push_back(std::to_string(line) + (it == known.end() ? " (unknown id)" : " (not phishing)"));
        continue;
      }
    }
    auto key = std::make_pair(a.email_id, a.annotator);
    if (auto it = slot.find(key); it != slot.end()) {
      out.annotations[it->second] = std::move(a);
      ++out.summary.duplicates_superseded;
    } else {
      slot.emplace(key, out.annotations.size());
      out.annotations.push_back(std::move(a));
    }
  }
  if (!rejected.empty()) {
    std::string msg = "labels reference emails outside the phishing corpus at line(s): ";
    for (std::size_t i = 0; i < rejected.size(); ++i) msg += (i ? ", " : "") + rejected[i];
    throw ValidationError(msg);
  }
  std::size_t dups = out.summary.duplicates_superseded;
  out.summary = summarize_labels(out.annotations);
  out.summary.duplicates_superseded = dups;
  return out;
}

LabelImport import_trait_labels(const std::string& csv_path, const std::vector<EmailRecord>* known_records) {
  return parse_trait_labels(read_file(csv_path), known_records);
}

std::string format_trait_labels(const std::vector<TraitAnnotation>& annotations) {
  std::string out = std::string(kLabelsHeader) + "\n";
  for (const auto& a : annotations) {
    out += csv::format_row({a.email_id, std::to_string(a.urgency), std::to_string(a.fear), std::to_string(a.desire),
                            a.annotator, std::to_string(a.timestamp)});
  }
  return out;
}

void export_trait_labels(const std::vector<TraitAnnotation>& annotations, const std::string& csv_path) {
  write_file_atomic(csv_path, format_trait_labels(annotations));
}

std::vector<TraitAnnotation> current_per_email(const std::vector<TraitAnnotation>& annotations) {
  std::map<std::string, TraitAnnotation> best;
  for (const auto& a : annotations) {
    auto it = best.find(a.email_id);
    if (it == best.end()) {
      best.emplace(a.email_id, a);
    } else if (a.timestamp > it->second.timestamp ||
               (a.timestamp == it->second.timestamp && a.annotator >= it->second.annotator)) {
      it->second = a;
    }
  }
  std::vector<TraitAnnotation> out;
  out.reserve(best.size());
  for (auto& [id, a] : best) out.push_back(std::move(a));
  return out;
}

}  // namespace pptdetect::corpus
