#include "pptdetect/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <boost/math/distributions/students_t.hpp>
#include <unicode/uchar.h>

#include "pptdetect/csv.hpp"

namespace pptdetect::eval {

using nlohmann::json;

std::string format_percent(double fraction) { return format_fixed(100.0 * fraction, 2); }

Summary aggregate(const std::vector<Metrics>& per_split) {
  Summary s;
  if (per_split.empty()) return s;
  const double n = static_cast<double>(per_split.size());
  auto fields = [](Metrics& m) { return std::array<double*, 4>{&m.accuracy, &m.precision, &m.recall, &m.f1}; };
  auto mean = fields(s.mean);
  auto sd = fields(s.sd);
  for (Metrics m : per_split) {
    auto f = fields(m);
    for (std::size_t i = 0; i < 4; ++i) *mean[i] += *f[i] / n;
  }
  if (per_split.size() > 1) {
    for (Metrics m : per_split) {
      auto f = fields(m);
      for (std::size_t i = 0; i < 4; ++i) *sd[i] += (*f[i] - *mean[i]) * (*f[i] - *mean[i]);
    }
    for (std::size_t i = 0; i < 4; ++i) *sd[i] = std::sqrt(*sd[i] / (n - 1.0));
  }
  return s;
}

namespace {

json metrics_json(const Metrics& m) {
  return json{{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

json summary_json(const Summary& s) { return json{{"mean", metrics_json(s.mean)}, {"sd", metrics_json(s.sd)}}; }

std::string pad(std::string s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

}  // namespace

json EvalReport::to_json() const {
  json per = json::array();
  for (const auto& e : splits) {
    per.push_back({{"seed", e.seed},
                   {"confusion", {{"tp", e.confusion.tp}, {"fp", e.confusion.fp}, {"fn", e.confusion.fn}, {"tn", e.confusion.tn}}},
                   {"metrics", metrics_json(e.metrics)}});
  }
  return json{{"arm", arm}, {"splits", per}, {"summary", summary_json(summary)}, {"config_digest", config_digest}};
}

SplitEntry evaluate(const std::vector<corpus::Category>& predicted, const std::vector<corpus::Category>& truth,
                    std::uint64_t seed) {
  if (predicted.size() != truth.size()) {
    throw ValidationError("evaluate: " + std::to_string(predicted.size()) + " predictions for " +
                          std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw ValidationError("evaluate: empty input");
  std::vector<bool> p(predicted.size()), t(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    p[i] = predicted[i] == corpus::Category::kPhish;
    t[i] = truth[i] == corpus::Category::kPhish;
  }
  SplitEntry e;
  e.seed = seed;
  e.confusion = confusion(p, t);
  e.metrics = metrics_from(e.confusion);
  return e;
}

EvalReport make_report(std::string arm, std::vector<SplitEntry> splits, std::string config_digest) {
  EvalReport r;
  r.arm = std::move(arm);
  std::vector<Metrics> ms;
  for (const auto& e : splits) ms.push_back(e.metrics);
  r.summary = aggregate(ms);
  r.splits = std::move(splits);
  r.config_digest = std::move(config_digest);
  return r;
}

std::string format_reports(const std::vector<EvalReport>& reports) {
  std::string out = pad("arm", 16, true) + pad("split", 8) + pad("acc %", 10) + pad("prec %", 10) + pad("rec %", 10) +
                    pad("F1 %", 10) + "\n";
  auto row = [&](const std::string& arm, const std::string& split, const Metrics& m) {
    out += pad(arm, 16, true) + pad(split, 8) + pad(format_percent(m.accuracy), 10) +
           pad(format_percent(m.precision), 10) + pad(format_percent(m.recall), 10) + pad(format_percent(m.f1), 10) +
           "\n";
  };
  for (const auto& r : reports) {
    for (const auto& e : r.splits) row(r.arm, std::to_string(e.seed), e.metrics);
    row(r.arm, "mean", r.summary.mean);
    row(r.arm, "sd", r.summary.sd);
  }
  return out;
}

std::string_view to_string(SignificanceTest t) {
  return t == SignificanceTest::kPairedT ? "PAIRED_T" : "MCNEMAR_EXACT";
}

SignificanceTest parse_significance_test(std::string_view s) {
  if (s == "PAIRED_T" || s == "paired_t") return SignificanceTest::kPairedT;
  if (s == "MCNEMAR_EXACT" || s == "mcnemar_exact") return SignificanceTest::kMcnemarExact;
  throw ValidationError("unknown significance test '" + std::string(s) + "'");
}

json SignificanceResult::to_json() const {
  return json{{"test", std::string(to_string(test))},
              {"statistic", statistic},
              {"p_value", p_value},
              {"degenerate", degenerate},
              {"description", description}};
}

SignificanceResult paired_t(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("paired_t: arms differ in length");
  if (a.size() < 2) throw ValidationError("paired_t: need at least 2 pairs");
  const double n = static_cast<double>(a.size());
  std::vector<double> d(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d[i] = a[i] - b[i];
    mean += d[i] / n;
  }
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  var /= n - 1.0;
  SignificanceResult r;
  r.test = SignificanceTest::kPairedT;
  r.description = std::to_string(a.size()) + " paired values";
  // Differences of equal values cancel exactly; relative noise below this is treated as zero spread.
  const double scale = std::max({std::abs(mean), 1e-300});
  if (var <= 0.0 || std::sqrt(var) <= 1e-12 * scale) {
    r.degenerate = true;
    r.statistic = mean == 0.0 ? 0.0 : std::copysign(INFINITY, mean);
    r.p_value = mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.statistic = mean / std::sqrt(var / n);
  boost::math::students_t dist(n - 1.0);
  r.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.statistic))), 0.0, 1.0);
  return r;
}

SignificanceResult mcnemar_exact(std::size_t b, std::size_t c) {
  SignificanceResult r;
  r.test = SignificanceTest::kMcnemarExact;
  r.description = "discordant pairs b=" + std::to_string(b) + " c=" + std::to_string(c);
  const std::size_t n = b + c;
  r.statistic = static_cast<double>(std::min(b, c));
  if (n == 0) {
    r.degenerate = true;
    r.p_value = 1.0;
    return r;
  }
  // log C(n, i) + n log 0.5, summed in linear space.
  double tail = 0.0;
  const double log_half_n = static_cast<double>(n) * std::log(0.5);
  for (std::size_t i = 0; i <= std::min(b, c); ++i) {
    double log_c = std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(i) + 1.0) -
                   std::lgamma(static_cast<double>(n - i) + 1.0);
    tail += std::exp(log_c + log_half_n);
  }
  r.p_value = std::min(1.0, 2.0 * tail);
  return r;
}

SignificanceResult mcnemar_exact(const std::vector<bool>& a_correct, const std::vector<bool>& b_correct) {
  if (a_correct.size() != b_correct.size()) throw ValidationError("mcnemar: systems scored different email sets");
  std::size_t b = 0, c = 0;
  for (std::size_t i = 0; i < a_correct.size(); ++i) {
    if (a_correct[i] && !b_correct[i]) ++b;
    if (!a_correct[i] && b_correct[i]) ++c;
  }
  return mcnemar_exact(b, c);
}

void ArmData::add(const std::string& id, corpus::Category c, const std::vector<double>* e,
                  const traitnet::PPTScore* s) {
  ids.push_back(id);
  categories.push_back(c);
  embeddings.push_back(e);
  scores.push_back(s);
}

fusion::LabeledFeatures features_for(const ArmData& data, const fusion::FusionConfig& config) {
  fusion::LabeledFeatures out;
  out.categories = data.categories;
  out.features.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.embeddings[i]) throw ValidationError("no embedding for '" + data.ids[i] + "'");
    out.features.push_back(fusion::build_features(data.ids[i], *data.embeddings[i], data.scores[i], config));
  }
  return out;
}

ArmResult run_arm(const SplitData& split, const fusion::FusionConfig& config, const balance::BalanceConfig& balance,
                  fusion::DetectorModel* model_out) {
  fusion::FusionConfig cfg = config;
  cfg.seed = derive_seed(split.seed, "detector");
  auto rebalanced = balance::rebalance_features(features_for(split.train, cfg), balance);
  if (rebalanced.weighting == fusion::ClassWeighting::kInverseFrequency) cfg.weighting = rebalanced.weighting;
  auto model = fusion::train_detector(rebalanced.train, features_for(split.val, cfg), cfg, split.split_digest);
  auto test = features_for(split.test, cfg);
  ArmResult r;
  r.train_counts = rebalanced.counts;
  r.probabilities = fusion::predict(model, test.features);
  std::vector<corpus::Category> predicted;
  for (double p : r.probabilities) predicted.push_back(fusion::is_phish(p) ? corpus::Category::kPhish : corpus::Category::kLegit);
  r.entry = evaluate(predicted, test.categories, split.seed);
  for (std::size_t i = 0; i < predicted.size(); ++i) r.correct.push_back(predicted[i] == test.categories[i]);
  if (model_out) *model_out = std::move(model);
  return r;
}

json AblationTable::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    json row{{"dropped", trait_name(r.dropped)}, {"delta_accuracy", r.delta_accuracy}, {"delta_f1", r.delta_f1}};
    if (r.error) row["error"] = *r.error;
    rows_j.push_back(row);
  }
  return json{{"baseline", summary_json(baseline)}, {"rows", rows_j}};
}

std::string AblationTable::format() const {
  std::string out = pad("dropped", 10, true) + pad("dAcc %", 10) + pad("dF1 %", 10) + "\n";
  for (const auto& r : rows) {
    if (r.error) {
      out += pad(std::string(trait_name(r.dropped)), 10, true) + "  error: " + *r.error + "\n";
    } else {
      out += pad(std::string(trait_name(r.dropped)), 10, true) + pad(format_percent(r.delta_accuracy), 10) +
             pad(format_percent(r.delta_f1), 10) + "\n";
    }
  }
  return out;
}

AblationTable ablation_run(const std::vector<SplitData>& splits, const fusion::FusionConfig& base,
                           const balance::BalanceConfig& balance) {
  if (splits.empty()) throw ValidationError("ablation_run: no splits");
  fusion::FusionConfig full = base;
  full.include_ppt = true;
  full.trait_mask = std::vector<Trait>(std::begin(kAllTraits), std::end(kAllTraits));
  std::vector<Metrics> baseline;
  for (const auto& s : splits) baseline.push_back(run_arm(s, full, balance).entry.metrics);
  AblationTable table;
  table.baseline = aggregate(baseline);
  for (Trait t : kAllTraits) {
    AblationRow row;
    row.dropped = t;
    fusion::FusionConfig masked = full;
    masked.trait_mask.erase(std::remove(masked.trait_mask.begin(), masked.trait_mask.end(), t), masked.trait_mask.end());
    try {
      const double n = static_cast<double>(splits.size());
      for (std::size_t i = 0; i < splits.size(); ++i) {
        Metrics m = run_arm(splits[i], masked, balance).entry.metrics;
        row.delta_accuracy += (m.accuracy - baseline[i].accuracy) / n;
        row.delta_f1 += (m.f1 - baseline[i].f1) / n;
      }
    } catch (const Error& e) {
      row.delta_accuracy = row.delta_f1 = 0.0;
      row.error = e.what();
    }
    table.rows.push_back(row);
  }
  return table;
}

ArmData subsample(const ArmData& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("sweep fraction must be in (0, 1]");
  std::map<corpus::Category, std::vector<std::size_t>> by_cat;
  for (std::size_t i = 0; i < data.size(); ++i) by_cat[data.categories[i]].push_back(i);
  std::vector<std::size_t> keep;
  for (auto& [cat, idx] : by_cat) {
    auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    if (n == 0) {
      throw ValidationError("fraction " + format_fixed(fraction, 4) + " leaves no " + std::string(corpus::to_string(cat)) +
                            " training emails");
    }
    if (n < idx.size()) {
      Rng rng(derive_seed(seed, "subsample/" + std::string(corpus::to_string(cat))));
      rng.shuffle(idx);
    }
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  }
  std::sort(keep.begin(), keep.end());
  if (by_cat.size() < 2) throw ValidationError("subsample contains a single category");
  ArmData out;
  for (std::size_t i : keep) out.add(data.ids[i], data.categories[i], data.embeddings[i], data.scores[i]);
  return out;
}

json SweepCurve::to_json() const {
  json pts = json::array();
  for (const auto& p : points) {
    json per = json::array();
    for (const auto& e : p.splits) per.push_back({{"seed", e.seed}, {"metrics", metrics_json(e.metrics)}});
    pts.push_back({{"fraction", p.fraction},
                   {"arm", p.arm},
                   {"train_size", p.train_size},
                   {"splits", per},
                   {"summary", summary_json(p.summary)}});
  }
  return json{{"points", pts}};
}

std::string SweepCurve::format() const {
  std::string out = pad("fraction", 10) + "  " + pad("arm", 14, true) + pad("train", 8) + pad("acc %", 10) +
                    pad("F1 %", 10) + "\n";
  for (const auto& p : points) {
    out += pad(format_fixed(p.fraction, 2), 10) + "  " + pad(p.arm, 14, true) + pad(std::to_string(p.train_size), 8) +
           pad(format_percent(p.summary.mean.accuracy), 10) + pad(format_percent(p.summary.mean.f1), 10) + "\n";
  }
  return out;
}

SweepCurve proportion_sweep(const std::vector<SplitData>& splits, const std::vector<double>& fractions,
                            const fusion::FusionConfig& base, const balance::BalanceConfig& balance,
                            bool single_trait_arms) {
  if (splits.empty()) throw ValidationError("proportion_sweep: no splits");
  std::vector<std::pair<std::string, fusion::FusionConfig>> arms;
  fusion::FusionConfig with = base;
  with.include_ppt = true;
  with.trait_mask = std::vector<Trait>(std::begin(kAllTraits), std::end(kAllTraits));
  fusion::FusionConfig without = base;
  without.include_ppt = false;
  arms.emplace_back("with_ppt", with);
  arms.emplace_back("without_ppt", without);
  if (single_trait_arms) {
    for (Trait t : kAllTraits) {
      fusion::FusionConfig single = with;
      single.trait_mask = {t};
      arms.emplace_back(std::string(trait_name(t)) + "_only", single);
    }
  }
  SweepCurve curve;
  for (double f : fractions) {
    std::vector<SplitData> sub;
    for (const auto& s : splits) {
      SplitData copy = s;
      copy.train = subsample(s.train, f, derive_seed(s.seed, "sweep"));
      sub.push_back(std::move(copy));
    }
    for (const auto& [name, cfg] : arms) {
      SweepPoint p;
      p.fraction = f;
      p.arm = name;
      p.train_size = sub.front().train.size();
      std::vector<Metrics> ms;
      for (const auto& s : sub) {
        p.splits.push_back(run_arm(s, cfg, balance).entry);
        ms.push_back(p.splits.back().metrics);
      }
      p.summary = aggregate(ms);
      curve.points.push_back(std::move(p));
    }
  }
  return curve;
}

std::vector<double> centroid(const std::vector<std::vector<double>>& vectors) {
  if (vectors.empty()) throw ValidationError("centroid of an empty group");
  std::vector<double> c(vectors.front().size(), 0.0);
  for (const auto& v : vectors) {
    if (v.size() != c.size()) throw ValidationError("centroid: inconsistent dimensions");
    for (std::size_t i = 0; i < v.size(); ++i) c[i] += v[i];
  }
  for (double& x : c) x /= static_cast<double>(vectors.size());
  return c;
}

double distance(const std::vector<double>& a, const std::vector<double>& b, DistanceMetric metric) {
  if (a.size() != b.size()) throw ValidationError("distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += metric == DistanceMetric::kEuclidean ? d * d : std::abs(d);
  }
  return metric == DistanceMetric::kEuclidean ? std::sqrt(s) : s;
}

double centroid_distance(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                         DistanceMetric metric) {
  return distance(centroid(a), centroid(b), metric);
}

CentroidSeparation centroid_separation(const std::vector<std::vector<double>>& phish_with,
                                       const std::vector<std::vector<double>>& legit_with,
                                       const std::vector<std::vector<double>>& phish_without,
                                       const std::vector<std::vector<double>>& legit_without,
                                       DistanceMetric metric) {
  CentroidSeparation s;
  s.with_ppt = centroid_distance(phish_with, legit_with, metric);
  s.without_ppt = centroid_distance(phish_without, legit_without, metric);
  if (s.without_ppt == 0.0) throw ValidationError("centroid separation undefined: coincident centroids without PPT");
  s.ratio = (s.with_ppt - s.without_ppt) / s.without_ppt;
  return s;
}

double KdeCurve::integral() const {
  double total = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) total += 0.5 * (grid[i] - grid[i - 1]) * (densities[i] + densities[i - 1]);
  return total;
}

std::string KdeCurve::to_csv() const {
  std::string out = "x,density\n";
  for (std::size_t i = 0; i < grid.size(); ++i) out += format_fixed(grid[i], 6) + "," + format_fixed(densities[i], 6) + "\n";
  return out;
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<double> make_grid(double h) {
  std::vector<double> grid(kKdeGridPoints);
  const double lo = -3.0 * h, hi = 1.0 + 3.0 * h;
  for (std::size_t i = 0; i < kKdeGridPoints; ++i)
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kKdeGridPoints - 1);
  return grid;
}

}  // namespace

double silverman_bandwidth(const std::vector<double>& samples) {
  if (samples.size() < 2) return 0.0;
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double x : samples) mean += x / n;
  double var = 0.0;
  for (double x : samples) var += (x - mean) * (x - mean);
  const double sigma = std::sqrt(var / (n - 1.0));
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const double iqr = (quantile(sorted, 0.75) - quantile(sorted, 0.25)) / 1.34;
  double spread = std::min(sigma, iqr);
  if (spread <= 0.0) spread = std::max(sigma, iqr);
  return 0.9 * spread * std::pow(n, -0.2);
}

KdeCurve kde_curve(const std::vector<double>& scores) {
  for (double s : scores)
    if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("kde_curve: scores must lie in [0, 1]");
  if (scores.empty()) throw ValidationError("kde_curve: no samples");
  KdeCurve c;
  c.sample_size = scores.size();
  const double h = silverman_bandwidth(scores);
  if (!(h > 0.0)) {
    c.degenerate = true;
    c.bandwidth = kKdeMinBandwidth;
    c.grid = make_grid(c.bandwidth);
    c.densities.assign(kKdeGridPoints, 0.0);
    const double step = c.grid[1] - c.grid[0];
    auto nearest = static_cast<std::size_t>(std::llround((scores.front() - c.grid[0]) / step));
    c.densities[nearest] = 1.0 / step;
    return c;
  }
  c.bandwidth = std::max(h, kKdeMinBandwidth);
  c.grid = make_grid(c.bandwidth);
  c.densities.assign(kKdeGridPoints, 0.0);
  const double norm = 1.0 / (static_cast<double>(scores.size()) * c.bandwidth * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < kKdeGridPoints; ++i) {
    double sum = 0.0;
    for (double x : sorted) {
      double z = (c.grid[i] - x) / c.bandwidth;
      sum += std::exp(-0.5 * z * z);
    }
    c.densities[i] = sum * norm;
  }
  return c;
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words{
      "the",  "a",    "an",   "and",  "or",   "but",   "if",   "of",  "to",   "in",
      "on",   "at",   "by",   "for",  "with", "from",  "as",   "is",  "are",  "was",
      "were", "be",   "been", "it",   "this", "that",  "these", "those", "i",  "you",
      "he",   "she",  "we",   "they", "me",   "him",   "her",  "us",  "them", "my",
      "your", "our",  "their", "its", "not",  "no",    "so",   "do",  "does", "have"};
  return words;
}

std::vector<std::pair<std::string, std::size_t>> token_frequency(const std::vector<std::string>& texts,
                                                                 const std::set<std::string>& stopwords,
                                                                 std::size_t top_k) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    std::u32string token;
    auto flush = [&] {
      if (token.empty()) return;
      std::string t = utf8_encode(token);
      if (!stopwords.count(t)) counts[t]++;
      token.clear();
    };
    for (char32_t cp : utf8_decode(text)) {
      if (u_isalnum(static_cast<UChar32>(cp))) token.push_back(to_lower(cp));
      else flush();
    }
    flush();
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > top_k) ranked.resize(top_k);
  return ranked;
}

std::string export_score_scatter(const std::vector<ScatterRow>& rows) {
  std::string out = "email_id,urgency,fear,desire,category\n";
  for (const auto& r : rows) {
    out += csv::format_row({r.email_id, format_fixed(r.score.urgency, 6), format_fixed(r.score.fear, 6),
                            format_fixed(r.score.desire, 6), std::string(corpus::to_string(r.category))});
  }
  return out;
}

std::vector<ScatterRow> parse_score_scatter(std::string_view text) {
  auto rows = csv::parse(text);
  if (rows.empty() || rows.front().fields != std::vector<std::string>{"email_id", "urgency", "fear", "desire", "category"}) {
    throw ParseError("scatter CSV: unexpected header");
  }
  std::vector<ScatterRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    if (f.size() != 5) throw ParseError("scatter CSV line " + std::to_string(rows[i].line) + ": expected 5 fields");
    out.push_back({f[0], {parse_double(f[1]), parse_double(f[2]), parse_double(f[3])}, corpus::parse_category(f[4])});
  }
  return out;
}

}  // namespace pptdetect::eval
