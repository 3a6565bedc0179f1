#include "pptdetect/balance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pptdetect::balance {

using nlohmann::json;

std::vector<std::size_t> nearest_neighbors(const std::vector<std::vector<double>>& minority, std::size_t i,
                                           std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(minority.size());
  for (std::size_t j = 0; j < minority.size(); ++j) {
    if (j == i) continue;
    double s = 0.0;
    for (std::size_t c = 0; c < minority[i].size(); ++c) {
      double diff = minority[i][c] - minority[j][c];
      s += diff * diff;
    }
    d.emplace_back(s, j);
  }
  k = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < k; ++j) out.push_back(d[j].second);
  return out;
}

std::vector<SmoteSample> smote(const std::vector<std::vector<double>>& minority, std::size_t k,
                               std::size_t n_synthetic, std::uint64_t seed) {
  if (k < 1) throw ValidationError("smote: k must be at least 1");
  if (minority.size() < k + 1) {
    throw ValidationError("smote: need at least k+1 = " + std::to_string(k + 1) + " minority vectors, got " +
                          std::to_string(minority.size()));
  }
  const std::size_t dim = minority.front().size();
  for (const auto& v : minority)
    if (v.size() != dim) throw ValidationError("smote: minority vectors differ in dimension");

  std::vector<std::vector<std::size_t>> neighbors(minority.size());
  std::vector<SmoteSample> out;
  out.reserve(n_synthetic);
  for (std::size_t j = 0; j < n_synthetic; ++j) {
    Rng rng(derive_seed(seed, "smote/" + std::to_string(j)));
    std::size_t base = static_cast<std::size_t>(rng.below(minority.size()));
    if (neighbors[base].empty()) neighbors[base] = nearest_neighbors(minority, base, k);
    std::size_t nn = neighbors[base][rng.below(neighbors[base].size())];
    double lambda = rng.uniform01();
    SmoteSample s{std::vector<double>(dim), base, nn, lambda};
    for (std::size_t c = 0; c < dim; ++c) s.values[c] = minority[base][c] + lambda * (minority[nn][c] - minority[base][c]);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !space(text[i])) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

namespace {

std::string join(const std::vector<std::string>& words, std::size_t from, std::size_t n) {
  std::string out;
  for (std::size_t i = from; i < from + n; ++i) {
    if (i > from) out.push_back(' ');
    out += words[i];
  }
  return out;
}

template <typename Map>
const std::string& draw(const Map& counts, Rng& rng) {
  std::size_t total = 0;
  for (const auto& [key, c] : counts) total += c;
  std::size_t r = static_cast<std::size_t>(rng.below(total));
  for (const auto& [key, c] : counts) {
    if (r < c) return key;
    r -= c;
  }
  return counts.rbegin()->first;
}

}  // namespace

MarkovModel markov_train(const std::vector<std::string>& texts, std::size_t order, std::uint64_t seed) {
  if (order < 1) throw ValidationError("markov order must be at least 1");
  if (texts.empty()) throw ValidationError("markov_train: no training texts");
  MarkovModel m;
  m.order = order;
  m.seed = seed;
  std::vector<std::string> vocab;
  for (const auto& text : texts) {
    auto words = split_words(text);
    if (words.size() < order) continue;
    vocab.insert(vocab.end(), words.begin(), words.end());
    m.starts[join(words, 0, order)]++;
    for (std::size_t i = 0; i + order <= words.size(); ++i) {
      const std::string& next = i + order < words.size() ? words[i + order] : std::string(kEndToken);
      m.transitions[join(words, i, order)][next]++;
    }
  }
  if (m.starts.empty()) {
    throw ValidationError("markov_train: order " + std::to_string(order) + " exceeds the length of every training text");
  }
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  m.vocabulary = std::move(vocab);
  return m;
}

json MarkovModel::to_json() const {
  return json{{"order", order}, {"seed", seed}, {"vocabulary", vocabulary}, {"transitions", transitions},
              {"starts", starts}};
}

MarkovModel MarkovModel::from_json(const json& j) {
  try {
    MarkovModel m;
    m.order = j.at("order").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    m.transitions = j.at("transitions").get<decltype(m.transitions)>();
    m.starts = j.at("starts").get<decltype(m.starts)>();
    if (m.starts.empty()) throw ValidationError("markov model has no start contexts");
    return m;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("malformed markov model: ") + e.what());
  }
}

std::vector<corpus::EmailRecord> markov_generate(const MarkovModel& model, const GenerateOptions& options) {
  if (options.min_words < 1 || options.max_words < options.min_words) {
    throw ValidationError("markov_generate: require max_words >= min_words >= 1");
  }
  if (model.starts.empty()) throw ValidationError("markov_generate: empty model");
  std::vector<corpus::EmailRecord> out;
  out.reserve(options.count);
  for (std::size_t n = 0; n < options.count; ++n) {
    Rng rng(derive_seed(options.seed, "markov/" + std::to_string(n)));
    std::vector<std::string> words;
    while (words.size() < options.max_words) {
      if (words.size() >= options.min_words) break;
      std::vector<std::string> context = split_words(draw(model.starts, rng));
      for (const auto& w : context) {
        if (words.size() < options.max_words) words.push_back(w);
      }
      while (words.size() < options.max_words) {
        auto it = model.transitions.find(join(context, 0, context.size()));
        if (it == model.transitions.end()) break;
        const std::string& next = draw(it->second, rng);
        if (next == kEndToken) break;
        words.push_back(next);
        context.erase(context.begin());
        context.push_back(next);
      }
    }
    corpus::EmailRecord r;
    r.source = corpus::Source::kSynthetic;
    r.header = corpus::HeaderMap{{"X-Generator", "markov-order-" + std::to_string(model.order)},
                                 {"X-Generated-Index", std::to_string(n)}};
    r.body = join(words, 0, words.size());
    r.category = corpus::Category::kPhish;
    r.origin = corpus::Origin::kGenerated;
    r.split = corpus::Split::kTrain;
    r.id = corpus::compute_id(r.source, r.header, r.body);
    out.push_back(std::move(r));
  }
  return out;
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kNone: return "NONE";
    case Strategy::kSmote: return "SMOTE";
    case Strategy::kWeights: return "WEIGHTS";
    case Strategy::kGenerated: return "GENERATED";
  }
  return "NONE";
}

Strategy parse_strategy(std::string_view s) {
  std::string u;
  for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (u == "NONE") return Strategy::kNone;
  if (u == "SMOTE") return Strategy::kSmote;
  if (u == "WEIGHTS") return Strategy::kWeights;
  if (u == "GENERATED") return Strategy::kGenerated;
  throw ValidationError("unknown balance strategy '" + std::string(s) + "'");
}

void BalanceConfig::validate() const {
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) throw ValidationError("balance target_ratio must be in (0, 1]");
  if (smote_k < 1) throw ValidationError("balance smote_k must be at least 1");
  if (markov_order < 1) throw ValidationError("balance markov_order must be at least 1");
  if (min_words < 1 || max_words < min_words) throw ValidationError("balance requires max_words >= min_words >= 1");
}

json BalanceConfig::to_json() const {
  return json{{"strategy", std::string(to_string(strategy))},
              {"target_ratio", target_ratio},
              {"smote_k", smote_k},
              {"markov_order", markov_order},
              {"min_words", min_words},
              {"max_words", max_words},
              {"seed", seed}};
}

BalanceConfig BalanceConfig::from_json(const json& j) {
  BalanceConfig c;
  if (j.contains("strategy")) c.strategy = parse_strategy(j["strategy"].get<std::string>());
  c.target_ratio = j.value("target_ratio", c.target_ratio);
  c.smote_k = j.value("smote_k", c.smote_k);
  c.markov_order = j.value("markov_order", c.markov_order);
  c.min_words = j.value("min_words", c.min_words);
  c.max_words = j.value("max_words", c.max_words);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::size_t synthetic_needed(std::size_t n_major, std::size_t n_minor, double target_ratio) {
  auto want = static_cast<std::size_t>(std::llround(target_ratio * static_cast<double>(n_major)));
  return want > n_minor ? want - n_minor : 0;
}

FeatureRebalance rebalance_features(const fusion::LabeledFeatures& train, const BalanceConfig& config) {
  config.validate();
  FeatureRebalance out;
  out.train = train;
  for (auto c : train.categories) {
    if (c == corpus::Category::kPhish) out.counts.phish++;
    else if (c == corpus::Category::kLegit) out.counts.legit++;
  }
  switch (config.strategy) {
    case Strategy::kNone:
    case Strategy::kGenerated:
      return out;
    case Strategy::kWeights:
      out.weighting = fusion::ClassWeighting::kInverseFrequency;
      return out;
    case Strategy::kSmote:
      break;
  }
  const bool phish_minor = out.counts.phish <= out.counts.legit;
  const corpus::Category minor = phish_minor ? corpus::Category::kPhish : corpus::Category::kLegit;
  const std::size_t n_minor = phish_minor ? out.counts.phish : out.counts.legit;
  const std::size_t n_major = phish_minor ? out.counts.legit : out.counts.phish;
  const std::size_t needed = synthetic_needed(n_major, n_minor, config.target_ratio);
  if (needed == 0) return out;
  std::vector<std::vector<double>> minority;
  for (std::size_t i = 0; i < train.features.size(); ++i)
    if (train.categories[i] == minor) minority.push_back(train.features[i].values);
  auto samples = smote(minority, config.smote_k, needed, config.seed);
  const auto appended = train.features.empty() ? std::vector<Trait>{} : train.features.front().appended;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    out.train.features.push_back({"smote:" + std::to_string(j), std::move(samples[j].values), appended});
    out.train.categories.push_back(minor);
  }
  (phish_minor ? out.counts.phish : out.counts.legit) += needed;
  out.counts.synthetic = needed;
  return out;
}

RecordRebalance generate_for_balance(const std::vector<corpus::EmailRecord>& records, const BalanceConfig& config) {
  config.validate();
  RecordRebalance out;
  std::vector<std::string> texts;
  for (const auto& r : records) {
    if (r.split != corpus::Split::kTrain) continue;
    if (r.category == corpus::Category::kPhish) {
      out.counts.phish++;
      if (r.origin == corpus::Origin::kReal) texts.push_back(r.body);
    } else if (r.category == corpus::Category::kLegit) {
      out.counts.legit++;
    }
  }
  if (config.strategy != Strategy::kGenerated) return out;
  const std::size_t needed = synthetic_needed(out.counts.legit, out.counts.phish, config.target_ratio);
  if (needed == 0) return out;
  if (texts.empty()) throw ValidationError("target ratio unreachable: no phishing training text to generate from");
  MarkovModel model = markov_train(texts, config.markov_order, config.seed);
  out.added = markov_generate(model, {needed, config.min_words, config.max_words, derive_seed(config.seed, "generate")});
  out.counts.phish += needed;
  out.counts.synthetic = needed;
  return out;
}

}  // namespace pptdetect::balance
