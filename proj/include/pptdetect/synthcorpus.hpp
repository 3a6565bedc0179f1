#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pptdetect/corpus.hpp"
#include "pptdetect/embeddings.hpp"

namespace pptdetect::synth {

/// Phrase lists per trait, in urgency, fear, desire order.
const std::vector<std::vector<std::string>>& trait_phrases();

struct SynthOptions {
  std::size_t count = 2000;
  double phish_fraction = 0.5;
  double test_fraction = 0.2;
  /// Per-trait presence probability in phishing emails.
  double p_urgency = 0.6;
  double p_fear = 0.5;
  double p_desire = 0.4;
  std::size_t min_sentences = 4;
  std::size_t max_sentences = 8;
  std::uint64_t seed = 7;
  embeddings::NativeEncoderConfig encoder;
};

struct SynthEmail {
  corpus::EmailRecord record;  // id as assigned by jsonl ingestion with source SYNTHETIC
  std::string masked_body;     // trait phrases removed
  int urgency = 0;
  int fear = 0;
  int desire = 0;
};

struct SynthCorpus {
  std::vector<SynthEmail> train;
  std::vector<SynthEmail> test;
};

/// Phishing and legitimate bodies share one neutral vocabulary; only
/// phishing bodies carry trait phrases, at least one trait each.
SynthCorpus generate(const SynthOptions& options);

std::string mask_trait_phrases(std::string_view body);

/// Writes train.jsonl, test.jsonl, labels.csv (all phishing train emails) and
/// embeddings.tsv (masked text) into dir. Returns the written paths.
std::vector<std::string> write_corpus(const SynthCorpus& corpus, const std::string& dir,
                                      const embeddings::NativeEncoderConfig& encoder);

}  // namespace pptdetect::synth
