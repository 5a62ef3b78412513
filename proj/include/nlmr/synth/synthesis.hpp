#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlmr/corpus/subword.hpp"
#include "nlmr/corpus/vocabulary.hpp"
#include "nlmr/nlm/parameters.hpp"

namespace nlmr::synth {

struct SynthesisConfig {
  std::size_t num_sentences = 1000;
  /// Maximum sampled tokens per sentence, </s> included; longer samples are truncated.
  std::size_t max_length = 50;
  double temperature = 1.0;
  std::uint64_t seed = 1;
  /// Sentences sampled in lockstep; does not affect the output.
  std::size_t batch_size = 64;
};

/// Maps sampled model ids back to words: either a word vocabulary or a
/// subword codec (model id = codec id + kSubwordIdOffset).
class TokenDecoder {
 public:
  static TokenDecoder Words(const corpus::Vocabulary& vocab);
  static TokenDecoder Subwords(const corpus::SubwordCodec& codec);

  std::size_t model_vocab_size() const;
  /// Ids that are never emitted: <s> and class tags, and in subword mode
  /// every reserved id except </s>.
  bool Masked(TokenId id) const;
  TokenId eos() const;
  std::string Decode(std::span<const TokenId> ids) const;

 private:
  const corpus::Vocabulary* vocab_ = nullptr;
  const corpus::SubwordCodec* codec_ = nullptr;
};

/// Ancestral sampling from the temperature-scaled softmax. Sentence i draws
/// from its own stream seeded by (seed, i), so the output is independent of
/// batch size. Returns one detokenized line per sentence, without framing.
std::vector<std::string> SampleSentences(const nlm::Parameters& params, const TokenDecoder& decoder,
                                         const SynthesisConfig& config);

struct FilterResult {
  std::vector<std::string> kept;
  std::size_t discarded = 0;
};

/// Keeps, in order, exactly the lines whose every word is an ordinary entry of `vocab`.
FilterResult FilterOov(std::span<const std::string> lines, const corpus::Vocabulary& vocab);

struct SynthesisStats {
  std::size_t kept = 0;
  std::size_t discarded = 0;
  double mean_len = 0.0;  // words per kept sentence

  double discard_rate() const {
    const auto total = kept + discarded;
    return total == 0 ? 0.0 : static_cast<double>(discarded) / static_cast<double>(total);
  }
};

struct SyntheticCorpus {
  std::vector<std::string> lines;
  SynthesisStats stats;
};

/// Sample then filter. Throws DataError("vocabulary filter rejected all samples")
/// when nothing survives.
SyntheticCorpus GenerateSyntheticCorpus(const nlm::Parameters& params, const TokenDecoder& decoder,
                                        const corpus::Vocabulary& target_vocab, const SynthesisConfig& config);

/// Sidecar lines: kept, discarded, mean_len (tab-separated key/value).
void WriteStats(const std::filesystem::path& path, const SynthesisStats& stats);
SynthesisStats ReadStats(const std::filesystem::path& path);

}  // namespace nlmr::synth
