#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlmr/random.hpp"
#include "nlmr/rescore/rescorer.hpp"

namespace nlmr::fixture {

struct WorldConfig {
  std::size_t num_words = 2000;
  std::size_t num_classes = 50;
  /// Per domain, mixture weights over the generating components: index 0 is
  /// shared by every domain, index k >= 1 is specific to domain k - 1. The same
  /// weights mix class transitions and word emissions.
  std::vector<std::vector<double>> mixtures{{0.7, 0.3, 0.0}, {0.7, 0.0, 0.3}};
  /// Likely successor classes per class context.
  std::size_t favoured_classes = 2;
  /// Share of the class transition that depends on the class two back.
  double trigram_weight = 0.25;
  /// Within-class word frequencies follow rank^-zipf_exponent.
  double zipf_exponent = 2.5;
  std::size_t max_length = 40;
  /// Per-class end-of-sentence probability is drawn uniformly from this range.
  std::array<double, 2> end_probability{0.04, 0.25};
  std::uint64_t seed = 7;
};

// Known generating LM for one domain: class trigram transitions with an
// end-of-sentence class, and a per-class word emission distribution. Each word
// belongs to exactly one class, so word probabilities are exact.
class Domain {
 public:
  /// P(c | c2, c1); contexts use kStart before the first word, c == end() ends the sentence.
  double ClassProb(std::size_t c2, std::size_t c1, std::size_t c) const;
  double EmissionProb(std::size_t word) const { return emission_[word]; }
  std::size_t end() const { return num_classes_; }
  std::size_t start() const { return num_classes_; }

 private:
  friend class World;
  std::size_t num_classes_ = 0;
  std::vector<double> transitions_;  // ((c2 * (C+1)) + c1) * (C+1) + c
  std::vector<double> emission_;     // by word index, normalized within its class
};

class World {
 public:
  static World Make(const WorldConfig& config);

  const WorldConfig& config() const { return config_; }
  std::span<const std::string> words() const { return words_; }
  /// Word index or -1.
  int Find(const std::string& word) const;
  std::size_t ClassOf(std::size_t word) const { return word_class_[word]; }
  const Domain& domain(std::size_t d) const { return domains_.at(d); }

  std::vector<std::string> Sample(std::size_t domain, Rng& rng) const;
  std::vector<std::string> SampleLines(std::size_t domain, std::size_t count, std::uint64_t seed) const;

  /// Natural-log probability of `word` after `history` (sentence so far) under
  /// `domain`; -inf for unknown words.
  double LogProb(std::size_t domain, std::span<const std::string> history, const std::string& word) const;
  /// log P(</s> | history).
  double LogProbEnd(std::size_t domain, std::span<const std::string> history) const;

 private:
  std::pair<std::size_t, std::size_t> Context(std::size_t domain, std::span<const std::string> history) const;

  WorldConfig config_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> word_class_;
  std::vector<std::vector<std::size_t>> class_words_;
  std::vector<Domain> domains_;
};

/// Pronounceable pseudo-words from consonant-vowel syllables, unique and
/// disjoint from `avoid`.
std::vector<std::string> PseudoWords(std::size_t count, std::uint64_t seed,
                                     std::span<const std::string> avoid = {});

/// The generating LM of one domain as a second-pass LM. Unknown words score
/// `unknown_logprob` and are reported as <unk>.
class TrueLm : public rescore::RescoringLm {
 public:
  TrueLm(const World& world, std::size_t domain, double unknown_logprob = -25.0)
      : world_(world), domain_(domain), unknown_(unknown_logprob) {}
  std::unique_ptr<rescore::LmSession> NewSession() const override;

 private:
  const World& world_;
  std::size_t domain_;
  double unknown_;
};

}  // namespace nlmr::fixture
