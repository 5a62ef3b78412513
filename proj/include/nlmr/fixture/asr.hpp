#pragma once

#include <span>
#include <string>
#include <vector>

#include "nlmr/eval/metrics.hpp"
#include "nlmr/random.hpp"
#include "nlmr/rescore/nbest.hpp"
#include "nlmr/rescore/rescorer.hpp"

namespace nlmr::fixture {

// Noise channel turning reference sentences into first-pass n-best lists.
struct ChannelConfig {
  std::size_t nbest = 10;
  double substitution = 0.08;
  double deletion = 0.03;
  double insertion = 0.03;
  /// Acoustic log-likelihood lost per edit against the reference.
  double acoustic_per_error = 3.0;
  /// Standard deviation of the Gaussian acoustic noise per hypothesis.
  double acoustic_noise = 2.5;
  std::uint64_t seed = 11;
};

/// Corrupts `ref` with random edits drawn from `confusions`.
std::vector<std::string> Corrupt(std::span<const std::string> ref, std::span<const std::string> confusions,
                                 const ChannelConfig& config, Rng& rng);

/// Scores `words` left to right with a fresh session of `lm`.
std::vector<double> FirstPassLogprobs(const rescore::RescoringLm& lm, std::span<const std::string> words);

/// Fills total and first-pass order (sorted by total, descending).
void FinishList(rescore::NBestList& list);

/// One n-best list per reference (ids utt00000, utt00001, ...). The
/// hypotheses are distinct; the reference itself is among the candidates
/// only when the channel happens to leave it intact.
std::vector<rescore::NBestList> MakeNBestLists(std::span<const std::vector<std::string>> refs,
                                               std::span<const std::string> confusions,
                                               const rescore::RescoringLm& first_pass, const ChannelConfig& config);

// Contact-name fixture: each utterance contains one name that the second-pass
// LM has never seen. First-pass hypotheses either keep the name (inside class
// tags, with a personalized class score) or replace it with a common word.
struct EntityFixture {
  std::vector<eval::TaggedReference> refs;
  std::vector<rescore::NBestList> tagged;
  std::vector<rescore::NBestList> untagged;  // same hypotheses without tags
};

struct EntityConfig {
  ChannelConfig channel;
  /// First-pass log-probability of a name inside the class.
  double name_logprob = -3.0;
  /// Acoustic advantage of the true name over a confusable common word.
  double name_acoustic_margin = 1.0;
};

EntityFixture MakeEntityFixture(std::span<const std::vector<std::string>> sentences, std::span<const std::string> names,
                                std::span<const std::string> confusions, const rescore::RescoringLm& first_pass,
                                const EntityConfig& config);

}  // namespace nlmr::fixture
