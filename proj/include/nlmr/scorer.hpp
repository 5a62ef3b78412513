#pragma once

#include <span>
#include <vector>

#include "nlmr/common.hpp"
#include "nlmr/corpus/corpus.hpp"

namespace nlmr {

/// Anything that assigns natural-log scores to the events of a framed sentence.
class SentenceScorer {
 public:
  virtual ~SentenceScorer() = default;

  /// One score per predicted event: every token after the leading <s>,
  /// </s> included.
  virtual std::vector<double> ScoreSentence(std::span<const TokenId> sentence) const = 0;
};

struct PerplexityResult {
  double perplexity = 0.0;
  double log_prob_sum = 0.0;  // natural log
  std::size_t events = 0;
};

/// exp(-mean log score) over all events of `dev`. Shared by the n-gram and
/// neural evaluators so their numbers are comparable. Throws NumericError on a
/// non-finite event score and DataError on an empty corpus.
PerplexityResult ComputePerplexity(const SentenceScorer& scorer, const corpus::Corpus& dev);

}  // namespace nlmr
