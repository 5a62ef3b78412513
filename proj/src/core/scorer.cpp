#include "nlmr/scorer.hpp"

#include <cmath>

namespace nlmr {

PerplexityResult ComputePerplexity(const SentenceScorer& scorer, const corpus::Corpus& dev) {
  if (dev.empty()) throw DataError("perplexity: empty evaluation corpus");
  PerplexityResult r;
  for (const auto& s : dev.sentences) {
    for (double lp : scorer.ScoreSentence(s)) {
      if (!std::isfinite(lp)) throw NumericError("perplexity: zero-probability event in corpus " + dev.name);
      r.log_prob_sum += lp;
      ++r.events;
    }
  }
  r.perplexity = std::exp(-r.log_prob_sum / static_cast<double>(r.events));
  return r;
}

}  // namespace nlmr
