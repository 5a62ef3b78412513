#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nlmr/corpus/corpus.hpp"
#include "nlmr/ngram/model.hpp"
#include "nlmr/scorer.hpp"

namespace nlmr::ngram {

struct EmOptions {
  double tolerance = 1e-6;
  int max_iterations = 200;
};

struct EmResult {
  std::vector<double> weights;
  int iterations = 0;
  /// Dev perplexity at the initial weights and after every update.
  std::vector<double> perplexity_history;
};

/// Linear-interpolation weights minimizing dev perplexity by EM: each
/// iteration sets weight_k to the mean posterior responsibility of component
/// k over dev events. Stops when no weight moves by more than `tolerance`.
/// Throws NumericError when a dev event has zero probability under every
/// component with positive weight.
EmResult OptimizeWeights(std::span<const SentenceScorer* const> components, const corpus::Corpus& dev,
                         std::span<const double> init, const EmOptions& options = {});

/// Dynamic mixture: P(w|h) = sum_k weight_k P_k(w|h).
class LinearMixture : public SentenceScorer {
 public:
  LinearMixture(std::vector<const SentenceScorer*> components, std::vector<double> weights);
  std::vector<double> ScoreSentence(std::span<const TokenId> sentence) const override;

 private:
  std::vector<const SentenceScorer*> components_;
  std::vector<double> weights_;
};

/// Static merge into one back-off model over the union of component n-grams.
/// Explicit probabilities are the weighted sums of the components' back-off
/// probabilities; back-off weights are recomputed so every context normalizes.
/// Components must share a vocabulary; lower-order components simply back off.
NGramModel InterpolateStatic(std::span<const NGramModel* const> components, std::span<const double> weights);

/// Checks weights are nonnegative and sum to 1 within 1e-9.
void ValidateWeights(std::span<const double> weights);

/// Weights file: one "name<TAB>weight" line per component.
void WriteWeights(const std::filesystem::path& path, std::span<const std::string> names,
                  std::span<const double> weights);
std::vector<std::pair<std::string, double>> ReadWeights(const std::filesystem::path& path);

}  // namespace nlmr::ngram
