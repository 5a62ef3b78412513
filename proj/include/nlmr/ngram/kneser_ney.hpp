#pragma once

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include "nlmr/corpus/corpus.hpp"
#include "nlmr/ngram/model.hpp"

namespace nlmr::ngram {

/// Discounts for adjusted counts 1, 2 and 3+.
using DiscountTriple = std::array<double, 3>;

struct KneserNeyOptions {
  /// Fixed discount per order (index n-1), applied to every count class.
  /// Empty means modified-KN discounts estimated from counts-of-counts.
  std::vector<double> fixed_discounts;
  /// Discount used when counts-of-counts give an out-of-range estimate.
  double fallback_discount = 0.75;
  /// Minimum adjusted count to keep an n-gram of order n >= 2 (index n-1;
  /// missing or <= 1 means no pruning).
  std::vector<std::size_t> min_counts;
};

/// Per-order discounts actually used, for reporting.
struct KneserNeyStats {
  std::vector<DiscountTriple> discounts;
  std::vector<bool> fell_back;
};

/// Interpolated modified Kneser-Ney estimate in back-off form. The highest
/// order uses raw counts, lower orders use continuation counts (raw counts for
/// n-grams starting with <s>); the unigram level interpolates with a uniform
/// distribution over the predictable vocabulary.
NGramModel EstimateKneserNey(const corpus::Corpus& corpus, std::shared_ptr<const corpus::Vocabulary> vocab,
                             int order, const KneserNeyOptions& options = {},
                             KneserNeyStats* stats = nullptr);

/// Modified-KN discounts from counts-of-counts n1..n4; nullopt when any is
/// degenerate (zero count or a discount outside (0, c)).
std::optional<DiscountTriple> EstimateDiscounts(const std::array<std::size_t, 4>& count_of_counts);

}  // namespace nlmr::ngram
