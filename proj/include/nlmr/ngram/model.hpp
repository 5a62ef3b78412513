#pragma once

#include <array>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "nlmr/corpus/vocabulary.hpp"
#include "nlmr/scorer.hpp"

namespace nlmr::ngram {

inline constexpr int kMaxOrder = 5;

/// log10 value used for events that can never be predicted (<s>, class tags).
inline constexpr double kLog10Zero = -99.0;

struct NGramKey {
  std::array<TokenId, kMaxOrder> ids;

  explicit NGramKey(std::span<const TokenId> ngram);
  friend bool operator==(const NGramKey&, const NGramKey&) = default;
};

struct NGramKeyHash {
  std::size_t operator()(const NGramKey& k) const;
};

struct NGramEntry {
  double log10_prob = 0.0;
  double log10_backoff = 0.0;
};

// Back-off n-gram model. The unigram table covers the whole vocabulary;
// higher orders hold explicit n-grams, and every stored n-gram's prefix and
// suffix are stored as well.
class NGramModel : public SentenceScorer {
 public:
  using Table = std::unordered_map<NGramKey, NGramEntry, NGramKeyHash>;

  NGramModel(std::shared_ptr<const corpus::Vocabulary> vocab, int order);

  int order() const { return order_; }
  const corpus::Vocabulary& vocab() const { return *vocab_; }
  const std::shared_ptr<const corpus::Vocabulary>& shared_vocab() const { return vocab_; }

  void Set(std::span<const TokenId> ngram, NGramEntry entry);
  const NGramEntry* Find(std::span<const TokenId> ngram) const;
  NGramEntry* FindMutable(std::span<const TokenId> ngram);
  const Table& table(int n) const { return tables_.at(static_cast<std::size_t>(n - 1)); }
  std::size_t Count(int n) const { return table(n).size(); }

  /// Order-n n-grams sorted by id sequence.
  std::vector<std::vector<TokenId>> SortedNGrams(int n) const;

  /// log10 P(word | context) through back-off. Only the last order-1 context
  /// tokens are used. Returns -inf for a word with no unigram entry.
  double Log10Prob(std::span<const TokenId> context, TokenId word) const;
  double LogProb(std::span<const TokenId> context, TokenId word) const;
  double Prob(std::span<const TokenId> context, TokenId word) const;

  /// Ids with a real chance of being predicted (excludes <s> and class tags).
  std::vector<TokenId> PredictableIds() const;

  std::vector<double> ScoreSentence(std::span<const TokenId> sentence) const override;

 private:
  std::shared_ptr<const corpus::Vocabulary> vocab_;
  int order_;
  std::vector<Table> tables_;
};

/// True for ids an n-gram model never predicts: <s>, <class>, </class>.
bool IsUnpredictable(const corpus::Vocabulary& vocab, TokenId id);

}  // namespace nlmr::ngram
