#include "nlmr/ngram/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

namespace nlmr::ngram {

NGramKey::NGramKey(std::span<const TokenId> ngram) {
  ids.fill(-1);
  std::copy(ngram.begin(), ngram.end(), ids.begin());
}

std::size_t NGramKeyHash::operator()(const NGramKey& k) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (TokenId id : k.ids) {
    h ^= static_cast<std::uint32_t>(id);
    h *= 0x100000001b3ULL;
    h ^= h >> 29;
  }
  return static_cast<std::size_t>(h);
}

bool IsUnpredictable(const corpus::Vocabulary& vocab, TokenId id) {
  return id == vocab.bos() || id == vocab.class_open() || id == vocab.class_close();
}

NGramModel::NGramModel(std::shared_ptr<const corpus::Vocabulary> vocab, int order)
    : vocab_(std::move(vocab)), order_(order) {
  if (!vocab_) throw Error("n-gram model needs a vocabulary");
  if (order < 1 || order > kMaxOrder) {
    throw Error("n-gram order must be in 1.." + std::to_string(kMaxOrder));
  }
  tables_.resize(static_cast<std::size_t>(order));
}

void NGramModel::Set(std::span<const TokenId> ngram, NGramEntry entry) {
  if (ngram.empty() || static_cast<int>(ngram.size()) > order_) throw Error("n-gram length out of range");
  tables_[ngram.size() - 1][NGramKey(ngram)] = entry;
}

const NGramEntry* NGramModel::Find(std::span<const TokenId> ngram) const {
  if (ngram.empty() || static_cast<int>(ngram.size()) > order_) return nullptr;
  const auto& t = tables_[ngram.size() - 1];
  auto it = t.find(NGramKey(ngram));
  return it == t.end() ? nullptr : &it->second;
}

NGramEntry* NGramModel::FindMutable(std::span<const TokenId> ngram) {
  return const_cast<NGramEntry*>(std::as_const(*this).Find(ngram));
}

std::vector<std::vector<TokenId>> NGramModel::SortedNGrams(int n) const {
  std::vector<std::vector<TokenId>> out;
  out.reserve(Count(n));
  for (const auto& [key, _] : table(n)) out.emplace_back(key.ids.begin(), key.ids.begin() + n);
  std::sort(out.begin(), out.end());
  return out;
}

double NGramModel::Log10Prob(std::span<const TokenId> context, TokenId word) const {
  const std::size_t max_ctx = static_cast<std::size_t>(order_ - 1);
  if (context.size() > max_ctx) context = context.subspan(context.size() - max_ctx);
  std::array<TokenId, kMaxOrder> buf{};
  double backoff = 0.0;
  for (std::size_t len = context.size() + 1; len-- > 0;) {
    auto ctx = context.subspan(context.size() - len);
    std::copy(ctx.begin(), ctx.end(), buf.begin());
    buf[len] = word;
    if (const auto* e = Find(std::span(buf.data(), len + 1))) return backoff + e->log10_prob;
    if (len > 0) {
      if (const auto* c = Find(ctx)) backoff += c->log10_backoff;
    }
  }
  return -std::numeric_limits<double>::infinity();
}

double NGramModel::LogProb(std::span<const TokenId> context, TokenId word) const {
  return Log10Prob(context, word) * std::numbers::ln10;
}

double NGramModel::Prob(std::span<const TokenId> context, TokenId word) const {
  return std::pow(10.0, Log10Prob(context, word));
}

std::vector<TokenId> NGramModel::PredictableIds() const {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < vocab_->size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    if (!IsUnpredictable(*vocab_, id)) out.push_back(id);
  }
  return out;
}

std::vector<double> NGramModel::ScoreSentence(std::span<const TokenId> sentence) const {
  std::vector<double> out;
  if (sentence.size() < 2) return out;
  out.reserve(sentence.size() - 1);
  for (std::size_t i = 1; i < sentence.size(); ++i) {
    out.push_back(LogProb(sentence.subspan(0, i), sentence[i]));
  }
  return out;
}

}  // namespace nlmr::ngram
