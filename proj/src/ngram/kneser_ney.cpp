#include "nlmr/ngram/kneser_ney.hpp"

#include <cmath>
#include <unordered_set>

namespace nlmr::ngram {

namespace {

using CountTable = std::unordered_map<NGramKey, std::size_t, NGramKeyHash>;

struct ContextStats {
  double total = 0.0;     // sum of adjusted counts
  double discount = 0.0;  // mass removed by discounting kept n-grams
  double pruned = 0.0;    // adjusted counts of pruned n-grams
};

NGramKey Slice(const NGramKey& k, int begin, int end) {
  return NGramKey(std::span(k.ids.data() + begin, static_cast<std::size_t>(end - begin)));
}

double Discount(const DiscountTriple& d, std::size_t count) { return d[std::min<std::size_t>(count, 3) - 1]; }

}  // namespace

std::optional<DiscountTriple> EstimateDiscounts(const std::array<std::size_t, 4>& n) {
  for (std::size_t c : n) {
    if (c == 0) return std::nullopt;
  }
  const double n1 = static_cast<double>(n[0]), n2 = static_cast<double>(n[1]);
  const double n3 = static_cast<double>(n[2]), n4 = static_cast<double>(n[3]);
  const double y = n1 / (n1 + 2.0 * n2);
  DiscountTriple d{1.0 - 2.0 * y * n2 / n1, 2.0 - 3.0 * y * n3 / n2, 3.0 - 4.0 * y * n4 / n3};
  for (int i = 0; i < 3; ++i) {
    if (!(d[i] > 0.0 && d[i] < i + 1.0)) return std::nullopt;
  }
  return d;
}

NGramModel EstimateKneserNey(const corpus::Corpus& corpus, std::shared_ptr<const corpus::Vocabulary> vocab,
                             int order, const KneserNeyOptions& options, KneserNeyStats* stats) {
  NGramModel model(vocab, order);  // validates order
  if (corpus.empty()) throw DataError("n-gram estimation: empty corpus");
  const auto& v = *vocab;
  const TokenId bos = v.bos();
  const auto vocab_size = static_cast<TokenId>(v.size());

  // Raw counts for every order.
  std::vector<CountTable> raw(static_cast<std::size_t>(order));
  for (const auto& s : corpus.sentences) {
    for (TokenId id : s) {
      if (id < 0 || id >= vocab_size) throw DataError("n-gram estimation: token id outside vocabulary");
      if (id == v.class_open() || id == v.class_close()) {
        throw DataError("n-gram estimation: class tags are not allowed in training text");
      }
    }
    for (int n = 1; n <= order; ++n) {
      for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) {
        ++raw[n - 1][NGramKey(std::span(s).subspan(i, static_cast<std::size_t>(n)))];
      }
    }
  }

  // Adjusted counts: raw at the top order and for n-grams opening with <s>,
  // continuation counts otherwise.
  std::vector<CountTable> adj(static_cast<std::size_t>(order));
  adj[order - 1] = raw[order - 1];
  for (int n = order - 1; n >= 1; --n) {
    CountTable continuation;
    for (const auto& [g, _] : raw[n]) ++continuation[Slice(g, 1, n + 1)];
    for (const auto& [g, c] : raw[n - 1]) {
      adj[n - 1][g] = (g.ids[0] == bos) ? c : continuation[g];
    }
  }

  // Discounts from counts-of-counts over adjusted counts.
  std::vector<DiscountTriple> discounts(static_cast<std::size_t>(order));
  std::vector<bool> fell_back(static_cast<std::size_t>(order), false);
  for (int n = 1; n <= order; ++n) {
    if (!options.fixed_discounts.empty()) {
      if (options.fixed_discounts.size() < static_cast<std::size_t>(order)) {
        throw Error("fixed discounts must be given for every order");
      }
      const double d = options.fixed_discounts[n - 1];
      if (!(d > 0.0 && d <= 1.0)) throw Error("fixed discount must be in (0, 1]");
      discounts[n - 1] = {d, d, d};
      continue;
    }
    std::array<std::size_t, 4> coc{};
    for (const auto& [g, c] : adj[n - 1]) {
      if (n == 1 && g.ids[0] == bos) continue;
      if (c >= 1 && c <= 4) ++coc[c - 1];
    }
    if (auto d = EstimateDiscounts(coc)) {
      discounts[n - 1] = *d;
    } else {
      const double f = options.fallback_discount;
      discounts[n - 1] = {f, f, f};
      fell_back[n - 1] = true;
    }
  }
  if (stats) {
    stats->discounts = discounts;
    stats->fell_back = fell_back;
  }

  // Count pruning, top order down. N-grams that are a prefix or suffix of a
  // kept higher-order n-gram are always kept.
  std::vector<std::unordered_set<NGramKey, NGramKeyHash>> pruned(static_cast<std::size_t>(order));
  for (int n = order; n >= 2; --n) {
    const std::size_t min_count =
        static_cast<std::size_t>(n - 1) < options.min_counts.size() ? options.min_counts[n - 1] : 0;
    if (min_count <= 1) continue;
    std::unordered_set<NGramKey, NGramKeyHash> needed;
    if (n < order) {
      for (const auto& [g, _] : adj[n]) {
        if (pruned[n].count(g)) continue;
        needed.insert(Slice(g, 0, n));
        needed.insert(Slice(g, 1, n + 1));
      }
    }
    for (const auto& [g, c] : adj[n - 1]) {
      if (c < min_count && !needed.count(g)) pruned[n - 1].insert(g);
    }
  }

  // Unigrams.
  {
    const auto& d = discounts[0];
    double total = 0.0, removed = 0.0;
    for (const auto& [g, c] : adj[0]) {
      if (g.ids[0] == bos) continue;
      total += static_cast<double>(c);
      removed += Discount(d, c);
    }
    const double gamma = removed / total;
    std::size_t predictable = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!IsUnpredictable(v, static_cast<TokenId>(i))) ++predictable;
    }
    const double uniform = gamma / static_cast<double>(predictable);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto id = static_cast<TokenId>(i);
      const TokenId key[1] = {id};
      if (IsUnpredictable(v, id)) {
        model.Set(key, {kLog10Zero, 0.0});
        continue;
      }
      double p = uniform;
      if (auto it = adj[0].find(NGramKey(key)); it != adj[0].end()) {
        p += (static_cast<double>(it->second) - Discount(d, it->second)) / total;
      }
      model.Set(key, {std::log10(p), 0.0});
    }
  }

  // Higher orders, bottom up. Lower-order probabilities are final by the time
  // order n is processed, so each entry interpolates with a direct lookup.
  for (int n = 2; n <= order; ++n) {
    const auto& d = discounts[n - 1];
    std::unordered_map<NGramKey, ContextStats, NGramKeyHash> contexts;
    for (const auto& [g, c] : adj[n - 1]) {
      auto& cs = contexts[Slice(g, 0, n - 1)];
      cs.total += static_cast<double>(c);
      if (pruned[n - 1].count(g)) {
        cs.pruned += static_cast<double>(c);
      } else {
        cs.discount += Discount(d, c);
      }
    }
    for (const auto& [g, c] : adj[n - 1]) {
      if (pruned[n - 1].count(g)) continue;
      const auto& cs = contexts.at(Slice(g, 0, n - 1));
      const double gamma = (cs.discount + cs.pruned) / cs.total;
      std::span<const TokenId> ids(g.ids.data(), static_cast<std::size_t>(n));
      const double lower = model.Prob(ids.subspan(1, static_cast<std::size_t>(n - 2)), ids[n - 1]);
      const double p = (static_cast<double>(c) - Discount(d, c)) / cs.total + gamma * lower;
      model.Set(ids, {std::log10(p), 0.0});
    }
    for (const auto& [h, cs] : contexts) {
      NGramEntry* e = model.FindMutable(std::span(h.ids.data(), static_cast<std::size_t>(n - 1)));
      if (e == nullptr) throw Error("n-gram estimation: context missing from lower order (internal)");
      e->log10_backoff = std::log10((cs.discount + cs.pruned) / cs.total);
    }
  }
  return model;
}

}  // namespace nlmr::ngram
