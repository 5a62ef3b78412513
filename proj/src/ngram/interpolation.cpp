#include "nlmr/ngram/interpolation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

namespace nlmr::ngram {

void ValidateWeights(std::span<const double> weights) {
  if (weights.empty()) throw Error("interpolation weights: empty");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("interpolation weights must be finite and nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("interpolation weights must sum to 1");
}

EmResult OptimizeWeights(std::span<const SentenceScorer* const> components, const corpus::Corpus& dev,
                         std::span<const double> init, const EmOptions& options) {
  if (components.empty()) throw Error("optimize_weights: no components");
  if (init.size() != components.size()) throw Error("optimize_weights: init size differs from component count");
  ValidateWeights(init);
  if (dev.empty()) throw DataError("optimize_weights: empty dev corpus");

  const std::size_t k = components.size();
  std::vector<std::vector<double>> probs(k);
  for (std::size_t c = 0; c < k; ++c) {
    for (const auto& s : dev.sentences) {
      for (double lp : components[c]->ScoreSentence(s)) probs[c].push_back(std::exp(lp));
    }
  }
  const std::size_t events = probs[0].size();

  EmResult result;
  result.weights.assign(init.begin(), init.end());
  std::vector<double> next(k);
  for (;;) {
    std::fill(next.begin(), next.end(), 0.0);
    double log_sum = 0.0;
    for (std::size_t t = 0; t < events; ++t) {
      double denom = 0.0;
      for (std::size_t c = 0; c < k; ++c) denom += result.weights[c] * probs[c][t];
      if (!(denom > 0.0)) {
        throw NumericError("optimize_weights: dev event " + std::to_string(t) +
                           " has zero probability under every weighted component");
      }
      log_sum += std::log(denom);
      for (std::size_t c = 0; c < k; ++c) next[c] += result.weights[c] * probs[c][t] / denom;
    }
    result.perplexity_history.push_back(std::exp(-log_sum / static_cast<double>(events)));
    if (result.iterations >= options.max_iterations) break;

    double max_change = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      next[c] /= static_cast<double>(events);
      max_change = std::max(max_change, std::abs(next[c] - result.weights[c]));
    }
    result.weights = next;
    ++result.iterations;
    if (max_change < options.tolerance) {
      // Perplexity at the final weights.
      double final_sum = 0.0;
      for (std::size_t t = 0; t < events; ++t) {
        double denom = 0.0;
        for (std::size_t c = 0; c < k; ++c) denom += result.weights[c] * probs[c][t];
        final_sum += std::log(denom);
      }
      result.perplexity_history.push_back(std::exp(-final_sum / static_cast<double>(events)));
      break;
    }
  }
  return result;
}

LinearMixture::LinearMixture(std::vector<const SentenceScorer*> components, std::vector<double> weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  if (components_.size() != weights_.size()) throw Error("mixture: one weight per component required");
  ValidateWeights(weights_);
}

std::vector<double> LinearMixture::ScoreSentence(std::span<const TokenId> sentence) const {
  std::vector<double> total(sentence.size() > 0 ? sentence.size() - 1 : 0, 0.0);
  for (std::size_t c = 0; c < components_.size(); ++c) {
    if (weights_[c] == 0.0) continue;
    const auto lp = components_[c]->ScoreSentence(sentence);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += weights_[c] * std::exp(lp[i]);
  }
  for (double& p : total) p = std::log(p);
  return total;
}

NGramModel InterpolateStatic(std::span<const NGramModel* const> components, std::span<const double> weights) {
  if (components.empty()) throw Error("interpolate: no components");
  if (weights.size() != components.size()) throw Error("interpolate: one weight per component required");
  ValidateWeights(weights);
  const auto& vocab = components[0]->shared_vocab();
  int order = 0;
  for (const auto* m : components) {
    if (!(m->vocab() == *vocab)) throw DataError("interpolate: components must share one vocabulary");
    order = std::max(order, m->order());
  }
  NGramModel merged(vocab, order);

  auto mixed_prob = [&](std::span<const TokenId> ctx, TokenId w) {
    double p = 0.0;
    for (std::size_t c = 0; c < components.size(); ++c) {
      if (weights[c] > 0.0) p += weights[c] * components[c]->Prob(ctx, w);
    }
    return p;
  };

  for (int n = 1; n <= order; ++n) {
    std::set<std::vector<TokenId>> keys;
    for (const auto* m : components) {
      if (n > m->order()) continue;
      for (auto& g : m->SortedNGrams(n)) keys.insert(std::move(g));
    }
    // Promote lower-order components: a context of this order gets the words
    // such a component predicts explicitly from the context's suffix.
    std::set<std::vector<TokenId>> contexts;
    for (const auto& g : keys) contexts.emplace(g.begin(), g.end() - 1);
    for (const auto* m : components) {
      const int top = m->order();
      if (n <= top || top < 2) continue;
      std::map<std::vector<TokenId>, std::vector<TokenId>> successors;
      for (const auto& g : m->SortedNGrams(top)) successors[std::vector<TokenId>(g.begin(), g.end() - 1)].push_back(g.back());
      for (const auto& ctx : contexts) {
        auto it = successors.find(std::vector<TokenId>(ctx.end() - (top - 1), ctx.end()));
        if (it == successors.end()) continue;
        for (TokenId w : it->second) {
          auto g = ctx;
          g.push_back(w);
          keys.insert(std::move(g));
        }
      }
    }
    // context -> (sum of merged probs of explicit words, sum of their lower-order probs)
    std::map<std::vector<TokenId>, std::pair<double, double>> context_mass;
    for (const auto& g : keys) {
      std::span<const TokenId> ids(g);
      const auto ctx = ids.first(ids.size() - 1);
      const TokenId w = ids.back();
      if (IsUnpredictable(*vocab, w) && n == 1) {
        merged.Set(ids, {kLog10Zero, 0.0});
        continue;
      }
      const double p = mixed_prob(ctx, w);
      merged.Set(ids, {std::log10(p), 0.0});
      if (n >= 2) {
        auto& mass = context_mass[std::vector<TokenId>(ctx.begin(), ctx.end())];
        mass.first += p;
        mass.second += merged.Prob(ctx.subspan(1), w);
      }
    }
    for (const auto& [ctx, mass] : context_mass) {
      NGramEntry* e = merged.FindMutable(ctx);
      if (e == nullptr) throw DataError("interpolate: context missing from a component's lower order");
      const double numerator = 1.0 - mass.first;
      const double denominator = 1.0 - mass.second;
      double bow = 1.0;
      if (numerator <= 1e-12) {
        bow = 1e-12;  // context already exhausts the distribution
      } else if (denominator > 1e-12) {
        bow = numerator / denominator;
      }
      e->log10_backoff = std::log10(bow);
    }
  }
  return merged;
}

void WriteWeights(const std::filesystem::path& path, std::span<const std::string> names,
                  std::span<const double> weights) {
  if (names.size() != weights.size()) throw Error("weights file: one name per weight");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < names.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", weights[i]);
    out << names[i] << '\t' << buf << '\n';
  }
}

std::vector<std::pair<std::string, double>> ReadWeights(const std::filesystem::path& path) {
  const auto lines = corpus::ReadLines(path);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto tab = lines[i].find('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), i + 1, "expected name<TAB>weight");
    try {
      out.emplace_back(lines[i].substr(0, tab), std::stod(lines[i].substr(tab + 1)));
    } catch (const std::exception&) {
      throw ParseError(path.string(), i + 1, "bad weight");
    }
  }
  return out;
}

}  // namespace nlmr::ngram
