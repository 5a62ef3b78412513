#include "nlmr/fixture/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "nlmr/corpus/vocabulary.hpp"

namespace nlmr::fixture {

namespace {

// Sparse random distribution over n outcomes: a few favoured outcomes on top
// of a small floor.
std::vector<double> SparseDistribution(Rng& rng, std::size_t n, std::size_t favoured) {
  std::vector<double> p(n, 0.05 / static_cast<double>(n));
  for (std::size_t k = 0; k < favoured; ++k) p[rng.Below(n)] += rng.Uniform(0.1, 2.0);
  double total = 0.0;
  for (double v : p) total += v;
  for (double& v : p) v /= total;
  return p;
}

std::vector<double> ZipfOverPermutation(Rng& rng, std::size_t n, double exponent) {
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) rank[i] = i;
  rng.Shuffle(std::span<std::size_t>(rank));
  std::vector<double> p(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::pow(static_cast<double>(rank[i] + 1), -exponent);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

class TrueLmSession : public rescore::LmSession {
 public:
  TrueLmSession(const World& world, std::size_t domain, double unknown)
      : world_(world), domain_(domain), unknown_(unknown) {}
  rescore::WordScore Score(const std::string& word) override {
    if (world_.Find(word) < 0) return {unknown_, true};
    return {world_.LogProb(domain_, history_, word), false};
  }
  void Advance(const std::string& word) override { history_.push_back(word); }

 private:
  const World& world_;
  std::size_t domain_;
  double unknown_;
  std::vector<std::string> history_;
};

}  // namespace

double Domain::ClassProb(std::size_t c2, std::size_t c1, std::size_t c) const {
  const std::size_t k = num_classes_ + 1;
  return transitions_[(c2 * k + c1) * k + c];
}

std::vector<std::string> PseudoWords(std::size_t count, std::uint64_t seed, std::span<const std::string> avoid) {
  static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "ch"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  static const char* kCodas[] = {"", "", "", "n", "r", "s", "k"};
  Rng rng(seed);
  std::unordered_set<std::string> seen(avoid.begin(), avoid.end());
  std::vector<std::string> out;
  while (out.size() < count) {
    const std::size_t syllables = 1 + rng.Below(3);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += kOnsets[rng.Below(std::size(kOnsets))];
      w += kVowels[rng.Below(std::size(kVowels))];
    }
    w += kCodas[rng.Below(std::size(kCodas))];
    if (corpus::IsReservedWord(w) || !seen.insert(w).second) continue;
    out.push_back(std::move(w));
  }
  return out;
}

World World::Make(const WorldConfig& config) {
  if (config.num_classes < 1 || config.num_words < config.num_classes) {
    throw Error("fixture world needs at least one word per class");
  }
  World w;
  w.config_ = config;
  w.words_ = PseudoWords(config.num_words, MixSeed(config.seed, 100));
  for (std::size_t i = 0; i < w.words_.size(); ++i) w.index_[w.words_[i]] = i;
  const std::size_t classes = config.num_classes;
  w.word_class_.resize(config.num_words);
  w.class_words_.resize(classes);
  for (std::size_t i = 0; i < config.num_words; ++i) {
    w.word_class_[i] = i % classes;
    w.class_words_[i % classes].push_back(i);
  }

  const std::size_t k = classes + 1;
  // Transition tables: shared component first, then one per domain.
  auto transitions = [&](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> bigram(k);
    std::vector<double> p_end(k, 0.0);
    for (std::size_t c1 = 0; c1 < k; ++c1) {
      bigram[c1] = SparseDistribution(rng, classes, config.favoured_classes);
      // No empty sentences.
      if (c1 != classes) p_end[c1] = rng.Uniform(config.end_probability[0], config.end_probability[1]);
    }
    std::vector<double> t(k * k * k);
    for (std::size_t c2 = 0; c2 < k; ++c2) {
      for (std::size_t c1 = 0; c1 < k; ++c1) {
        const auto tri = SparseDistribution(rng, classes, config.favoured_classes);
        double* row = t.data() + (c2 * k + c1) * k;
        for (std::size_t c = 0; c < classes; ++c) {
          const double next = (1.0 - config.trigram_weight) * bigram[c1][c] + config.trigram_weight * tri[c];
          row[c] = (1.0 - p_end[c1]) * next;
        }
        row[classes] = p_end[c1];
      }
    }
    return t;
  };
  auto emissions = [&](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> e(config.num_words);
    for (const auto& members : w.class_words_) {
      const auto p = ZipfOverPermutation(rng, members.size(), config.zipf_exponent);
      for (std::size_t i = 0; i < members.size(); ++i) e[members[i]] = p[i];
    }
    return e;
  };
  const std::size_t domains = config.mixtures.size();
  std::vector<std::vector<double>> comp_t, comp_e;
  for (std::size_t k = 0; k <= domains; ++k) {
    comp_t.push_back(transitions(MixSeed(config.seed, 200 + k)));
    comp_e.push_back(emissions(MixSeed(config.seed, 300 + k)));
  }
  for (const auto& mix : config.mixtures) {
    if (mix.size() != domains + 1) throw Error("fixture domain mixture needs one weight per component");
    const double total = std::accumulate(mix.begin(), mix.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) throw Error("fixture domain mixture weights must sum to 1");
    Domain dom;
    dom.num_classes_ = classes;
    dom.transitions_.assign(comp_t[0].size(), 0.0);
    dom.emission_.assign(config.num_words, 0.0);
    for (std::size_t k = 0; k <= domains; ++k) {
      for (std::size_t i = 0; i < dom.transitions_.size(); ++i) dom.transitions_[i] += mix[k] * comp_t[k][i];
      for (std::size_t i = 0; i < config.num_words; ++i) dom.emission_[i] += mix[k] * comp_e[k][i];
    }
    w.domains_.push_back(std::move(dom));
  }
  return w;
}

int World::Find(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? -1 : static_cast<int>(it->second);
}

std::vector<std::string> World::Sample(std::size_t domain, Rng& rng) const {
  const auto& dom = domains_.at(domain);
  const std::size_t classes = config_.num_classes;
  std::vector<std::string> out;
  std::size_t c2 = dom.start(), c1 = dom.start();
  std::vector<double> row(classes + 1);
  while (out.size() < config_.max_length) {
    for (std::size_t c = 0; c <= classes; ++c) row[c] = dom.ClassProb(c2, c1, c);
    const std::size_t c = SampleIndex(rng, row);
    if (c == dom.end()) break;
    const auto& members = class_words_[c];
    std::vector<double> emit(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) emit[i] = dom.EmissionProb(members[i]);
    out.push_back(words_[members[SampleIndex(rng, emit)]]);
    c2 = c1;
    c1 = c;
  }
  return out;
}

std::vector<std::string> World::SampleLines(std::size_t domain, std::size_t count, std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<std::string> lines;
  lines.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string line;
    for (const auto& w : Sample(domain, rng)) {
      if (!line.empty()) line += ' ';
      line += w;
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

std::pair<std::size_t, std::size_t> World::Context(std::size_t domain, std::span<const std::string> history) const {
  const auto& dom = domains_.at(domain);
  std::size_t c2 = dom.start(), c1 = dom.start();
  for (const auto& h : history) {
    const int id = Find(h);
    // Unknown history words fall back to the start context.
    const std::size_t c = id < 0 ? dom.start() : word_class_[static_cast<std::size_t>(id)];
    c2 = c1;
    c1 = c;
  }
  return {c2, c1};
}

double World::LogProb(std::size_t domain, std::span<const std::string> history, const std::string& word) const {
  const int id = Find(word);
  if (id < 0) return -std::numeric_limits<double>::infinity();
  const auto [c2, c1] = Context(domain, history);
  const auto& dom = domains_.at(domain);
  const auto w = static_cast<std::size_t>(id);
  return std::log(dom.ClassProb(c2, c1, word_class_[w])) + std::log(dom.EmissionProb(w));
}

double World::LogProbEnd(std::size_t domain, std::span<const std::string> history) const {
  const auto [c2, c1] = Context(domain, history);
  const auto& dom = domains_.at(domain);
  return std::log(dom.ClassProb(c2, c1, dom.end()));
}

std::unique_ptr<rescore::LmSession> TrueLm::NewSession() const {
  return std::make_unique<TrueLmSession>(world_, domain_, unknown_);
}

}  // namespace nlmr::fixture
