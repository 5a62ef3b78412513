#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "nlmr/ngram/arpa.hpp"
#include "nlmr/ngram/interpolation.hpp"
#include "nlmr/ngram/kneser_ney.hpp"
#include "support/kn_oracle.hpp"
#include "support/toy.hpp"

using namespace nlmr;
using namespace nlmr::ngram;

namespace {

std::shared_ptr<const corpus::Vocabulary> Share(corpus::Vocabulary v) {
  return std::make_shared<const corpus::Vocabulary>(std::move(v));
}

double ContextMass(const NGramModel& m, std::span<const TokenId> ctx) {
  double sum = 0;
  for (std::size_t w = 0; w < m.vocab().size(); ++w) sum += m.Prob(ctx, static_cast<TokenId>(w));
  return sum;
}

// Every stored context of the model plus the empty one.
std::vector<std::vector<TokenId>> Contexts(const NGramModel& m) {
  std::vector<std::vector<TokenId>> out{{}};
  for (int n = 1; n < m.order(); ++n) {
    for (auto& g : m.SortedNGrams(n)) out.push_back(std::move(g));
  }
  return out;
}

class UniformScorer : public SentenceScorer {
 public:
  explicit UniformScorer(double n) : lp_(-std::log(n)) {}
  std::vector<double> ScoreSentence(std::span<const TokenId> s) const override {
    return std::vector<double>(s.size() - 1, lp_);
  }

 private:
  double lp_;
};

}  // namespace

TEST_CASE("unigram on 'a b' normalizes") {
  auto vocab = Share(corpus::BuildVocab(std::vector<std::string>{"a b"}, 10));
  const auto c = corpus::MakeCorpus("t", std::vector<std::string>{"a b"}, *vocab);
  const auto m = EstimateKneserNey(c, vocab, 1);
  CHECK(ContextMass(m, {}) == doctest::Approx(1.0).epsilon(1e-12));
  for (auto w : {"a", "b", "</s>", "<unk>"}) CHECK(m.Prob({}, vocab->Lookup(w)) > 0);
  CHECK(m.Log10Prob({}, vocab->bos()) == kLog10Zero);
}

TEST_CASE("KN probabilities match the oracle") {
  const auto lines = testing::ToyLines(20, 21, 12);
  auto vocab = Share(testing::ToyVocab(12));
  const auto c = corpus::MakeCorpus("t", lines, *vocab);
  for (int order = 2; order <= 3; ++order) {
    CAPTURE(order);
    for (bool fixed : {false, true}) {
      KneserNeyOptions opts;
      std::vector<double> d;
      if (fixed) d = std::vector<double>(static_cast<std::size_t>(order), 0.6);
      opts.fixed_discounts = d;
      KneserNeyStats stats;
      const auto m = EstimateKneserNey(c, vocab, order, opts, &stats);
      const testing::KnOracle oracle(c, *vocab, order, d);
      for (int n = 1; n <= order; ++n) {
        for (int i = 0; i < 3; ++i) CHECK(stats.discounts[n - 1][i] == doctest::Approx(oracle.discounts(n)[i]).epsilon(1e-12));
      }
      for (const auto& ctx : Contexts(m)) {
        for (auto w : m.PredictableIds()) {
          const double got = m.Prob(ctx, w);
          const double want = oracle.Prob(ctx, w);
          CHECK(std::abs(got - want) <= 1e-9);
        }
      }
    }
  }
}

TEST_CASE("KN contexts normalize through back-off") {
  const auto lines = testing::ToyLines(300, 8, 30);
  auto vocab = Share(testing::ToyVocab(30));
  const auto c = corpus::MakeCorpus("t", lines, *vocab);
  const auto m = EstimateKneserNey(c, vocab, 4);
  Rng rng(3);
  const auto ctxs = Contexts(m);
  for (int i = 0; i < 100; ++i) {
    const auto& ctx = ctxs[rng.Below(ctxs.size())];
    CHECK(ContextMass(m, ctx) == doctest::Approx(1.0).epsilon(1e-6));
  }
  // An unseen context backs off all the way.
  const std::vector<TokenId> unseen{vocab->unk(), vocab->unk(), vocab->unk()};
  CHECK(ContextMass(m, unseen) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("order above the longest sentence is still valid") {
  const std::vector<std::string> lines{"w1", "w2 w1"};
  auto vocab = Share(testing::ToyVocab(3));
  const auto c = corpus::MakeCorpus("t", lines, *vocab);
  const auto m = EstimateKneserNey(c, vocab, 5);
  for (const auto& ctx : Contexts(m)) CHECK(ContextMass(m, ctx) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("min counts prune higher orders") {
  const auto lines = testing::ToyLines(300, 8, 30);
  auto vocab = Share(testing::ToyVocab(30));
  const auto c = corpus::MakeCorpus("t", lines, *vocab);
  KneserNeyOptions opts;
  opts.min_counts = {1, 1, 3};
  const auto full = EstimateKneserNey(c, vocab, 3);
  const auto pruned = EstimateKneserNey(c, vocab, 3, opts);
  CHECK(pruned.Count(3) < full.Count(3));
  for (const auto& ctx : Contexts(pruned)) CHECK(ContextMass(pruned, ctx) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("discount estimation") {
  const auto d = EstimateDiscounts({100, 40, 20, 10});
  REQUIRE(d.has_value());
  const double y = 100.0 / (100 + 80);
  CHECK((*d)[0] == doctest::Approx(1 - 2 * y * 40 / 100));
  CHECK((*d)[1] == doctest::Approx(2 - 3 * y * 20 / 40));
  CHECK((*d)[2] == doctest::Approx(3 - 4 * y * 10 / 20));
  CHECK_FALSE(EstimateDiscounts({0, 1, 1, 1}).has_value());
}

TEST_CASE("perplexity of a uniform unigram is the vocabulary size") {
  auto list = corpus::ReservedWords();
  list.erase(list.begin() + 3, list.end());  // drop class tags
  for (int i = 0; i < 62; ++i) list.push_back("x" + std::to_string(i));
  auto vocab = Share(corpus::Vocabulary(list));
  NGramModel m(vocab, 1);
  for (std::size_t w = 0; w < vocab->size(); ++w) {
    const auto id = static_cast<TokenId>(w);
    m.Set(std::span(&id, 1), {id == vocab->bos() ? kLog10Zero : -std::log10(64.0), 0.0});
  }
  const auto dev = corpus::MakeCorpus("d", std::vector<std::string>{"x1 x2 x3", "x4", "zz x9"}, *vocab);
  CHECK(ComputePerplexity(m, dev).perplexity == doctest::Approx(64.0).epsilon(1e-12));
  CHECK(ComputePerplexity(UniformScorer(64), dev).perplexity == doctest::Approx(64.0).epsilon(1e-12));
}

TEST_CASE("perplexity matches a brute-force log-prob sum") {
  auto vocab = Share(testing::ToyVocab());
  const auto train = corpus::MakeCorpus("t", testing::ToyLines(200, 1), *vocab);
  const auto dev = corpus::MakeCorpus("d", testing::ToyLines(30, 2), *vocab);
  const auto m = EstimateKneserNey(train, vocab, 3);
  double sum = 0;
  std::size_t n = 0;
  for (const auto& s : dev.sentences) {
    for (std::size_t i = 1; i < s.size(); ++i) {
      const std::size_t from = i >= 2 ? i - 2 : 0;
      sum += std::log(m.Prob(std::span(s).subspan(from, i - from), s[i]));
      ++n;
    }
  }
  const auto r = ComputePerplexity(m, dev);
  CHECK(r.events == n);
  CHECK(r.events == dev.word_count);
  CHECK(r.log_prob_sum == doctest::Approx(sum).epsilon(1e-12));
  CHECK(r.perplexity == doctest::Approx(std::exp(-sum / n)).epsilon(1e-12));
}

TEST_CASE("perplexity errors") {
  auto vocab = Share(testing::ToyVocab());
  const corpus::Corpus empty;
  CHECK_THROWS_AS(ComputePerplexity(UniformScorer(4), empty), DataError);
}

TEST_CASE("EM: identical components stay put") {
  auto vocab = Share(testing::ToyVocab());
  const auto train = corpus::MakeCorpus("t", testing::ToyLines(200, 1), *vocab);
  const auto dev = corpus::MakeCorpus("d", testing::ToyLines(30, 2), *vocab);
  const auto m = EstimateKneserNey(train, vocab, 2);
  const SentenceScorer* comps[] = {&m, &m};
  const std::vector<double> init{0.5, 0.5};
  const auto r = OptimizeWeights(comps, dev, init);
  CHECK(r.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.weights[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("EM favours the in-domain component and never raises PPL") {
  const std::size_t words = 40;
  auto vocab = Share(testing::ToyVocab(words));
  // B sees only words the dev text never uses.
  std::vector<std::string> other;
  for (int i = 0; i < 200; ++i) other.push_back("w" + std::to_string(30 + i % 10) + " w" + std::to_string(30 + (i * 7) % 10));
  const auto a = corpus::MakeCorpus("a", testing::ToyLines(400, 1, 30), *vocab);
  const auto b = corpus::MakeCorpus("b", other, *vocab);
  const auto dev = corpus::MakeCorpus("d", testing::ToyLines(60, 2, 30), *vocab);
  const auto ma = EstimateKneserNey(a, vocab, 3);
  const auto mb = EstimateKneserNey(b, vocab, 3);
  const SentenceScorer* comps[] = {&ma, &mb};
  const std::vector<double> init{0.5, 0.5};
  const auto r = OptimizeWeights(comps, dev, init);
  CHECK(r.weights[0] > 0.95);
  CHECK(r.weights[0] + r.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 1; i < r.perplexity_history.size(); ++i) {
    CHECK(r.perplexity_history[i] <= r.perplexity_history[i - 1] * (1 + 1e-12));
  }
}

TEST_CASE("EM rejects events with zero probability everywhere") {
  auto vocab = Share(testing::ToyVocab());
  const auto dev = corpus::MakeCorpus("d", testing::ToyLines(5, 2), *vocab);
  NGramModel empty(vocab, 1);
  const SentenceScorer* comps[] = {&empty};
  const std::vector<double> init{1.0};
  CHECK_THROWS_AS(OptimizeWeights(comps, dev, init), NumericError);
}

TEST_CASE("static merge") {
  auto vocab = Share(testing::ToyVocab(30));
  const auto a = corpus::MakeCorpus("a", testing::ToyLines(300, 1, 30), *vocab);
  const auto b = corpus::MakeCorpus("b", testing::ToyLines(300, 7, 25), *vocab);
  const auto dev = corpus::MakeCorpus("d", testing::ToyLines(60, 2, 30), *vocab);
  const auto ma = EstimateKneserNey(a, vocab, 3);
  const auto mb = EstimateKneserNey(b, vocab, 2);
  const NGramModel* comps[] = {&ma, &mb};

  SUBCASE("degenerate weights reproduce the first component") {
    const std::vector<double> w{1.0, 0.0};
    const auto merged = InterpolateStatic(comps, w);
    for (const auto& s : dev.sentences) {
      const auto x = merged.ScoreSentence(s);
      const auto y = ma.ScoreSentence(s);
      for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(std::exp(x[i]) - std::exp(y[i])) <= 1e-9);
    }
  }
  SUBCASE("close to the dynamic mixture and normalized") {
    const std::vector<double> w{0.6, 0.4};
    const auto merged = InterpolateStatic(comps, w);
    CHECK(merged.order() == 3);
    const LinearMixture dynamic({&ma, &mb}, w);
    const double p_static = ComputePerplexity(merged, dev).perplexity;
    const double p_dynamic = ComputePerplexity(dynamic, dev).perplexity;
    CHECK(std::abs(p_static - p_dynamic) / p_dynamic <= 0.005);
    Rng rng(4);
    const auto ctxs = Contexts(merged);
    for (int i = 0; i < 100; ++i) {
      CHECK(ContextMass(merged, ctxs[rng.Below(ctxs.size())]) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  SUBCASE("invalid weights") {
    const std::vector<double> w{0.7, 0.4};
    CHECK_THROWS(InterpolateStatic(comps, w));
  }
}

TEST_CASE("weights file round-trip") {
  const auto path = std::filesystem::temp_directory_path() / "nlmr_weights_test.tsv";
  const std::vector<std::string> names{"msg", "vm"};
  const std::vector<double> w{0.78, 0.22};
  WriteWeights(path, names, w);
  const auto r = ReadWeights(path);
  REQUIRE(r.size() == 2);
  CHECK(r[0].first == "msg");
  CHECK(r[1].second == 0.22);
  std::filesystem::remove(path);
}

TEST_CASE("ARPA round-trip") {
  auto vocab = Share(testing::ToyVocab());
  const auto c = corpus::MakeCorpus("t", testing::ToyLines(200, 1), *vocab);
  const auto m = EstimateKneserNey(c, vocab, 3);
  std::stringstream buf;
  WriteArpa(m, buf);
  const auto back = ReadArpa(buf);
  CHECK(back.vocab() == m.vocab());
  REQUIRE(back.order() == 3);
  for (int n = 1; n <= 3; ++n) {
    REQUIRE(back.Count(n) == m.Count(n));
    for (const auto& g : m.SortedNGrams(n)) {
      const auto* x = m.Find(g);
      const auto* y = back.Find(g);
      REQUIRE(y != nullptr);
      CHECK(std::abs(x->log10_prob - y->log10_prob) <= 5e-7);
      CHECK(std::abs(x->log10_backoff - y->log10_backoff) <= 5e-7);
    }
  }
  std::stringstream again;
  WriteArpa(back, again);
  std::stringstream first;
  WriteArpa(m, first);
  CHECK(again.str() == first.str());
}

TEST_CASE("literal unigram ARPA") {
  std::istringstream in(
      "\\data\\\nngram 1=3\n\n\\1-grams:\n-0.3010300\t<s>\n-0.3010300\tyes\n-0.3010300\t</s>\n\n\\end\\\n");
  const auto m = ReadArpa(in);
  CHECK(m.vocab().Find("<unk>").has_value());
  CHECK(m.Log10Prob({}, m.vocab().Lookup("yes")) == doctest::Approx(-0.30103));
  CHECK(m.Log10Prob({}, m.vocab().eos()) == doctest::Approx(-0.30103));
  CHECK(m.Log10Prob({}, m.vocab().unk()) == kLog10Zero);
}

TEST_CASE("ARPA count mismatch names the section") {
  std::istringstream in("\\data\\\nngram 1=4\n\n\\1-grams:\n-0.3\t<s>\n-0.3\tyes\n-0.3\t</s>\n\n\\end\\\n");
  try {
    ReadArpa(in, "bad.arpa");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("\\1-grams:") != std::string::npos);
    CHECK(std::string(e.what()).find("bad.arpa:") == 0);
  }
  std::istringstream no_header("ngram 1=1\n");
  CHECK_THROWS_AS(ReadArpa(no_header), ParseError);
}
