#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "nlmr/fixture/asr.hpp"
#include "nlmr/fixture/world.hpp"
#include "support/oracles.hpp"

using namespace nlmr;
using namespace nlmr::fixture;

namespace {

World SmallWorld() {
  WorldConfig cfg;
  cfg.num_words = 200;
  cfg.num_classes = 10;
  return World::Make(cfg);
}

}  // namespace

TEST_CASE("world sampling is deterministic") {
  const auto w = SmallWorld();
  CHECK(w.SampleLines(0, 50, 3) == w.SampleLines(0, 50, 3));
  CHECK(w.SampleLines(0, 50, 3) != w.SampleLines(1, 50, 3));
  CHECK(World::Make(w.config()).words().size() == 200);
  WorldConfig bad = w.config();
  bad.mixtures = {{0.5, 0.6, 0.0}, {0.7, 0.0, 0.3}};
  CHECK_THROWS(World::Make(bad));
}

TEST_CASE("world conditionals normalize") {
  const auto w = SmallWorld();
  Rng rng(4);
  for (std::size_t d = 0; d < 2; ++d) {
    for (int t = 0; t < 20; ++t) {
      const auto history = w.Sample(d, rng);
      const auto cut = rng.Below(history.size() + 1);
      const std::span<const std::string> h(history.data(), cut);
      double sum = std::exp(w.LogProbEnd(d, h));
      for (const auto& word : w.words()) sum += std::exp(w.LogProb(d, h, word));
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  CHECK(std::isinf(w.LogProb(0, {}, "not-a-word")));
}

TEST_CASE("true LM sessions follow the world") {
  const auto w = SmallWorld();
  const TrueLm lm(w, 1);
  const auto line = w.SampleLines(1, 1, 9)[0];
  const auto words = corpus::SplitWords(line);
  auto s = lm.NewSession();
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto got = s->Score(words[i]);
    CHECK(got.logscore == w.LogProb(1, std::span(words).first(i), words[i]));
    CHECK_FALSE(got.is_unk);
    s->Advance(words[i]);
  }
  const auto oov = s->Score("zzz");
  CHECK(oov.is_unk);
  CHECK(oov.logscore == -25.0);
}

TEST_CASE("pseudo words") {
  const auto w = SmallWorld();
  const auto names = PseudoWords(100, 5, w.words());
  const std::set<std::string> unique(names.begin(), names.end());
  CHECK(unique.size() == 100);
  for (const auto& n : names) {
    CHECK(w.Find(n) < 0);
    CHECK_FALSE(corpus::IsReservedWord(n));
  }
  CHECK(PseudoWords(100, 5, w.words()) == names);
}

TEST_CASE("n-best lists from the noise channel") {
  const auto w = SmallWorld();
  const TrueLm first(w, 0);
  std::vector<std::vector<std::string>> refs;
  for (const auto& l : w.SampleLines(1, 40, 2)) refs.push_back(corpus::SplitWords(l));
  const std::vector<std::string> confusions(w.words().begin(), w.words().end());
  ChannelConfig cfg;
  const auto lists = MakeNBestLists(refs, confusions, first, cfg);
  REQUIRE(lists.size() == refs.size());
  std::size_t errors = 0;
  for (std::size_t u = 0; u < lists.size(); ++u) {
    const auto& l = lists[u];
    CHECK_NOTHROW(rescore::Validate(l));
    CHECK(l.hyps.size() <= cfg.nbest);
    std::set<std::vector<std::string>> distinct;
    for (const auto& h : l.hyps) distinct.insert(h.words);
    CHECK(distinct.size() == l.hyps.size());
    errors += testing::EditDistance(refs[u], l.hyps[0].words);
  }
  CHECK(errors > 0);
  CHECK(MakeNBestLists(refs, confusions, first, cfg)[7].hyps[0].words == lists[7].hyps[0].words);
}

TEST_CASE("entity fixture") {
  const auto w = SmallWorld();
  const TrueLm first(w, 0);
  std::vector<std::vector<std::string>> sentences;
  for (const auto& l : w.SampleLines(1, 30, 2)) sentences.push_back(corpus::SplitWords(l));
  const auto names = PseudoWords(10, 1, w.words());
  const std::vector<std::string> confusions(w.words().begin(), w.words().end());
  const auto fx = MakeEntityFixture(sentences, names, confusions, first, EntityConfig{});
  REQUIRE(fx.refs.size() == sentences.size());
  REQUIRE(fx.tagged.size() == fx.untagged.size());
  for (std::size_t u = 0; u < fx.refs.size(); ++u) {
    const auto& r = fx.refs[u];
    CHECK(std::count(r.entity.begin(), r.entity.end(), true) == 1);
    CHECK(r.words.size() == sentences[u].size() + 1);
    CHECK_NOTHROW(rescore::Validate(fx.tagged[u]));
    CHECK_NOTHROW(rescore::Validate(fx.untagged[u]));
    REQUIRE(fx.tagged[u].hyps.size() == fx.untagged[u].hyps.size());
    for (std::size_t i = 0; i < fx.tagged[u].hyps.size(); ++i) {
      const auto& t = fx.tagged[u].hyps[i];
      const auto& p = fx.untagged[u].hyps[i];
      CHECK(t.words == p.words);
      CHECK(t.lm_logprobs == p.lm_logprobs);
      CHECK(p.class_spans.empty());
      for (const auto& [b, e] : t.class_spans) {
        CHECK(e == b + 1);
        CHECK(std::find(names.begin(), names.end(), t.words[b]) != names.end());
      }
    }
  }
}
