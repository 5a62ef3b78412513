#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "nlmr/eval/metrics.hpp"
#include "nlmr/random.hpp"
#include "support/oracles.hpp"

using namespace nlmr;
using namespace nlmr::eval;

namespace {

using Words = std::vector<std::string>;

Words RandomWords(Rng& rng, std::size_t max_len, std::size_t alphabet) {
  Words w(rng.Below(max_len + 1));
  for (auto& x : w) x = std::string(1, static_cast<char>('a' + rng.Below(alphabet)));
  return w;
}

// Applies the ops to ref and checks they rebuild hyp.
bool Replays(const Words& ref, const Words& hyp, const std::vector<AlignmentOp>& ops) {
  Words out;
  int r = 0;
  for (const auto& op : ops) {
    switch (op.kind) {
      case EditKind::kMatch:
        if (op.ref_index != r || ref[r] != hyp[op.hyp_index]) return false;
        out.push_back(ref[r++]);
        break;
      case EditKind::kSubstitution:
        if (op.ref_index != r || ref[r] == hyp[op.hyp_index]) return false;
        out.push_back(hyp[op.hyp_index]);
        ++r;
        break;
      case EditKind::kDeletion:
        if (op.ref_index != r++ || op.hyp_index != -1) return false;
        break;
      case EditKind::kInsertion:
        if (op.ref_index != -1) return false;
        out.push_back(hyp[op.hyp_index]);
        break;
    }
  }
  return r == static_cast<int>(ref.size()) && out == hyp;
}

}  // namespace

TEST_CASE("alignment basics") {
  const Words abc{"a", "b", "c"};
  auto ops = Align(abc, abc);
  CHECK(ops.size() == 3);
  for (const auto& op : ops) CHECK(op.kind == EditKind::kMatch);

  const Words ac{"a", "c"};
  ops = Align(abc, ac);
  const auto counts = CountErrors(ops);
  CHECK(counts.deletions == 1);
  CHECK(counts.errors() == 1);
  REQUIRE(ops.size() == 3);
  CHECK(ops[1].kind == EditKind::kDeletion);
  CHECK(ops[1].ref_index == 1);

  const Words empty;
  CHECK(CountErrors(Align(empty, abc)).insertions == 3);
  CHECK(CountErrors(Align(abc, empty)).deletions == 3);
}

TEST_CASE("alignment cost equals the DP oracle and replays") {
  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    const auto ref = RandomWords(rng, 20, 4);
    const auto hyp = RandomWords(rng, 20, 4);
    const auto ops = Align(ref, hyp);
    CHECK(AlignmentCost(ops) == testing::EditDistance(ref, hyp));
    CHECK(Replays(ref, hyp, ops));
  }
}

TEST_CASE("substitution is preferred over a deletion-insertion pair") {
  const Words ref{"a", "b"}, hyp{"a", "x"};
  const auto ops = Align(ref, hyp);
  REQUIRE(ops.size() == 2);
  CHECK(ops[1].kind == EditKind::kSubstitution);
}

TEST_CASE("corpus WER") {
  std::vector<Words> refs, hyps;
  // Three utterances of ten words; three errors in total.
  for (int u = 0; u < 3; ++u) {
    Words r;
    for (int i = 0; i < 10; ++i) r.push_back("w" + std::to_string(i));
    refs.push_back(r);
    hyps.push_back(r);
  }
  hyps[0][3] = "zz";
  hyps[1].erase(hyps[1].begin() + 5);
  hyps[2].insert(hyps[2].begin(), "extra");
  const auto c = Wer(refs, hyps);
  CHECK(c.ref_words == 30);
  CHECK(c.substitutions == 1);
  CHECK(c.deletions == 1);
  CHECK(c.insertions == 1);
  CHECK(c.rate() == doctest::Approx(0.1));
  CHECK(Wer(refs, refs).rate() == 0.0);
  CHECK(RelativeReduction(0.1, 0.09) == doctest::Approx(0.1));

  const std::vector<Words> none{{}};
  CHECK_THROWS_AS(Wer(none, none), DataError);
  CHECK_THROWS_AS(Wer(refs, std::span(hyps).first(2)), DataError);
}

TEST_CASE("entity tag parsing") {
  auto t = ParseEntityTags("hey [ent]john[/ent] bye");
  CHECK(t.words == Words{"hey", "john", "bye"});
  CHECK(t.entity == std::vector<bool>{false, true, false});
  t = ParseEntityTags("call [ent]john smith[/ent] now");
  CHECK(t.entity == std::vector<bool>{false, true, true, false});
  CHECK_THROWS_AS(ParseEntityTags("[ent]john"), DataError);
  CHECK_THROWS_AS(ParseEntityTags("john[/ent]"), DataError);
}

TEST_CASE("entity WER") {
  const std::vector<TaggedReference> refs{ParseEntityTags("hey [ent]JOHN[/ent] bye")};
  std::vector<Words> hyps{{"hey", "jon", "bye"}};
  auto c = EntityWer(refs, hyps);
  CHECK(c.rate() == 1.0);
  CHECK(c.ref_words == 1);
  hyps[0] = {"hey", "JOHN", "bye"};
  CHECK(EntityWer(refs, hyps).rate() == 0.0);
  hyps[0] = {"oh", "hey", "JOHN", "JOHN", "bye", "now"};
  CHECK(EntityWer(refs, hyps).rate() == 0.0);

  const std::vector<TaggedReference> plain{ParseEntityTags("no names here")};
  const std::vector<Words> h2{{"no", "names", "here"}};
  CHECK_THROWS_WITH_AS(EntityWer(plain, h2), "no entities in reference", DataError);
}

TEST_CASE("entity WER matches a tagged-op count") {
  Rng rng(5);
  std::vector<TaggedReference> refs;
  std::vector<Words> hyps;
  std::size_t tagged = 0, errors = 0;
  for (int u = 0; u < 50; ++u) {
    TaggedReference r;
    r.words = RandomWords(rng, 12, 5);
    r.words.push_back("n");
    for (std::size_t i = 0; i < r.words.size(); ++i) r.entity.push_back(rng.Uniform() < 0.3 || i + 1 == r.words.size());
    auto h = RandomWords(rng, 12, 5);
    for (const auto& op : Align(r.words, h)) {
      if (op.ref_index >= 0 && r.entity[op.ref_index] &&
          (op.kind == EditKind::kSubstitution || op.kind == EditKind::kDeletion)) {
        ++errors;
      }
    }
    for (bool e : r.entity) tagged += e;
    refs.push_back(r);
    hyps.push_back(h);
  }
  const auto c = EntityWer(refs, hyps);
  CHECK(c.ref_words == tagged);
  CHECK(c.substitutions + c.deletions == errors);
  CHECK(c.insertions == 0);
}

TEST_CASE("pure insertions leave entity WER unchanged") {
  Rng rng(6);
  int pure = 0;
  for (int t = 0; t < 2000; ++t) {
    TaggedReference r;
    r.words = RandomWords(rng, 12, 4);
    r.words.push_back("n");
    for (std::size_t i = 0; i < r.words.size(); ++i) r.entity.push_back(rng.Uniform() < 0.4);
    const std::vector<TaggedReference> refs{r};
    const std::vector<Words> hyp{RandomWords(rng, 12, 4)};
    const auto pos = rng.Below(hyp[0].size() + 1);
    std::vector<Words> more = hyp;
    more[0].insert(more[0].begin() + static_cast<long>(pos), "<extra>");
    bool inserted = false;
    for (const auto& op : Align(r.words, more[0])) {
      inserted = inserted || (op.hyp_index == static_cast<int>(pos) && op.kind == EditKind::kInsertion);
    }
    if (!inserted) continue;  // the aligner used the word as a substitution
    ++pure;
    if (std::find(r.entity.begin(), r.entity.end(), true) == r.entity.end()) continue;
    const auto a = EntityWer(refs, hyp);
    const auto b = EntityWer(refs, more);
    CHECK(a.substitutions == b.substitutions);
    CHECK(a.deletions == b.deletions);
  }
  CHECK(pure > 300);
}

TEST_CASE("percentiles") {
  const std::vector<double> single{65};
  const std::vector<double> ps{50, 90};
  CHECK(Percentiles(single, ps) == std::vector<double>{65, 65});
  std::vector<double> hundred;
  for (int i = 100; i >= 1; --i) hundred.push_back(i);
  CHECK(Percentiles(hundred, ps) == std::vector<double>{50, 90});
  CHECK_THROWS_AS(Percentiles(std::vector<double>{}, ps), DataError);

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> v(1 + rng.Below(40));
    for (auto& x : v) x = rng.Uniform(0, 100);
    const double p = rng.Uniform(0, 100);
    const std::vector<double> one{p};
    CHECK(Percentiles(v, one)[0] == testing::NearestRank(v, p));
    const auto r = Percentiles(v, ps);
    CHECK(r[0] <= r[1]);
  }
}

TEST_CASE("reports") {
  const std::vector<double> ms{5, 1, 3};
  const auto lat = LatencyReport(ms);
  CHECK(lat.counts.at("p50") == 3);
  CHECK(lat.counts.at("p90") == 5);
  ErrorCounts c;
  c.ref_words = 10;
  c.substitutions = 1;
  const auto w = WerReport(c);
  CHECK(w.value == doctest::Approx(0.1));
  std::ostringstream out;
  const std::vector<EvalReport> reports{w, lat};
  WriteReport(out, reports);
  CHECK(out.str().find("wer\t") == 0);
  CHECK(out.str().find('\n') != std::string::npos);
}
