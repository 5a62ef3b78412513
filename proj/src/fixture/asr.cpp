#include "nlmr/fixture/asr.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>

#include "nlmr/corpus/vocabulary.hpp"

namespace nlmr::fixture {

namespace {

const std::string& Pick(std::span<const std::string> words, Rng& rng) { return words[rng.Below(words.size())]; }

double Acoustic(std::span<const std::string> ref, std::span<const std::string> hyp, const ChannelConfig& c,
                Rng& rng) {
  const auto edits = eval::AlignmentCost(eval::Align(ref, hyp));
  return -c.acoustic_per_error * static_cast<double>(edits) + c.acoustic_noise * rng.Normal() -
         0.1 * static_cast<double>(hyp.size());
}

std::string UttId(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "utt%05zu", i);
  return buf;
}

}  // namespace

std::vector<std::string> Corrupt(std::span<const std::string> ref, std::span<const std::string> confusions,
                                 const ChannelConfig& config, Rng& rng) {
  std::vector<std::string> out;
  for (const auto& w : ref) {
    const double u = rng.Uniform();
    if (u < config.deletion) {
      // dropped
    } else if (u < config.deletion + config.substitution) {
      out.push_back(Pick(confusions, rng));
    } else {
      out.push_back(w);
    }
    if (rng.Uniform() < config.insertion) out.push_back(Pick(confusions, rng));
  }
  return out;
}

std::vector<double> FirstPassLogprobs(const rescore::RescoringLm& lm, std::span<const std::string> words) {
  auto session = lm.NewSession();
  std::vector<double> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    out.push_back(session->Score(w).logscore);
    session->Advance(w);
  }
  return out;
}

void FinishList(rescore::NBestList& list) {
  for (auto& h : list.hyps) {
    h.total = h.acoustic + h.FirstPassLm();
  }
  std::stable_sort(list.hyps.begin(), list.hyps.end(),
                   [](const auto& a, const auto& b) { return a.total > b.total; });
  for (std::size_t i = 0; i < list.hyps.size(); ++i) list.hyps[i].first_pass_rank = i + 1;
}

std::vector<rescore::NBestList> MakeNBestLists(std::span<const std::vector<std::string>> refs,
                                               std::span<const std::string> confusions,
                                               const rescore::RescoringLm& first_pass, const ChannelConfig& config) {
  if (confusions.empty()) throw Error("noise channel needs confusion words");
  std::vector<rescore::NBestList> lists;
  for (std::size_t u = 0; u < refs.size(); ++u) {
    Rng rng(MixSeed(config.seed, u));
    rescore::NBestList list;
    list.utt_id = UttId(u);
    std::set<std::vector<std::string>> seen;
    for (std::size_t attempt = 0; list.hyps.size() < config.nbest && attempt < 50 * config.nbest; ++attempt) {
      auto words = Corrupt(refs[u], confusions, config, rng);
      if (words.empty() || !seen.insert(words).second) continue;
      rescore::Hypothesis h;
      h.acoustic = Acoustic(refs[u], words, config, rng);
      h.lm_logprobs = FirstPassLogprobs(first_pass, words);
      h.tokens = words;
      rescore::DeriveSpans(h);
      list.hyps.push_back(std::move(h));
    }
    if (list.hyps.empty()) continue;
    FinishList(list);
    lists.push_back(std::move(list));
  }
  return lists;
}

EntityFixture MakeEntityFixture(std::span<const std::vector<std::string>> sentences, std::span<const std::string> names,
                                std::span<const std::string> confusions, const rescore::RescoringLm& first_pass,
                                const EntityConfig& config) {
  if (names.empty() || confusions.empty()) throw Error("entity fixture needs names and confusion words");
  const auto& c = config.channel;
  EntityFixture fx;
  for (std::size_t u = 0; u < sentences.size(); ++u) {
    Rng rng(MixSeed(c.seed, 1000 + u));
    const auto& sent = sentences[u];
    const std::size_t pos = rng.Below(sent.size() + 1);
    const std::string& name = Pick(names, rng);
    const std::string& decoy = Pick(confusions, rng);
    const std::vector<std::string> left(sent.begin(), sent.begin() + static_cast<std::ptrdiff_t>(pos));
    const std::vector<std::string> right(sent.begin() + static_cast<std::ptrdiff_t>(pos), sent.end());

    eval::TaggedReference ref;
    ref.words = left;
    ref.words.push_back(name);
    ref.words.insert(ref.words.end(), right.begin(), right.end());
    ref.entity.assign(ref.words.size(), false);
    ref.entity[pos] = true;

    rescore::NBestList tagged, untagged;
    tagged.utt_id = untagged.utt_id = UttId(u);
    std::set<std::vector<std::string>> seen;
    for (std::size_t attempt = 0; tagged.hyps.size() < c.nbest && attempt < 50 * c.nbest; ++attempt) {
      const bool keep = attempt % 2 == 0;
      const bool clean = attempt < 2;
      auto l = clean ? left : Corrupt(left, confusions, c, rng);
      auto r = clean ? right : Corrupt(right, confusions, c, rng);
      std::vector<std::string> words = l;
      const std::size_t at = words.size();
      words.push_back(keep ? name : decoy);
      words.insert(words.end(), r.begin(), r.end());
      if (!seen.insert(words).second) continue;

      rescore::Hypothesis plain;
      plain.tokens = words;
      plain.acoustic = Acoustic(ref.words, words, c, rng) + (keep ? config.name_acoustic_margin : 0.0);
      plain.lm_logprobs = FirstPassLogprobs(first_pass, words);
      if (keep) plain.lm_logprobs[at] = config.name_logprob;
      rescore::DeriveSpans(plain);

      rescore::Hypothesis tag = plain;
      if (keep) {
        tag.tokens.clear();
        for (std::size_t i = 0; i < words.size(); ++i) {
          if (i == at) tag.tokens.emplace_back(corpus::kClassOpen);
          tag.tokens.push_back(words[i]);
          if (i == at) tag.tokens.emplace_back(corpus::kClassClose);
        }
        rescore::DeriveSpans(tag);
      }
      tagged.hyps.push_back(std::move(tag));
      untagged.hyps.push_back(std::move(plain));
    }
    FinishList(tagged);
    FinishList(untagged);
    fx.refs.push_back(std::move(ref));
    fx.tagged.push_back(std::move(tagged));
    fx.untagged.push_back(std::move(untagged));
  }
  return fx;
}

}  // namespace nlmr::fixture
