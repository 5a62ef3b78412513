#include "nlmr/rescore/rescorer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "nlmr/eval/metrics.hpp"

namespace nlmr::rescore {

NeuralRescoringLm::NeuralRescoringLm(const nlm::NeuralModel& model, const corpus::Vocabulary& vocab,
                                     nlm::ScoreMode mode)
    : model_(model), vocab_(vocab), mode_(mode) {
  if (model.config().vocab_size != vocab.size()) {
    throw DataError("model vocabulary size " + std::to_string(model.config().vocab_size) +
                    " does not match the word list size " + std::to_string(vocab.size()));
  }
}

std::unique_ptr<LmSession> NeuralRescoringLm::NewSession() const { return NewNeuralSession(); }

std::unique_ptr<NeuralSession> NeuralRescoringLm::NewNeuralSession() const {
  return std::make_unique<NeuralSession>(model_, vocab_, mode_);
}

NeuralSession::NeuralSession(const nlm::NeuralModel& model, const corpus::Vocabulary& vocab, nlm::ScoreMode mode)
    : model_(model), vocab_(vocab), mode_(mode), state_(model.ZeroState()) {
  context_ = model_.Step(state_, vocab_.bos());
}

WordScore NeuralSession::Score(const std::string& word) {
  const TokenId id = vocab_.Lookup(word);
  return {model_.Score(context_, id, mode_), id == vocab_.unk()};
}

void NeuralSession::Advance(const std::string& word) { context_ = model_.Step(state_, vocab_.Lookup(word)); }

namespace {

class NGramSession : public LmSession {
 public:
  explicit NGramSession(const ngram::NGramModel& model) : model_(model) {
    history_.push_back(model_.vocab().bos());
  }
  WordScore Score(const std::string& word) override {
    const TokenId id = model_.vocab().Lookup(word);
    const std::size_t keep = std::min<std::size_t>(history_.size(), static_cast<std::size_t>(model_.order() - 1));
    std::span<const TokenId> context(history_.data() + history_.size() - keep, keep);
    return {model_.LogProb(context, id), id == model_.vocab().unk()};
  }
  void Advance(const std::string& word) override { history_.push_back(model_.vocab().Lookup(word)); }

 private:
  const ngram::NGramModel& model_;
  std::vector<TokenId> history_;
};

}  // namespace

std::unique_ptr<LmSession> NGramRescoringLm::NewSession() const { return std::make_unique<NGramSession>(model_); }

void RescoreConfig::Validate() const {
  if (!(lm_weight >= 0 && lm_weight <= 1)) throw Error("lm_weight must lie in [0, 1]");
  if (!(unk_scale > 0 && unk_scale <= 1)) throw Error("unk_scale must lie in (0, 1]");
  if (!std::isfinite(acoustic_scale)) throw Error("acoustic_scale must be finite");
}

std::vector<double> SecondPassScores(LmSession& session, const Hypothesis& hyp, const RescoreConfig& config) {
  const auto in_class = hyp.InClass();
  const double unk_term = std::log(config.unk_scale);
  std::vector<double> out(hyp.words.size());
  for (std::size_t i = 0; i < hyp.words.size(); ++i) {
    if (in_class[i]) {
      out[i] = hyp.lm_logprobs[i];
    } else {
      const auto s = session.Score(hyp.words[i]);
      out[i] = s.logscore + (s.is_unk ? unk_term : 0.0);
    }
    session.Advance(hyp.words[i]);
  }
  return out;
}

double Combine(const Hypothesis& hyp, std::span<const double> second_pass, double lm_weight, double acoustic_scale) {
  double total = acoustic_scale * hyp.acoustic;
  if (hyp.tag_error) return total + hyp.FirstPassLm();
  const auto in_class = hyp.InClass();
  for (std::size_t i = 0; i < hyp.words.size(); ++i) {
    if (in_class[i]) {
      total += hyp.lm_logprobs[i];
    } else {
      total += lm_weight * second_pass[i] + (1.0 - lm_weight) * hyp.lm_logprobs[i];
    }
  }
  return total;
}

namespace {

// Indices of `list` sorted by descending score; ties keep list order.
std::vector<std::size_t> RankOrder(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

void RescoreNBest(const RescoringLm& lm, NBestList& list, const RescoreConfig& config) {
  config.Validate();
  const auto start = std::chrono::steady_clock::now();
  for (auto& h : list.hyps) {
    auto session = lm.NewSession();
    h.nlm_scores = SecondPassScores(*session, h, config);
  }
  list.rescore_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  std::vector<double> combined;
  for (auto& h : list.hyps) {
    h.combined = Combine(h, h.nlm_scores, config.lm_weight, config.acoustic_scale);
    combined.push_back(h.combined);
  }
  const auto order = RankOrder(combined);
  std::vector<Hypothesis> sorted;
  for (std::size_t r = 0; r < order.size(); ++r) {
    sorted.push_back(std::move(list.hyps[order[r]]));
    sorted.back().new_rank = r + 1;
  }
  list.hyps = std::move(sorted);
}

bool StatePassthroughCheck(const NeuralRescoringLm& lm, std::span<const std::string> prefix,
                           std::span<const std::string> span, const std::string& next_word) {
  auto make = [&](bool tagged) {
    Hypothesis h;
    for (const auto& w : prefix) h.tokens.push_back(w);
    if (tagged) h.tokens.emplace_back(corpus::kClassOpen);
    for (const auto& w : span) h.tokens.push_back(w);
    if (tagged) h.tokens.emplace_back(corpus::kClassClose);
    DeriveSpans(h);
    h.lm_logprobs.assign(h.words.size(), -1.0);
    return h;
  };
  RescoreConfig config;
  auto tagged = lm.NewNeuralSession();
  auto plain = lm.NewNeuralSession();
  SecondPassScores(*tagged, make(true), config);
  SecondPassScores(*plain, make(false), config);
  return tagged->state() == plain->state() && tagged->Score(next_word).logscore == plain->Score(next_word).logscore;
}

TuneResult TuneWeights(const RescoringLm& lm, std::span<const NBestList> lists,
                       const std::map<std::string, std::vector<std::string>>& refs,
                       std::span<const double> lm_weights, std::span<const double> acoustic_scales,
                       const RescoreConfig& base) {
  base.Validate();
  if (lm_weights.empty() || acoustic_scales.empty()) throw Error("empty tuning grid");
  // Second-pass scores do not depend on the grid, so compute them once.
  std::vector<std::vector<std::vector<double>>> second(lists.size());
  std::vector<const std::vector<std::string>*> ref_words;
  for (std::size_t u = 0; u < lists.size(); ++u) {
    auto it = refs.find(lists[u].utt_id);
    if (it == refs.end()) throw DataError("no reference for utterance '" + lists[u].utt_id + "'");
    ref_words.push_back(&it->second);
    for (const auto& h : lists[u].hyps) {
      auto session = lm.NewSession();
      second[u].push_back(SecondPassScores(*session, h, base));
    }
  }
  TuneResult best;
  bool have = false;
  for (double lw : lm_weights) {
    if (!(lw >= 0 && lw <= 1)) throw Error("lm_weight grid values must lie in [0, 1]");
    for (double as : acoustic_scales) {
      eval::ErrorCounts counts;
      for (std::size_t u = 0; u < lists.size(); ++u) {
        std::vector<double> combined;
        for (std::size_t i = 0; i < lists[u].hyps.size(); ++i) {
          combined.push_back(Combine(lists[u].hyps[i], second[u][i], lw, as));
        }
        const auto& top = lists[u].hyps[RankOrder(combined).front()];
        counts += eval::CountErrors(eval::Align(*ref_words[u], top.words));
      }
      const double wer = counts.rate();
      best.grid.push_back({lw, as, wer});
      if (!have || wer < best.wer) {
        best.lm_weight = lw;
        best.acoustic_scale = as;
        best.wer = wer;
        have = true;
      }
    }
  }
  return best;
}

}  // namespace nlmr::rescore
