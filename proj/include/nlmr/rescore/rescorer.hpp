#pragma once

#include <array>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nlmr/corpus/vocabulary.hpp"
#include "nlmr/ngram/model.hpp"
#include "nlmr/nlm/model.hpp"
#include "nlmr/rescore/nbest.hpp"

namespace nlmr::rescore {

struct WordScore {
  double logscore = 0.0;  // natural log
  bool is_unk = false;
};

/// Left-to-right scoring state for one hypothesis.
class LmSession {
 public:
  virtual ~LmSession() = default;
  /// Score of `word` given the words advanced so far.
  virtual WordScore Score(const std::string& word) = 0;
  virtual void Advance(const std::string& word) = 0;
};

/// Any second-pass LM. Implementations are shared read-only across sessions.
class RescoringLm {
 public:
  virtual ~RescoringLm() = default;
  virtual std::unique_ptr<LmSession> NewSession() const = 0;
};

class NeuralSession;

/// Float or quantized NLM over a word vocabulary.
class NeuralRescoringLm : public RescoringLm {
 public:
  NeuralRescoringLm(const nlm::NeuralModel& model, const corpus::Vocabulary& vocab, nlm::ScoreMode mode);
  std::unique_ptr<LmSession> NewSession() const override;
  /// Concrete session type, exposing the recurrent state for inspection.
  std::unique_ptr<NeuralSession> NewNeuralSession() const;

 private:
  const nlm::NeuralModel& model_;
  const corpus::Vocabulary& vocab_;
  nlm::ScoreMode mode_;
};

class NeuralSession : public LmSession {
 public:
  NeuralSession(const nlm::NeuralModel& model, const corpus::Vocabulary& vocab, nlm::ScoreMode mode);
  WordScore Score(const std::string& word) override;
  void Advance(const std::string& word) override;
  const nlm::LmState& state() const { return state_; }

 private:
  const nlm::NeuralModel& model_;
  const corpus::Vocabulary& vocab_;
  nlm::ScoreMode mode_;
  nlm::LmState state_;
  nlm::Vector context_;
};

/// Back-off n-gram model as a second-pass LM.
class NGramRescoringLm : public RescoringLm {
 public:
  explicit NGramRescoringLm(const ngram::NGramModel& model) : model_(model) {}
  std::unique_ptr<LmSession> NewSession() const override;

 private:
  const ngram::NGramModel& model_;
};

struct RescoreConfig {
  /// Per-word blend between NLM score (1) and first-pass LM score (0).
  double lm_weight = 0.5;
  double acoustic_scale = 1.0;
  /// Probability factor applied to <unk> words: ln(unk_scale) is added.
  double unk_scale = 1e-5;

  void Validate() const;
};

/// Per-word second-pass values: the NLM score (with the <unk> term) outside
/// class spans and the retained first-pass value inside them. Class words
/// still advance the session. Tag tokens are not fed to the LM.
std::vector<double> SecondPassScores(LmSession& session, const Hypothesis& hyp, const RescoreConfig& config);

/// acoustic_scale * acoustic + sum of per-word combined scores. Flagged
/// hypotheses combine as if lm_weight were 0.
double Combine(const Hypothesis& hyp, std::span<const double> second_pass, double lm_weight, double acoustic_scale);

/// Scores every hypothesis, fills nlm_scores/combined/new_rank and reorders
/// the list by combined score (stable: ties keep first-pass order).
/// rescore_ms covers LM scoring only.
void RescoreNBest(const RescoringLm& lm, NBestList& list, const RescoreConfig& config);

/// True when the session state after scoring `words` as a class span equals,
/// bitwise, the state after scoring them as ordinary words, and the next
/// word's score agrees.
bool StatePassthroughCheck(const NeuralRescoringLm& lm, std::span<const std::string> prefix,
                           std::span<const std::string> span, const std::string& next_word);

struct TuneResult {
  double lm_weight = 0.0;
  double acoustic_scale = 1.0;
  double wer = 0.0;
  /// (lm_weight, acoustic_scale, wer) for every grid point, in sweep order.
  std::vector<std::array<double, 3>> grid;
};

/// Exhaustive grid sweep minimizing top-1 WER against `refs` (utt_id ->
/// words). Ties go to the earliest grid point (lm_weight outer loop).
TuneResult TuneWeights(const RescoringLm& lm, std::span<const NBestList> lists,
                       const std::map<std::string, std::vector<std::string>>& refs,
                       std::span<const double> lm_weights, std::span<const double> acoustic_scales,
                       const RescoreConfig& base);

}  // namespace nlmr::rescore
