#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "nlmr/nlm/config.hpp"
#include "nlmr/nlm/parameters.hpp"
#include "nlmr/scorer.hpp"

namespace nlmr::nlm {

using Vector = Eigen::VectorXf;

/// Recurrent history: per layer, the cell vector and the projected output
/// that feeds back into the next step.
struct LmState {
  std::vector<Vector> cell;
  std::vector<Vector> projected;

  friend bool operator==(const LmState& a, const LmState& b);
};

// Inference-side view of a neural LM. Implementations are immutable and can be
// shared across threads; each scoring session owns its LmState.
class NeuralModel {
 public:
  virtual ~NeuralModel() = default;

  virtual const ModelConfig& config() const = 0;

  /// Advances `state` by one input token and returns the context vector c
  /// (the top layer output, projection_dim wide). Throws NumericError on a
  /// non-finite activation.
  virtual Vector Step(LmState& state, TokenId token) const = 0;

  /// z_w = c . e_w + b_w; one inner product.
  virtual float Logit(const Vector& context, TokenId word) const = 0;
  /// All |V| logits.
  virtual void Logits(const Vector& context, Vector& out) const = 0;
  /// The learned constant standing in for log Z(h).
  virtual float LnZOffset() const = 0;

  LmState ZeroState() const;

  /// log Z(h) over the full vocabulary (max-shifted log-sum-exp).
  double LogPartition(const Vector& context) const;
  double LogProbNormalized(const Vector& context, TokenId word) const;
  /// z_w - lnZ_offset, no vocabulary sweep.
  double LogScoreUnnormalized(const Vector& context, TokenId word) const;
  double Score(const Vector& context, TokenId word, ScoreMode mode) const;
};

/// Float-weight model.
class FloatModel : public NeuralModel {
 public:
  explicit FloatModel(Parameters params);

  const Parameters& params() const { return params_; }
  const ModelConfig& config() const override { return params_.config; }
  Vector Step(LmState& state, TokenId token) const override;
  float Logit(const Vector& context, TokenId word) const override;
  void Logits(const Vector& context, Vector& out) const override;
  float LnZOffset() const override { return params_.lnz(0, 0); }

 private:
  Parameters params_;
};

struct SequenceScore {
  std::vector<double> token_scores;
  double total = 0.0;
};

/// Scores every token after the leading <s> of a framed sequence, threading
/// the state left to right.
SequenceScore ScoreSequence(const NeuralModel& model, std::span<const TokenId> tokens, ScoreMode mode);

/// SentenceScorer adaptor so neural models plug into the perplexity harness.
class NeuralScorer : public SentenceScorer {
 public:
  NeuralScorer(const NeuralModel& model, ScoreMode mode) : model_(model), mode_(mode) {}
  std::vector<double> ScoreSentence(std::span<const TokenId> sentence) const override {
    return ScoreSequence(model_, sentence, mode_).token_scores;
  }

 private:
  const NeuralModel& model_;
  ScoreMode mode_;
};

/// Shared LSTMP cell arithmetic for one layer and one step: `gates` holds the
/// pre-activations (i, f, g, o); updates `cell` and returns the cell output h.
Vector LstmCell(const Vector& gates, Vector& cell);

}  // namespace nlmr::nlm
