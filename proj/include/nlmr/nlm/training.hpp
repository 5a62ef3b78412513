#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nlmr/corpus/corpus.hpp"
#include "nlmr/mixer/sampler.hpp"
#include "nlmr/nlm/config.hpp"
#include "nlmr/nlm/parameters.hpp"

namespace nlmr::nlm {

/// A T x B block of prediction events, position-major like mixer::Minibatch.
struct Segment {
  std::size_t batch_size = 0;
  std::size_t length = 0;
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  std::vector<std::uint8_t> reset;
  /// Loss weight per event; 0 marks padding.
  std::vector<float> weight;

  std::size_t Index(std::size_t t, std::size_t b) const { return t * batch_size + b; }
  static Segment FromMinibatch(const mixer::Minibatch& batch);
};

/// Recurrent state carried between consecutive segments (truncated BPTT).
template <typename Real>
struct CarryState {
  using Matrix = typename BasicParameters<Real>::Matrix;
  std::vector<Matrix> cell;       // hidden x B per layer
  std::vector<Matrix> projected;  // projection x B per layer

  static CarryState Zero(const ModelConfig& config, std::size_t batch_size);
};

/// Noise distribution for NCE: q(w) proportional to (count(w) + 1)^power.
class NoiseDistribution {
 public:
  NoiseDistribution(std::span<const double> counts, double power);
  /// Unigram counts of every token after <s> in `corpora`.
  static std::vector<double> CountTargets(std::span<const corpus::Corpus* const> corpora, std::size_t vocab_size);

  double Prob(TokenId w) const { return prob_[static_cast<std::size_t>(w)]; }
  std::span<const double> probs() const { return prob_; }
  TokenId Sample(Rng& rng) const;

 private:
  std::vector<double> prob_;
  std::vector<double> cumulative_;
};

/// The noise words shared by every event of one segment, with ln(k q(n)).
/// Keeps a pointer to the distribution, which must outlive the draw.
struct NoiseDraw {
  std::vector<TokenId> ids;
  std::vector<double> log_kq;
  const NoiseDistribution* dist = nullptr;

  static NoiseDraw Sample(const NoiseDistribution& noise, std::size_t k, Rng& rng);
};

/// Mean per-event loss of `segment`, advancing `carry`. When `grad` is given it
/// receives d(loss)/d(params) (overwritten). NCE requires `noise`.
template <typename Real>
double SegmentLoss(const BasicParameters<Real>& params, const Segment& segment, CarryState<Real>& carry,
                   Objective objective, const NoiseDraw* noise, BasicParameters<Real>* grad);

/// One recurrent step for a batch of lanes; lanes with reset set start from
/// the zero state. Returns the projection_dim x B context matrix.
Eigen::MatrixXf StepBatch(const Parameters& params, std::span<const TokenId> inputs,
                          std::span<const std::uint8_t> reset, CarryState<float>& carry);

struct CorpusEvaluation {
  double perplexity = 0.0;               // full softmax
  double perplexity_unnormalized = 0.0;  // exp(-mean(z - lnZ_offset))
  double mean_abs_lnz_gap = 0.0;         // mean |lnZ(h) - lnZ_offset|
  std::size_t events = 0;
};

/// Batched forward pass over a corpus; each lane runs whole sentences.
CorpusEvaluation EvaluateCorpus(const Parameters& params, const corpus::Corpus& corpus, std::size_t batch_size = 64);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_ppl = 0.0;
  double learning_rate = 0.0;
  /// False when the epoch did not improve dev PPL and was rolled back.
  bool accepted = true;
};

struct TrainOptions {
  Objective objective = Objective::kSoftmax;
  NceConfig nce;
  double learning_rate = 1.0;
  double min_learning_rate = 0.01;
  double decay = 0.5;
  double clip_norm = 5.0;
  std::size_t max_epochs = 10;
  /// Minibatches per epoch; 0 means one pass worth of events over the plan's corpora.
  std::size_t steps_per_epoch = 0;
  std::uint64_t seed = 1;
  /// Tensor names or group prefixes left untouched (fine-tuning).
  std::vector<std::string> freeze;
  /// Called after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Parameters params;
  std::vector<EpochRecord> log;
  double best_dev_ppl = 0.0;
  bool diverged = false;
};

/// Trains from a fresh initialization on minibatches drawn from `plan`.
TrainResult Train(const ModelConfig& config, const mixer::MixingPlan& plan, const corpus::Corpus& dev,
                  const TrainOptions& options);

/// Continues training `pretrained`. Frozen tensors are returned bitwise unchanged.
TrainResult FineTune(Parameters pretrained, const mixer::MixingPlan& plan, const corpus::Corpus& dev,
                     const TrainOptions& options);

/// One line per epoch: epoch<TAB>train_loss<TAB>dev_ppl.
void WriteTrainingLog(std::ostream& out, std::span<const EpochRecord> log);

}  // namespace nlmr::nlm
