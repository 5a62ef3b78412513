#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nlmr/corpus/corpus.hpp"
#include "nlmr/random.hpp"

namespace nlmr::mixer {

struct MixingComponent {
  std::reference_wrapper<const corpus::Corpus> corpus;
  double weight;
};

/// Relevance-weighted corpus mixture. The referenced corpora must outlive any
/// Sampler built from the plan.
struct MixingPlan {
  std::vector<MixingComponent> components;
  std::uint64_t seed = 1;
  std::size_t batch_size = 32;
  std::size_t unroll_length = 20;
  /// Keep the (component, sentence) draw history for auditing.
  bool record_draws = false;
};

/// T x B training segment, stored position-major (index t * batch_size + b).
struct Minibatch {
  std::size_t batch_size = 0;
  std::size_t unroll_length = 0;
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  /// 1 where a new sentence starts: recurrent state is zeroed before this input.
  std::vector<std::uint8_t> reset;
  /// Component index of the sentence each position belongs to.
  std::vector<std::int32_t> corpus_tag;

  std::size_t Index(std::size_t t, std::size_t b) const { return t * batch_size + b; }
};

struct Draw {
  std::size_t component;
  std::size_t sentence;
};

/// Scales nonnegative weights to sum to one. Throws on negative or all-zero input.
std::vector<double> NormalizeWeights(std::span<const double> weights);

// Infinite minibatch stream. Each sentence slot of each lane picks component k
// with probability weight_k and takes the next sentence from that
// component's shuffled cursor; a cursor reshuffles when it wraps, so corpora of
// different sizes cycle at different rates.
class Sampler {
 public:
  explicit Sampler(MixingPlan plan);

  Minibatch Next();

  /// One slot draw: the component index, advancing the selection stream only.
  std::size_t DrawComponent();

  const MixingPlan& plan() const { return plan_; }
  /// Completed passes over each component's corpus.
  std::vector<std::size_t> EpochsCompleted() const;
  /// Training events (token predictions) emitted per component so far.
  std::span<const std::size_t> EventsEmitted() const { return events_; }
  std::span<const Draw> draws() const { return draws_; }

 private:
  struct Cursor {
    std::vector<std::size_t> order;
    std::size_t pos = 0;
    std::size_t epochs = 0;
    Rng rng;
  };
  struct Lane {
    std::size_t component = 0;
    const corpus::Sentence* sentence = nullptr;
    std::size_t pos = 0;  // next event index within sentence
  };

  void Refill(Lane& lane);

  MixingPlan plan_;
  std::vector<double> cumulative_;
  Rng select_rng_;
  std::vector<Cursor> cursors_;
  std::vector<Lane> lanes_;
  std::vector<std::size_t> events_;
  std::vector<Draw> draws_;
};

}  // namespace nlmr::mixer
