#include "nlmr/mixer/sampler.hpp"

#include <cmath>
#include <numeric>

namespace nlmr::mixer {

std::vector<double> NormalizeWeights(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("mixing weights must be finite and nonnegative");
    total += w;
  }
  if (total <= 0.0) throw Error("zero total weight");
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= total;
  return out;
}

Sampler::Sampler(MixingPlan plan) : plan_(std::move(plan)), select_rng_(MixSeed(plan_.seed, 0)) {
  if (plan_.components.empty()) throw Error("mixing plan has no components");
  if (plan_.batch_size < 1) throw Error("mixing plan: batch_size must be >= 1");
  if (plan_.unroll_length < 1) throw Error("mixing plan: unroll_length must be >= 1");
  double total = 0.0;
  for (const auto& c : plan_.components) {
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) throw Error("mixing weights must be finite and nonnegative");
    total += c.weight;
  }
  if (total <= 0.0) throw Error("zero total weight");
  if (std::abs(total - 1.0) > 1e-9) throw Error("mixing weights must sum to 1");

  double acc = 0.0;
  for (std::size_t k = 0; k < plan_.components.size(); ++k) {
    const auto& c = plan_.components[k];
    if (c.weight > 0.0 && c.corpus.get().empty()) {
      throw DataError("mixing component '" + c.corpus.get().name + "' has positive weight but no sentences");
    }
    acc += c.weight;
    cumulative_.push_back(acc);

    Cursor cur{{}, 0, 0, Rng(MixSeed(plan_.seed, k + 1))};
    cur.order.resize(c.corpus.get().sentences.size());
    std::iota(cur.order.begin(), cur.order.end(), std::size_t{0});
    cur.rng.Shuffle(std::span(cur.order));
    cursors_.push_back(std::move(cur));
  }
  lanes_.resize(plan_.batch_size);
  events_.assign(plan_.components.size(), 0);
}

std::size_t Sampler::DrawComponent() {
  const double u = select_rng_.Uniform() * cumulative_.back();
  for (std::size_t k = 0; k < cumulative_.size(); ++k) {
    if (u < cumulative_[k] && plan_.components[k].weight > 0.0) return k;
  }
  for (std::size_t k = cumulative_.size(); k-- > 0;) {
    if (plan_.components[k].weight > 0.0) return k;
  }
  return 0;
}

void Sampler::Refill(Lane& lane) {
  const std::size_t k = DrawComponent();
  Cursor& cur = cursors_[k];
  if (cur.pos == cur.order.size()) {
    cur.rng.Shuffle(std::span(cur.order));
    cur.pos = 0;
    ++cur.epochs;
  }
  const std::size_t idx = cur.order[cur.pos++];
  lane.component = k;
  lane.sentence = &plan_.components[k].corpus.get().sentences[idx];
  lane.pos = 0;
  if (plan_.record_draws) draws_.push_back({k, idx});
}

Minibatch Sampler::Next() {
  Minibatch mb;
  mb.batch_size = plan_.batch_size;
  mb.unroll_length = plan_.unroll_length;
  const std::size_t n = mb.batch_size * mb.unroll_length;
  mb.inputs.resize(n);
  mb.targets.resize(n);
  mb.reset.resize(n);
  mb.corpus_tag.resize(n);
  // Lanes are filled in a fixed order (lane-major) so draws are reproducible.
  for (std::size_t b = 0; b < mb.batch_size; ++b) {
    Lane& lane = lanes_[b];
    for (std::size_t t = 0; t < mb.unroll_length; ++t) {
      if (lane.sentence == nullptr || lane.pos + 1 >= lane.sentence->size()) Refill(lane);
      const auto& s = *lane.sentence;
      const std::size_t i = mb.Index(t, b);
      mb.inputs[i] = s[lane.pos];
      mb.targets[i] = s[lane.pos + 1];
      mb.reset[i] = lane.pos == 0 ? 1 : 0;
      mb.corpus_tag[i] = static_cast<std::int32_t>(lane.component);
      ++events_[lane.component];
      ++lane.pos;
    }
  }
  return mb;
}

std::vector<std::size_t> Sampler::EpochsCompleted() const {
  std::vector<std::size_t> out;
  for (const auto& c : cursors_) out.push_back(c.epochs);
  return out;
}

}  // namespace nlmr::mixer
