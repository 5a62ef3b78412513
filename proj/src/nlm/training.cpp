#include "nlmr/nlm/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>

#include "nlmr/random.hpp"

namespace nlmr::nlm {

namespace {

template <typename Real>
using MatrixT = typename BasicParameters<Real>::Matrix;

template <typename Real>
struct LayerTrace {
  MatrixT<Real> in;      // stacked [x; r_prev]
  MatrixT<Real> act;     // post-activation gates i, f, g, o
  MatrixT<Real> c_prev;
  MatrixT<Real> tc;      // tanh(c)
  MatrixT<Real> h;
};

template <typename Real>
MatrixT<Real> Sigmoid(const MatrixT<Real>& x) {
  return (Real(1) + (-x.array()).exp()).inverse().matrix();
}

double Softplus(double v) {
  return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
}

double SigmoidScalar(double v) {
  return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

// One recurrent step for B lanes. Returns the top-layer context (P x B).
template <typename Real>
MatrixT<Real> ForwardStep(const BasicParameters<Real>& p, std::span<const TokenId> inputs,
                          std::span<const std::uint8_t> reset, CarryState<Real>& carry,
                          std::vector<LayerTrace<Real>>* trace) {
  const auto& c = p.config;
  const auto batch = static_cast<Eigen::Index>(inputs.size());
  const auto h = static_cast<Eigen::Index>(c.hidden_units);
  MatrixT<Real> x(static_cast<Eigen::Index>(c.embed_dim), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const TokenId tok = inputs[static_cast<std::size_t>(b)];
    if (tok < 0 || static_cast<std::size_t>(tok) >= c.vocab_size) throw DataError("token id outside model vocabulary");
    x.col(b) = p.embedding.col(tok);
    if (reset[static_cast<std::size_t>(b)]) {
      for (std::size_t l = 0; l < c.layers; ++l) {
        carry.cell[l].col(b).setZero();
        carry.projected[l].col(b).setZero();
      }
    }
  }
  if (trace) trace->resize(c.layers);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const auto& layer = p.layers[l];
    MatrixT<Real> in(x.rows() + carry.projected[l].rows(), batch);
    in.topRows(x.rows()) = x;
    in.bottomRows(carry.projected[l].rows()) = carry.projected[l];
    MatrixT<Real> act = layer.weight.transpose() * in;
    act.colwise() += layer.bias.col(0);
    act.topRows(2 * h) = Sigmoid<Real>(act.topRows(2 * h));
    act.middleRows(2 * h, h) = act.middleRows(2 * h, h).array().tanh().matrix();
    act.bottomRows(h) = Sigmoid<Real>(act.bottomRows(h));
    MatrixT<Real> cell = act.middleRows(h, h).cwiseProduct(carry.cell[l]) +
                         act.topRows(h).cwiseProduct(act.middleRows(2 * h, h));
    MatrixT<Real> tc = cell.array().tanh().matrix();
    MatrixT<Real> hid = act.bottomRows(h).cwiseProduct(tc);
    MatrixT<Real> r = layer.projection.transpose() * hid;
    if (trace) {
      auto& tr = (*trace)[l];
      tr.in = std::move(in);
      tr.act = std::move(act);
      tr.c_prev = carry.cell[l];
      tr.tc = std::move(tc);
      tr.h = std::move(hid);
    }
    carry.cell[l] = std::move(cell);
    if (c.residual && l > 0) {
      x = r + x;
    } else {
      x = r;
    }
    carry.projected[l] = std::move(r);
  }
  return x;
}

}  // namespace

Segment Segment::FromMinibatch(const mixer::Minibatch& batch) {
  Segment s;
  s.batch_size = batch.batch_size;
  s.length = batch.unroll_length;
  s.inputs = batch.inputs;
  s.targets = batch.targets;
  s.reset = batch.reset;
  s.weight.assign(batch.inputs.size(), 1.0f);
  return s;
}

template <typename Real>
CarryState<Real> CarryState<Real>::Zero(const ModelConfig& config, std::size_t batch_size) {
  CarryState s;
  const auto b = static_cast<Eigen::Index>(batch_size);
  for (std::size_t l = 0; l < config.layers; ++l) {
    s.cell.push_back(Matrix::Zero(static_cast<Eigen::Index>(config.hidden_units), b));
    s.projected.push_back(Matrix::Zero(static_cast<Eigen::Index>(config.projection_dim), b));
  }
  return s;
}

NoiseDistribution::NoiseDistribution(std::span<const double> counts, double power) {
  if (counts.empty()) throw Error("noise distribution needs a nonempty vocabulary");
  prob_.resize(counts.size());
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (!(counts[i] >= 0)) throw DataError("noise counts must be nonnegative");
    prob_[i] = std::pow(counts[i] + 1.0, power);
    total += prob_[i];
  }
  cumulative_.resize(prob_.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < prob_.size(); ++i) {
    prob_[i] /= total;
    acc += prob_[i];
    cumulative_[i] = acc;
  }
}

std::vector<double> NoiseDistribution::CountTargets(std::span<const corpus::Corpus* const> corpora,
                                                    std::size_t vocab_size) {
  std::vector<double> counts(vocab_size, 0.0);
  for (const auto* c : corpora) {
    for (const auto& s : c->sentences) {
      for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i] >= 0 && static_cast<std::size_t>(s[i]) < vocab_size) counts[static_cast<std::size_t>(s[i])] += 1.0;
      }
    }
  }
  return counts;
}

TokenId NoiseDistribution::Sample(Rng& rng) const {
  const double u = rng.Uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return static_cast<TokenId>(it - cumulative_.begin());
}

NoiseDraw NoiseDraw::Sample(const NoiseDistribution& noise, std::size_t k, Rng& rng) {
  NoiseDraw d;
  for (std::size_t j = 0; j < k; ++j) {
    const TokenId w = noise.Sample(rng);
    d.ids.push_back(w);
    d.log_kq.push_back(std::log(static_cast<double>(k) * noise.Prob(w)));
  }
  d.dist = &noise;
  return d;
}

template <typename Real>
double SegmentLoss(const BasicParameters<Real>& params, const Segment& seg, CarryState<Real>& carry,
                   Objective objective, const NoiseDraw* noise, BasicParameters<Real>* grad) {
  using Matrix = MatrixT<Real>;
  const auto& cfg = params.config;
  if (objective == Objective::kNce && (noise == nullptr || noise->ids.empty())) {
    throw Error("NCE objective requires noise samples");
  }
  const std::size_t batch = seg.batch_size;
  const std::size_t steps = seg.length;
  const auto bsz = static_cast<Eigen::Index>(batch);
  const auto h = static_cast<Eigen::Index>(cfg.hidden_units);
  const auto proj = static_cast<Eigen::Index>(cfg.projection_dim);
  const bool backward = grad != nullptr;
  if (backward) *grad = BasicParameters<Real>::Zeros(cfg);

  for (TokenId w : seg.targets) {
    if (w < 0 || static_cast<std::size_t>(w) >= cfg.vocab_size) throw DataError("target id outside model vocabulary");
  }
  double weight_sum = 0.0;
  for (float w : seg.weight) weight_sum += w;
  if (weight_sum <= 0.0) weight_sum = 1.0;

  std::vector<std::vector<LayerTrace<Real>>> traces(backward ? steps : 0);
  std::vector<Matrix> dtop(backward ? steps : 0);
  double loss = 0.0;

  // Noise columns gathered once per segment.
  Matrix noise_w;
  Eigen::Matrix<Real, Eigen::Dynamic, 1> noise_b;
  if (objective == Objective::kNce) {
    const auto k = static_cast<Eigen::Index>(noise->ids.size());
    noise_w.resize(proj, k);
    noise_b.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      noise_w.col(j) = params.output_weight.col(noise->ids[static_cast<std::size_t>(j)]);
      noise_b[j] = params.output_bias(noise->ids[static_cast<std::size_t>(j)], 0);
    }
  }
  const Real lnz = params.lnz(0, 0);

  for (std::size_t t = 0; t < steps; ++t) {
    std::span<const TokenId> inputs(seg.inputs.data() + t * batch, batch);
    std::span<const std::uint8_t> reset(seg.reset.data() + t * batch, batch);
    const Matrix top = ForwardStep<Real>(params, inputs, reset, carry, backward ? &traces[t] : nullptr);

    Matrix dlogits;
    if (objective == Objective::kSoftmax) {
      Matrix logits = params.output_weight.transpose() * top;
      logits.colwise() += params.output_bias.col(0);
      if (backward) dlogits = Matrix::Zero(logits.rows(), bsz);
      for (Eigen::Index b = 0; b < bsz; ++b) {
        const double w = seg.weight[t * batch + static_cast<std::size_t>(b)];
        if (w == 0.0) continue;
        const TokenId target = seg.targets[t * batch + static_cast<std::size_t>(b)];
        const Real m = logits.col(b).maxCoeff();
        const auto e = (logits.col(b).array() - m).exp();
        const double sum = static_cast<double>(e.sum());
        const double lse = static_cast<double>(m) + std::log(sum);
        loss += w * (lse - static_cast<double>(logits(target, b)));
        if (backward) {
          const Real scale = static_cast<Real>(w / weight_sum);
          dlogits.col(b) = (e / static_cast<Real>(sum) * scale).matrix();
          dlogits(target, b) -= scale;
        }
      }
      if (backward) {
        grad->output_weight.noalias() += top * dlogits.transpose();
        grad->output_bias.col(0) += dlogits.rowwise().sum();
        dtop[t] = params.output_weight * dlogits;
      }
    } else {
      const auto k = noise_w.cols();
      const double log_k = std::log(static_cast<double>(k));
      Matrix zn = noise_w.transpose() * top;  // k x B
      zn.colwise() += noise_b;
      Matrix dzn;
      Matrix dt;
      if (backward) {
        dzn = Matrix::Zero(k, bsz);
        dt = Matrix::Zero(proj, bsz);
      }
      double dlnz = 0.0;
      for (Eigen::Index b = 0; b < bsz; ++b) {
        const double w = seg.weight[t * batch + static_cast<std::size_t>(b)];
        if (w == 0.0) continue;
        const TokenId target = seg.targets[t * batch + static_cast<std::size_t>(b)];
        const double zt = static_cast<double>(params.output_weight.col(target).dot(top.col(b)) +
                                              params.output_bias(target, 0));
        const double delta_t = zt - static_cast<double>(lnz) - log_k - std::log(noise->dist->Prob(target));
        loss += w * Softplus(-delta_t);
        const double scale = w / weight_sum;
        const double g_t = (SigmoidScalar(delta_t) - 1.0) * scale;
        double g_sum = g_t;
        for (Eigen::Index j = 0; j < k; ++j) {
          const double delta_n =
              static_cast<double>(zn(j, b)) - static_cast<double>(lnz) - noise->log_kq[static_cast<std::size_t>(j)];
          loss += w * Softplus(delta_n);
          if (backward) {
            const double g_n = SigmoidScalar(delta_n) * scale;
            dzn(j, b) = static_cast<Real>(g_n);
            g_sum += g_n;
          }
        }
        if (backward) {
          grad->output_weight.col(target) += static_cast<Real>(g_t) * top.col(b);
          grad->output_bias(target, 0) += static_cast<Real>(g_t);
          dt.col(b) += static_cast<Real>(g_t) * params.output_weight.col(target);
          dlnz -= g_sum;
        }
      }
      if (backward) {
        const Matrix dwn = top * dzn.transpose();
        for (Eigen::Index j = 0; j < k; ++j) {
          const TokenId id = noise->ids[static_cast<std::size_t>(j)];
          grad->output_weight.col(id) += dwn.col(j);
          grad->output_bias(id, 0) += dzn.row(j).sum();
        }
        dt.noalias() += noise_w * dzn;
        dtop[t] = std::move(dt);
        grad->lnz(0, 0) += static_cast<Real>(dlnz);
      }
    }
  }

  if (backward) {
    std::vector<Matrix> dr_next(cfg.layers, Matrix::Zero(proj, bsz));
    std::vector<Matrix> dc_next(cfg.layers, Matrix::Zero(h, bsz));
    for (std::size_t t = steps; t-- > 0;) {
      Matrix dy = dtop[t];
      for (std::size_t l = cfg.layers; l-- > 0;) {
        const auto& tr = traces[t][l];
        const auto& layer = params.layers[l];
        auto& g = grad->layers[l];
        const bool res = cfg.residual && l > 0;
        const Matrix dr = dy + dr_next[l];
        g.projection.noalias() += tr.h * dr.transpose();
        const Matrix dh = layer.projection * dr;
        const auto i = tr.act.topRows(h).array();
        const auto f = tr.act.middleRows(h, h).array();
        const auto gg = tr.act.middleRows(2 * h, h).array();
        const auto o = tr.act.bottomRows(h).array();
        const auto tc = tr.tc.array();
        const Matrix dc = (dh.array() * o * (Real(1) - tc * tc)).matrix() + dc_next[l];
        Matrix dgates(4 * h, bsz);
        dgates.topRows(h) = (dc.array() * gg * i * (Real(1) - i)).matrix();
        dgates.middleRows(h, h) = (dc.array() * tr.c_prev.array() * f * (Real(1) - f)).matrix();
        dgates.middleRows(2 * h, h) = (dc.array() * i * (Real(1) - gg * gg)).matrix();
        dgates.bottomRows(h) = (dh.array() * tc * o * (Real(1) - o)).matrix();
        Matrix dc_prev = (dc.array() * f).matrix();
        g.weight.noalias() += tr.in * dgates.transpose();
        g.bias.col(0) += dgates.rowwise().sum();
        const Matrix din = layer.weight * dgates;
        const auto in_dim = tr.in.rows() - proj;
        Matrix dx = din.topRows(in_dim);
        if (res) dx += dy;
        Matrix dr_prev = din.bottomRows(proj);
        for (std::size_t b = 0; b < batch; ++b) {
          if (seg.reset[t * batch + b]) {
            dr_prev.col(static_cast<Eigen::Index>(b)).setZero();
            dc_prev.col(static_cast<Eigen::Index>(b)).setZero();
          }
        }
        dr_next[l] = std::move(dr_prev);
        dc_next[l] = std::move(dc_prev);
        dy = std::move(dx);
      }
      for (std::size_t b = 0; b < batch; ++b) {
        grad->embedding.col(seg.inputs[t * batch + b]) += dy.col(static_cast<Eigen::Index>(b));
      }
    }
  }
  return loss / weight_sum;
}


template CarryState<float> CarryState<float>::Zero(const ModelConfig&, std::size_t);
template CarryState<double> CarryState<double>::Zero(const ModelConfig&, std::size_t);
template double SegmentLoss<float>(const Parameters&, const Segment&, CarryState<float>&, Objective, const NoiseDraw*,
                                   Parameters*);
template double SegmentLoss<double>(const BasicParameters<double>&, const Segment&, CarryState<double>&, Objective,
                                    const NoiseDraw*, BasicParameters<double>*);

Eigen::MatrixXf StepBatch(const Parameters& params, std::span<const TokenId> inputs,
                          std::span<const std::uint8_t> reset, CarryState<float>& carry) {
  if (inputs.size() != reset.size()) throw Error("StepBatch: inputs and reset differ in size");
  return ForwardStep<float>(params, inputs, reset, carry, nullptr);
}

CorpusEvaluation EvaluateCorpus(const Parameters& params, const corpus::Corpus& corpus, std::size_t batch_size) {
  struct Event {
    TokenId input;
    TokenId target;
    std::uint8_t reset;
  };
  if (corpus.sentences.empty()) throw DataError("cannot evaluate on an empty corpus");
  const std::size_t lanes = std::max<std::size_t>(1, std::min(batch_size, corpus.sentences.size()));
  std::vector<std::vector<Event>> streams(lanes);
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    const auto& s = corpus.sentences[i];
    for (std::size_t j = 0; j + 1 < s.size(); ++j) streams[i % lanes].push_back({s[j], s[j + 1], j == 0});
  }
  std::size_t longest = 0;
  for (const auto& st : streams) longest = std::max(longest, st.size());

  const auto& cfg = params.config;
  auto carry = CarryState<float>::Zero(cfg, lanes);
  std::vector<TokenId> inputs(lanes);
  std::vector<std::uint8_t> reset(lanes);
  const float lnz = params.lnz(0, 0);
  double sum_norm = 0.0, sum_unnorm = 0.0, sum_gap = 0.0;
  std::size_t events = 0;
  Eigen::MatrixXf logits;
  for (std::size_t t = 0; t < longest; ++t) {
    for (std::size_t b = 0; b < lanes; ++b) {
      if (t < streams[b].size()) {
        inputs[b] = streams[b][t].input;
        reset[b] = streams[b][t].reset;
      } else {
        inputs[b] = corpus.sentences.front().front();
        reset[b] = 1;
      }
    }
    const Eigen::MatrixXf top = ForwardStep<float>(params, inputs, reset, carry, nullptr);
    logits.noalias() = params.output_weight.transpose() * top;
    logits.colwise() += params.output_bias.col(0);
    for (std::size_t b = 0; b < lanes; ++b) {
      if (t >= streams[b].size()) continue;
      const auto col = logits.col(static_cast<Eigen::Index>(b));
      const float m = col.maxCoeff();
      const double lse = static_cast<double>(m) + std::log(static_cast<double>((col.array() - m).exp().sum()));
      const double z = col[streams[b][t].target];
      if (!std::isfinite(lse) || !std::isfinite(z)) throw NumericError("non-finite score during evaluation");
      sum_norm += z - lse;
      sum_unnorm += z - lnz;
      sum_gap += std::abs(lse - lnz);
      ++events;
    }
  }
  CorpusEvaluation out;
  out.events = events;
  out.perplexity = std::exp(-sum_norm / static_cast<double>(events));
  out.perplexity_unnormalized = std::exp(-sum_unnorm / static_cast<double>(events));
  out.mean_abs_lnz_gap = sum_gap / static_cast<double>(events);
  return out;
}

namespace {

TrainResult RunTraining(Parameters params, const mixer::MixingPlan& plan, const corpus::Corpus& dev,
                        const TrainOptions& options) {
  const auto& cfg = params.config;
  if (options.learning_rate <= 0 || options.decay <= 0 || options.decay >= 1) {
    throw Error("learning rate must be positive and decay in (0, 1)");
  }
  if (options.objective == Objective::kNce && options.nce.noise_samples < 1) {
    throw Error("NCE needs at least one noise sample");
  }

  // Frozen tensors never receive an update.
  std::vector<bool> frozen(params.Tensors().size(), false);
  {
    std::vector<std::string> names;
    for (const auto& f : options.freeze) {
      for (auto& n : ResolveTensorNames(params, f)) names.push_back(std::move(n));
    }
    if (options.objective == Objective::kNce && !options.nce.learn_lnz) names.push_back("nce.lnz");
    const auto tensors = params.Tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      frozen[i] = std::find(names.begin(), names.end(), tensors[i].first) != names.end();
    }
  }

  std::vector<const corpus::Corpus*> corpora;
  std::size_t plan_events = 0;
  for (const auto& c : plan.components) {
    corpora.push_back(&c.corpus.get());
    if (c.weight > 0) {
      for (const auto& s : c.corpus.get().sentences) plan_events += s.size() > 0 ? s.size() - 1 : 0;
    }
  }
  std::optional<NoiseDistribution> noise;
  if (options.objective == Objective::kNce) {
    const auto counts = NoiseDistribution::CountTargets(corpora, cfg.vocab_size);
    noise.emplace(counts, options.nce.unigram_power);
  }

  mixer::Sampler sampler(plan);
  const std::size_t per_batch = plan.batch_size * plan.unroll_length;
  const std::size_t steps_per_epoch =
      options.steps_per_epoch > 0 ? options.steps_per_epoch : std::max<std::size_t>(1, plan_events / per_batch);
  Rng noise_rng(MixSeed(options.seed, 2));

  auto dev_ppl = [&](const Parameters& p) { return EvaluateCorpus(p, dev).perplexity; };
  TrainResult result;
  Parameters best = params;
  double best_ppl = dev_ppl(params);
  double lr = options.learning_rate;
  auto carry = CarryState<float>::Zero(cfg, plan.batch_size);
  Parameters grad;

  for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    bool diverged = false;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const Segment seg = Segment::FromMinibatch(sampler.Next());
      NoiseDraw draw;
      if (noise) draw = NoiseDraw::Sample(*noise, options.nce.noise_samples, noise_rng);
      const double loss = SegmentLoss<float>(params, seg, carry, options.objective, noise ? &draw : nullptr, &grad);
      if (!std::isfinite(loss)) {
        diverged = true;
        break;
      }
      loss_sum += loss;
      auto ptensors = params.Tensors();
      auto gtensors = grad.Tensors();
      double norm2 = 0.0;
      for (std::size_t i = 0; i < gtensors.size(); ++i) {
        if (!frozen[i]) norm2 += static_cast<double>(gtensors[i].second->squaredNorm());
      }
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) {
        diverged = true;
        break;
      }
      const double scale = norm > options.clip_norm ? options.clip_norm / norm : 1.0;
      const auto step_size = static_cast<float>(lr * scale);
      for (std::size_t i = 0; i < ptensors.size(); ++i) {
        if (!frozen[i]) *ptensors[i].second -= step_size * *gtensors[i].second;
      }
    }
    if (diverged || !params.AllFinite()) {
      result.diverged = true;
      break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
    rec.learning_rate = lr;
    try {
      rec.dev_ppl = dev_ppl(params);
    } catch (const NumericError&) {
      result.diverged = true;
      break;
    }
    rec.accepted = rec.dev_ppl < best_ppl;
    if (rec.accepted) {
      best = params;
      best_ppl = rec.dev_ppl;
    } else {
      params = best;
      carry = CarryState<float>::Zero(cfg, plan.batch_size);
      lr *= options.decay;
    }
    result.log.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    if (lr < options.min_learning_rate) break;
  }
  result.params = std::move(best);
  result.best_dev_ppl = best_ppl;
  return result;
}

}  // namespace

TrainResult Train(const ModelConfig& config, const mixer::MixingPlan& plan, const corpus::Corpus& dev,
                  const TrainOptions& options) {
  auto params = InitParameters<float>(config, MixSeed(options.seed, 1));
  params.lnz(0, 0) = static_cast<float>(options.nce.lnz_init);
  return RunTraining(std::move(params), plan, dev, options);
}

TrainResult FineTune(Parameters pretrained, const mixer::MixingPlan& plan, const corpus::Corpus& dev,
                     const TrainOptions& options) {
  pretrained.config.Validate();
  if (!pretrained.AllFinite()) throw NumericError("pretrained parameters contain non-finite values");
  return RunTraining(std::move(pretrained), plan, dev, options);
}

void WriteTrainingLog(std::ostream& out, std::span<const EpochRecord> log) {
  char buf[128];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.4f\n", r.epoch, r.train_loss, r.dev_ppl);
    out << buf;
  }
}

}  // namespace nlmr::nlm
