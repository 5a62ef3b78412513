// Acceptance runner. Usage:
//   acceptance setup <dir>      train the shared models into <dir>
//   acceptance <1..10> <dir>    run one criterion, record its line in <dir>
//   acceptance summary <dir>    print every recorded line
//   acceptance all <dir>        setup, then every criterion
// Exit status is 0 only when everything asked for passed.

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "nlmr/corpus/corpus.hpp"
#include "nlmr/corpus/vocabulary.hpp"
#include "nlmr/eval/metrics.hpp"
#include "nlmr/fixture/asr.hpp"
#include "nlmr/fixture/world.hpp"
#include "nlmr/mixer/sampler.hpp"
#include "nlmr/ngram/interpolation.hpp"
#include "nlmr/ngram/kneser_ney.hpp"
#include "nlmr/nlm/checkpoint.hpp"
#include "nlmr/nlm/model.hpp"
#include "nlmr/nlm/training.hpp"
#include "nlmr/quant/model.hpp"
#include "nlmr/quant/quantize.hpp"
#include "nlmr/random.hpp"
#include "nlmr/rescore/rescorer.hpp"
#include "nlmr/synth/synthesis.hpp"
#include "support/gradcheck.hpp"
#include "support/kn_oracle.hpp"
#include "support/oracles.hpp"

using namespace nlmr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

std::string Fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double Seconds(Clock::time_point since) { return std::chrono::duration<double>(Clock::now() - since).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> violated;

  void Require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      violated.push_back(what);
    }
  }
};

std::vector<std::vector<std::string>> SplitAll(std::span<const std::string> lines) {
  std::vector<std::vector<std::string>> out;
  for (const auto& l : lines) out.push_back(corpus::SplitWords(l));
  return out;
}

// Two-domain world: domain 0 is out-of-domain, domain 1 in-domain.
struct Data {
  fixture::World world = fixture::World::Make({});
  std::vector<std::string> ood_lines = world.SampleLines(0, 50000, 1);
  std::vector<std::string> id_lines = world.SampleLines(1, 5000, 2);
  std::vector<std::string> dev_lines = world.SampleLines(1, 1000, 3);
  std::vector<std::string> ood_dev_lines = world.SampleLines(0, 1000, 4);
  std::shared_ptr<const corpus::Vocabulary> vocab;
  corpus::Corpus ood, id, dev, ood_dev;

  Data() {
    std::vector<std::string> all = ood_lines;
    all.insert(all.end(), id_lines.begin(), id_lines.end());
    vocab = std::make_shared<const corpus::Vocabulary>(corpus::BuildVocab(all, 100000));
    ood = corpus::MakeCorpus("ood", ood_lines, *vocab);
    id = corpus::MakeCorpus("id", id_lines, *vocab);
    dev = corpus::MakeCorpus("dev", dev_lines, *vocab);
    ood_dev = corpus::MakeCorpus("ood_dev", ood_dev_lines, *vocab);
  }

  nlm::ModelConfig Config() const {
    nlm::ModelConfig c;
    c.vocab_size = vocab->size();
    c.embed_dim = 32;
    c.hidden_units = 64;
    c.projection_dim = 32;
    c.layers = 2;
    return c;
  }

  mixer::MixingPlan Plan(std::vector<mixer::MixingComponent> components) const {
    mixer::MixingPlan p;
    p.components = std::move(components);
    p.batch_size = 16;
    p.unroll_length = 20;
    return p;
  }

  // Short validation interval for the small in-domain runs.
  static nlm::TrainOptions Adaptation() {
    nlm::TrainOptions o;
    o.learning_rate = 1.0;
    o.steps_per_epoch = 500;
    o.max_epochs = 200;
    return o;
  }

  std::vector<double> EmWeights(const ngram::NGramModel& kn_ood, const ngram::NGramModel& kn_id) const {
    const std::vector<const SentenceScorer*> comps{&kn_ood, &kn_id};
    const std::vector<double> init{0.5, 0.5};
    return ngram::OptimizeWeights(comps, dev, init).weights;
  }
};

class Context {
 public:
  explicit Context(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  Data& data() {
    if (!data_) data_ = std::make_unique<Data>();
    return *data_;
  }
  const fs::path& dir() const { return dir_; }

  const ngram::NGramModel& KnOod() { return Kn(kn_ood_, data().ood); }
  const ngram::NGramModel& KnId() { return Kn(kn_id_, data().id); }

  const nlm::Parameters& Ood() { return Model(ood_, "ood.ckpt", [&] { return TrainOod(); }); }
  const nlm::Parameters& PtMix() { return Model(ptmix_, "ptmix.ckpt", [&] { return TrainPtMix(); }); }

 private:
  const ngram::NGramModel& Kn(std::unique_ptr<ngram::NGramModel>& slot, const corpus::Corpus& c) {
    if (!slot) slot = std::make_unique<ngram::NGramModel>(ngram::EstimateKneserNey(c, data().vocab, 3));
    return *slot;
  }

  const nlm::Parameters& Model(std::unique_ptr<nlm::Parameters>& slot, const std::string& file,
                               const std::function<nlm::Parameters()>& train) {
    if (slot) return *slot;
    const auto path = dir_ / file;
    if (fs::exists(path)) {
      slot = std::make_unique<nlm::Parameters>(nlm::LoadParameters(path));
    } else {
      slot = std::make_unique<nlm::Parameters>(train());
      nlm::SaveParameters(path, *slot);
    }
    return *slot;
  }

  nlm::Parameters TrainOod() {
    auto& d = data();
    nlm::TrainOptions o;
    o.learning_rate = 1.0;
    o.max_epochs = 12;
    return nlm::Train(d.Config(), d.Plan({{d.ood, 1.0}}), d.ood_dev, o).params;
  }

  nlm::Parameters TrainPtMix() {
    auto& d = data();
    const auto w = d.EmWeights(KnOod(), KnId());
    return nlm::FineTune(Ood(), d.Plan({{d.ood, w[0]}, {d.id, w[1]}}), d.dev, Data::Adaptation()).params;
  }

  fs::path dir_;
  std::unique_ptr<Data> data_;
  std::unique_ptr<ngram::NGramModel> kn_ood_, kn_id_;
  std::unique_ptr<nlm::Parameters> ood_, ptmix_;
};

double DevPpl(const nlm::Parameters& p, const corpus::Corpus& dev) { return nlm::EvaluateCorpus(p, dev).perplexity; }

Outcome DomainAdaptation(Context& ctx) {
  auto& d = ctx.data();
  const auto w = d.EmWeights(ctx.KnOod(), ctx.KnId());
  const double ood = DevPpl(ctx.Ood(), d.dev);
  const double ptmix = DevPpl(ctx.PtMix(), d.dev);
  const auto opts = Data::Adaptation();
  const double id = DevPpl(nlm::Train(d.Config(), d.Plan({{d.id, 1.0}}), d.dev, opts).params, d.dev);
  const double ft = DevPpl(nlm::FineTune(ctx.Ood(), d.Plan({{d.id, 1.0}}), d.dev, opts).params, d.dev);
  const double mix =
      DevPpl(nlm::Train(d.Config(), d.Plan({{d.ood, w[0]}, {d.id, w[1]}}), d.dev, opts).params, d.dev);

  Outcome o;
  o.detail = Fmt("dev ppl ood=%.2f id=%.2f finetune=%.2f mix=%.2f pretrain+mix=%.2f (mix weights %.3f/%.3f)", ood, id,
                 ft, mix, ptmix, w[0], w[1]);
  o.Require(ood > id, "ood > id");
  o.Require(id > ft, "id > finetune");
  o.Require(ft >= mix, "finetune >= mix");
  o.Require(mix >= ptmix, "mix >= pretrain+mix");
  o.Require(ptmix <= std::min({ood, id, ft, mix}), "pretrain+mix is the minimum");
  return o;
}

Outcome MixingStatistics(Context& ctx) {
  auto& d = ctx.data();
  auto plan = d.Plan({{d.ood, 0.78}, {d.id, 0.22}});
  plan.seed = 5;
  mixer::Sampler sampler(plan);
  std::vector<double> counts(2, 0.0);
  for (int i = 0; i < 100000; ++i) counts[sampler.DrawComponent()] += 1;
  const double chi = testing::ChiSquare(counts, {0.78, 0.22});

  plan.record_draws = true;
  mixer::Sampler a(plan), b(plan);
  bool identical = true;
  for (int i = 0; i < 2000 && identical; ++i) {
    const auto x = a.Next();
    const auto y = b.Next();
    identical = x.inputs == y.inputs && x.targets == y.targets && x.reset == y.reset && x.corpus_tag == y.corpus_tag;
  }
  const auto da = a.draws(), db = b.draws();
  identical = identical && da.size() == db.size() &&
              std::equal(da.begin(), da.end(), db.begin(), [](const mixer::Draw& p, const mixer::Draw& q) {
                return p.component == q.component && p.sentence == q.sentence;
              });

  Outcome o;
  o.detail = Fmt("draws %.0f/%.0f chi2=%.3f (limit %.3f), 2000 batches rerun %s", counts[0], counts[1], chi,
                 testing::kChiSquare1Dof99, identical ? "identical" : "differ");
  o.Require(chi < testing::kChiSquare1Dof99, "chi-square at alpha 0.01");
  o.Require(identical, "same-seed rerun identical");
  return o;
}

Outcome SelfNormalization(Context& ctx) {
  auto& d = ctx.data();
  const auto plan = d.Plan({{d.ood, 1.0}});
  auto opts = Data::Adaptation();
  opts.objective = nlm::Objective::kNce;
  opts.nce.noise_samples = 64;
  opts.nce.unigram_power = 0.75;
  const auto nce = nlm::EvaluateCorpus(nlm::Train(d.Config(), plan, d.ood_dev, opts).params, d.ood_dev);
  opts.objective = nlm::Objective::kSoftmax;
  const auto ce = nlm::EvaluateCorpus(nlm::Train(d.Config(), plan, d.ood_dev, opts).params, d.ood_dev);

  const double self = nce.perplexity_unnormalized / nce.perplexity;
  const double rel = nce.perplexity / ce.perplexity;
  Outcome o;
  o.detail = Fmt("nce ppl=%.3f unnormalized=%.3f softmax ppl=%.3f; unnorm/norm=%.4f nce/softmax=%.4f |lnZ gap|=%.4f",
                 nce.perplexity, nce.perplexity_unnormalized, ce.perplexity, self, rel, nce.mean_abs_lnz_gap);
  o.Require(self >= 0.90 && self <= 1.10, "unnormalized/normalized in [0.90, 1.10]");
  o.Require(rel >= 0.90 && rel <= 1.10, "nce/softmax in [0.90, 1.10]");
  o.Require(nce.mean_abs_lnz_gap < 0.1, "mean |lnZ gap| < 0.1");
  return o;
}

Outcome Latency(Context&) {
  const auto params = nlm::InitParameters<float>(nlm::ModelConfig::Large(60000), 1);
  const nlm::FloatModel model(params);
  Rng rng(1);
  std::vector<double> unnorm, norm;
  for (int h = 0; h < 40; ++h) {
    std::vector<TokenId> toks{1};
    for (int i = 0; i < 12; ++i) toks.push_back(static_cast<TokenId>(5 + rng.Below(59990)));
    toks.push_back(2);
    for (auto mode : {nlm::ScoreMode::kUnnormalized, nlm::ScoreMode::kNormalized}) {
      const auto start = Clock::now();
      const auto s = nlm::ScoreSequence(model, toks, mode);
      const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
      if (!std::isfinite(s.total)) throw NumericError("non-finite latency score");
      (mode == nlm::ScoreMode::kUnnormalized ? unnorm : norm).push_back(ms);
    }
  }
  const auto ru = eval::LatencyReport(unnorm).counts;
  const auto rn = eval::LatencyReport(norm).counts;
  const double speedup = rn.at("p50") / ru.at("p50");

  Outcome o;
  o.detail = Fmt("|V|=60000 per-hypothesis ms: unnormalized p50=%.2f p90=%.2f, full softmax p50=%.2f p90=%.2f, "
                 "speedup %.2fx; matvec [%s]",
                 ru.at("p50"), ru.at("p90"), rn.at("p50"), rn.at("p90"), speedup, quant::KernelName());
  o.Require(speedup >= 5.0, "unnormalized >= 5x faster at p50");

  for (auto [rows, cols] : {std::pair<int, int>{512, 512}, {512, 2048}, {1024, 4096}, {2048, 2048}}) {
    Eigen::MatrixXf w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(rng.Uniform(-0.1, 0.1));
    const auto q = quant::QuantizedMatrix::Quantize(w);
    Eigen::VectorXf x(rows), y(cols);
    for (Eigen::Index i = 0; i < rows; ++i) x[i] = static_cast<float>(rng.Uniform(-1, 1));
    std::vector<double> tf, tq;
    for (int rep = 0; rep < 200; ++rep) {
      auto s = Clock::now();
      y.noalias() = w.transpose() * x;
      tf.push_back(std::chrono::duration<double, std::micro>(Clock::now() - s).count());
      s = Clock::now();
      quant::QuantizedMatVec(q, std::span<const float>(x.data(), static_cast<std::size_t>(rows)),
                             std::span<float>(y.data(), static_cast<std::size_t>(cols)));
      tq.push_back(std::chrono::duration<double, std::micro>(Clock::now() - s).count());
    }
    const std::vector<double> p50{50};
    const double f = eval::Percentiles(tf, p50)[0], qq = eval::Percentiles(tq, p50)[0];
    o.detail += Fmt(" %dx%d float=%.1fus int16=%.1fus", rows, cols, f, qq);
    o.Require(qq <= f, Fmt("quantized matvec not slower at %dx%d", rows, cols));
  }
  return o;
}

Outcome Quantization(Context& ctx) {
  Rng rng(12);
  std::size_t checked = 0, violations = 0;
  for (int m = 0; m < 1000; ++m) {
    const auto rows = static_cast<Eigen::Index>(1 + rng.Below(m % 10 == 0 ? 700 : 64));
    const auto cols = static_cast<Eigen::Index>(1 + rng.Below(48));
    Eigen::MatrixXf w(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double centre = rng.Uniform(-10, 10) * std::pow(10.0, rng.Uniform(-3, 1));
      const double width = std::pow(10.0, rng.Uniform(-5, 2));
      const bool constant = rng.Uniform() < 0.05;
      for (Eigen::Index i = 0; i < rows; ++i) {
        w(i, j) = static_cast<float>(constant ? centre : centre + width * rng.Uniform(-1, 1));
      }
    }
    const auto q = quant::QuantizedMatrix::Quantize(w);
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double bound = q.scale(static_cast<std::size_t>(j)) / 2;
      for (Eigen::Index i = 0; i < rows; ++i) {
        ++checked;
        if (std::abs(q.Value(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) - double{w(i, j)}) > bound) {
          ++violations;
        }
      }
    }
  }

  auto& d = ctx.data();
  const nlm::FloatModel fm(ctx.PtMix());
  const auto qm = quant::QuantizedModel::FromParameters(ctx.PtMix());
  const double pf = ComputePerplexity(nlm::NeuralScorer(fm, nlm::ScoreMode::kNormalized), d.dev).perplexity;
  const double pq = ComputePerplexity(nlm::NeuralScorer(qm, nlm::ScoreMode::kNormalized), d.dev).perplexity;
  const double degradation = (pq - pf) / pf;

  Outcome o;
  o.detail = Fmt("%zu entries of 1000 matrices, %zu over scale/2; dev ppl float=%.4f int16=%.4f (%+.4f%%)", checked,
                 violations, pf, pq, 100 * degradation);
  o.Require(violations == 0, "reconstruction within scale/2");
  o.Require(degradation <= 0.01, "ppl degradation <= 1%");
  return o;
}

Outcome SyntheticData(Context& ctx) {
  auto& d = ctx.data();
  synth::SynthesisConfig cfg;
  cfg.num_sentences = 50000;
  cfg.max_length = 60;
  const auto syn = synth::GenerateSyntheticCorpus(ctx.PtMix(), synth::TokenDecoder::Words(*d.vocab), *d.vocab, cfg);
  const auto syn_corpus = corpus::MakeCorpus("syn", syn.lines, *d.vocab);
  const auto kn_syn = ngram::EstimateKneserNey(syn_corpus, d.vocab, 3);

  const double ppl_id = ComputePerplexity(ctx.KnId(), d.dev).perplexity;
  const double ppl_syn = ComputePerplexity(kn_syn, d.dev).perplexity;

  auto mixture_ppl = [&](std::vector<const SentenceScorer*> comps) {
    const std::vector<double> init(comps.size(), 1.0 / static_cast<double>(comps.size()));
    const auto em = ngram::OptimizeWeights(comps, d.dev, init);
    return std::pair(ComputePerplexity(ngram::LinearMixture(comps, em.weights), d.dev).perplexity, em.weights);
  };
  const auto [two, w2] = mixture_ppl({&ctx.KnOod(), &ctx.KnId()});
  const auto [three, w3] = mixture_ppl({&ctx.KnOod(), &ctx.KnId(), &kn_syn});

  Outcome o;
  o.detail = Fmt("kept %zu/%zu samples; KN dev ppl id=%.2f synthetic=%.2f; mixture {ood,id}=%.2f "
                 "{ood,id,syn}=%.2f (weights %.3f/%.3f/%.3f)",
                 syn.stats.kept, syn.stats.kept + syn.stats.discarded, ppl_id, ppl_syn, two, three, w3[0], w3[1],
                 w3[2]);
  o.Require(ppl_syn < ppl_id, "synthetic KN < in-domain KN");
  o.Require(three < two, "adding synthetic lowers mixture ppl");
  return o;
}

// Weak first pass: a bigram on a small in-domain slice.
ngram::NGramModel WeakFirstPass(Data& d) {
  const std::vector<std::string> slice(d.id_lines.begin(), d.id_lines.begin() + 500);
  return ngram::EstimateKneserNey(corpus::MakeCorpus("weak", slice, *d.vocab), d.vocab, 2);
}

Outcome Rescoring(Context& ctx) {
  auto& d = ctx.data();
  const auto weak = WeakFirstPass(d);
  const rescore::NGramRescoringLm first_pass(weak);
  const auto refs = SplitAll(d.world.SampleLines(1, 1000, 5));
  const std::vector<std::string> confusions(d.world.words().begin(), d.world.words().end());
  const auto lists = fixture::MakeNBestLists(refs, confusions, first_pass, {});
  const fixture::TrueLm truth(d.world, 1);

  std::vector<std::vector<std::string>> before, after;
  std::size_t rank_mismatch = 0;
  for (const auto& list : lists) {
    before.push_back(list.hyps.front().words);
    auto rescored = list;
    rescore::RescoreNBest(truth, rescored, {});
    after.push_back(rescored.hyps.front().words);

    auto passthrough = list;
    rescore::RescoreConfig zero;
    zero.lm_weight = 0.0;
    rescore::RescoreNBest(truth, passthrough, zero);
    for (const auto& h : passthrough.hyps) rank_mismatch += h.new_rank != h.first_pass_rank;
  }
  const auto wb = eval::Wer(refs, before);
  const auto wa = eval::Wer(refs, after);

  Outcome o;
  o.detail = Fmt("%zu utterances; top-1 WER first pass=%.4f rescored=%.4f (WERR %.1f%%); lambda=0 rank changes %zu",
                 lists.size(), wb.rate(), wa.rate(), 100 * eval::RelativeReduction(wb.rate(), wa.rate()),
                 rank_mismatch);
  o.Require(wa.rate() < wb.rate(), "rescoring strictly reduces WER");
  o.Require(rank_mismatch == 0, "lambda=0 reproduces first-pass ranking");
  return o;
}

Outcome ClassTags(Context& ctx) {
  auto& d = ctx.data();
  const nlm::FloatModel model(ctx.PtMix());
  const rescore::NeuralRescoringLm nlm_lm(model, *d.vocab, nlm::ScoreMode::kUnnormalized);
  const std::vector<std::string> world_words(d.world.words().begin(), d.world.words().end());
  const auto names = fixture::PseudoWords(50, 3, world_words);

  Rng rng(8);
  auto pick = [&](std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(rng.Uniform() < 0.3 ? names[rng.Below(names.size())] : world_words[rng.Below(world_words.size())]);
    }
    return out;
  };
  std::size_t held = 0;
  for (int t = 0; t < 100; ++t) {
    const auto prefix = pick(rng.Below(6));
    const auto span = pick(1 + rng.Below(3));
    const auto next = pick(1).front();
    held += rescore::StatePassthroughCheck(nlm_lm, prefix, span, next);
  }

  const auto weak = WeakFirstPass(d);
  const rescore::NGramRescoringLm first_pass(weak);
  const auto sentences = SplitAll(d.world.SampleLines(1, 500, 6));
  const auto fx = fixture::MakeEntityFixture(sentences, names, world_words, first_pass, {});
  auto top_words = [&](std::vector<rescore::NBestList> lists) {
    std::vector<std::vector<std::string>> out;
    for (auto& l : lists) {
      rescore::RescoreNBest(nlm_lm, l, {});
      out.push_back(l.hyps.front().words);
    }
    return out;
  };
  const auto tagged = eval::EntityWer(fx.refs, top_words(fx.tagged));
  const auto untagged = eval::EntityWer(fx.refs, top_words(fx.untagged));

  Outcome o;
  o.detail = Fmt("passthrough held on %zu/100 spans; entity WER tagged=%.4f untagged=%.4f over %zu entity words",
                 held, tagged.rate(), untagged.rate(), tagged.ref_words);
  o.Require(held == 100, "state passthrough on every span");
  o.Require(tagged.rate() <= untagged.rate(), "tagged entity WER <= untagged");
  return o;
}

Outcome NumericalCore(Context& ctx) {
  Outcome o;
  std::size_t checked = 0, failures = 0;
  double worst = 0;
  for (auto obj : {nlm::Objective::kSoftmax, nlm::Objective::kNce}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto r = testing::CheckGradients(obj, seed);
      checked += r.checked;
      failures += r.failures;
      worst = std::max(worst, r.worst_ratio);
    }
  }
  o.Require(failures == 0, "gradients within 1e-4 relative");

  // Softmax audit on a model with spread-out logits, float and quantized.
  auto p = nlm::InitParameters<float>(nlm::ModelConfig::Desk(500), 4);
  Rng rng(4);
  for (Eigen::Index i = 0; i < p.output_bias.size(); ++i) p.output_bias(i, 0) = static_cast<float>(rng.Uniform(-3, 3));
  p.output_weight *= 20.0f;
  const nlm::FloatModel fm(p);
  const auto qm = quant::QuantizedModel::FromParameters(p);
  double audit = 0;
  for (const nlm::NeuralModel* m : {static_cast<const nlm::NeuralModel*>(&fm), static_cast<const nlm::NeuralModel*>(&qm)}) {
    for (int t = 0; t < 50; ++t) {
      auto state = m->ZeroState();
      nlm::Vector c;
      for (std::size_t k = 0; k <= rng.Below(8); ++k) c = m->Step(state, static_cast<TokenId>(rng.Below(500)));
      double total = 0;
      for (TokenId w = 0; w < 500; ++w) total += std::exp(m->LogProbNormalized(c, w));
      audit = std::max(audit, std::abs(total - 1.0));
    }
  }
  o.Require(audit <= 1e-6, "softmax sums to 1 within 1e-6");

  // Kneser-Ney against the oracle on a 20-sentence fixture.
  auto& d = ctx.data();
  const auto lines = d.world.SampleLines(1, 20, 9);
  const auto vocab = std::make_shared<const corpus::Vocabulary>(corpus::BuildVocab(lines, 1000));
  const auto c = corpus::MakeCorpus("kn", lines, *vocab);
  double kn_worst = 0;
  std::size_t kn_checked = 0;
  for (int order = 2; order <= 3; ++order) {
    for (bool fixed : {false, true}) {
      std::vector<double> disc;
      if (fixed) disc.assign(static_cast<std::size_t>(order), 0.6);
      ngram::KneserNeyOptions opts;
      opts.fixed_discounts = disc;
      const auto m = ngram::EstimateKneserNey(c, vocab, order, opts);
      const testing::KnOracle oracle(c, *vocab, order, disc);
      std::vector<std::vector<TokenId>> contexts{{}};
      for (int n = 1; n < order; ++n) {
        for (auto& g : m.SortedNGrams(n)) contexts.push_back(std::move(g));
      }
      for (const auto& ctx_ids : contexts) {
        for (auto w : m.PredictableIds()) {
          kn_worst = std::max(kn_worst, std::abs(m.Prob(ctx_ids, w) - oracle.Prob(ctx_ids, w)));
          ++kn_checked;
        }
      }
    }
  }
  o.Require(kn_worst <= 1e-9, "KN matches oracle within 1e-9");

  o.detail = Fmt("gradcheck %zu entries, %zu failures, worst ratio %.3f; softmax audit max |sum-1|=%.2e; KN oracle "
                 "%zu probabilities, max diff %.2e",
                 checked, failures, worst, audit, kn_checked, kn_worst);
  return o;
}

std::vector<std::string> RandomWords(Rng& rng, std::size_t max_len, std::size_t alphabet) {
  std::vector<std::string> out(rng.Below(max_len + 1));
  for (auto& w : out) w = std::string(1, static_cast<char>('a' + rng.Below(alphabet)));
  return out;
}

Outcome Metrics(Context&) {
  Outcome o;
  Rng rng(10);
  std::size_t cost_mismatch = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto ref = RandomWords(rng, 15, 5);
    const auto hyp = RandomWords(rng, 15, 5);
    if (eval::AlignmentCost(eval::Align(ref, hyp)) != testing::EditDistance(ref, hyp)) ++cost_mismatch;
  }
  o.Require(cost_mismatch == 0, "alignment cost equals DP oracle");

  std::size_t pure = 0, changed = 0;
  for (int t = 0; t < 3000; ++t) {
    eval::TaggedReference r;
    r.words = RandomWords(rng, 12, 4);
    r.words.push_back("n");
    for (std::size_t i = 0; i < r.words.size(); ++i) r.entity.push_back(i + 1 == r.words.size() || rng.Uniform() < 0.4);
    const std::vector<eval::TaggedReference> refs{r};
    const std::vector<std::vector<std::string>> hyp{RandomWords(rng, 12, 4)};
    const auto pos = rng.Below(hyp[0].size() + 1);
    auto more = hyp;
    more[0].insert(more[0].begin() + static_cast<long>(pos), "<extra>");
    bool inserted = false;
    for (const auto& op : eval::Align(r.words, more[0])) {
      inserted = inserted || (op.hyp_index == static_cast<int>(pos) && op.kind == eval::EditKind::kInsertion);
    }
    if (!inserted) continue;
    ++pure;
    const auto a = eval::EntityWer(refs, hyp);
    const auto b = eval::EntityWer(refs, more);
    changed += a.substitutions != b.substitutions || a.deletions != b.deletions || a.ref_words != b.ref_words;
  }
  o.Require(changed == 0 && pure > 0, "entity WER unchanged by pure insertions");

  std::size_t pct_mismatch = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> v(1 + rng.Below(300));
    for (auto& x : v) x = rng.Uniform(0, 1000);
    const std::vector<double> ps{50, 90, 99, rng.Uniform(0, 100)};
    const auto got = eval::Percentiles(v, ps);
    for (std::size_t i = 0; i < ps.size(); ++i) pct_mismatch += got[i] != testing::NearestRank(v, ps[i]);
    const auto rep = eval::LatencyReport(v).counts;
    pct_mismatch += rep.at("p50") != testing::NearestRank(v, 50);
    pct_mismatch += rep.at("p90") != testing::NearestRank(v, 90);
  }
  o.Require(pct_mismatch == 0, "percentiles equal nearest-rank oracle");

  o.detail = Fmt("alignment mismatches %zu/1000; %zu pure insertions, %zu changed entity WER; percentile mismatches %zu",
                 cost_mismatch, pure, changed, pct_mismatch);
  return o;
}

struct Criterion {
  const char* name;
  Outcome (*run)(Context&);
};

const Criterion kCriteria[] = {
    {"domain-adaptation ordering", DomainAdaptation},
    {"data-mixing statistics", MixingStatistics},
    {"self-normalization", SelfNormalization},
    {"latency", Latency},
    {"quantization", Quantization},
    {"synthetic data", SyntheticData},
    {"rescoring", Rescoring},
    {"class-tag handling", ClassTags},
    {"numerical core", NumericalCore},
    {"metrics", Metrics},
};

fs::path ResultFile(const fs::path& dir, int n) { return dir / ("criterion" + std::to_string(n) + ".txt"); }

bool RunCriterion(Context& ctx, int n) {
  const auto& c = kCriteria[n - 1];
  const auto start = Clock::now();
  Outcome o;
  try {
    o = c.run(ctx);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("error: ") + e.what();
  }
  std::string line = Fmt("criterion %2d %-28s %s  %s [%.0fs]", n, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                         Seconds(start));
  if (!o.violated.empty()) {
    line += "; violated:";
    for (const auto& v : o.violated) line += " {" + v + "}";
  }
  std::cout << line << std::endl;
  std::ofstream(ResultFile(ctx.dir(), n)) << line << '\n';
  return o.pass;
}

bool Setup(Context& ctx) {
  const auto start = Clock::now();
  for (int n = 1; n <= 10; ++n) fs::remove(ResultFile(ctx.dir(), n));
  ctx.PtMix();
  std::cout << Fmt("setup: shared models ready in %s [%.0fs]", ctx.dir().string().c_str(), Seconds(start))
            << std::endl;
  return true;
}

bool Summary(const fs::path& dir) {
  bool ok = true;
  for (int n = 1; n <= 10; ++n) {
    std::ifstream in(ResultFile(dir, n));
    std::string line;
    if (!std::getline(in, line)) {
      line = Fmt("criterion %2d %-28s FAIL  not run", n, kCriteria[n - 1].name);
    }
    ok = ok && line.find(" PASS ") != std::string::npos;
    std::cout << line << '\n';
  }
  std::cout << (ok ? "all criteria passed" : "some criteria failed") << std::endl;
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: acceptance (setup|summary|all|1..10) <dir>\n";
    return 1;
  }
  const std::string what = argv[1];
  const fs::path dir = argv[2];
  try {
    if (what == "summary") return Summary(dir) ? 0 : 1;
    Context ctx(dir);
    if (what == "setup") return Setup(ctx) ? 0 : 1;
    if (what == "all") {
      bool ok = Setup(ctx);
      for (int n = 1; n <= 10; ++n) ok = RunCriterion(ctx, n) && ok;
      return Summary(dir) && ok ? 0 : 1;
    }
    const int n = std::stoi(what);
    if (n < 1 || n > 10) throw std::out_of_range(what);
    return RunCriterion(ctx, n) ? 0 : 1;
  } catch (const std::invalid_argument&) {
    std::cerr << "unknown stage '" << what << "'\n";
    return 1;
  } catch (const std::out_of_range&) {
    std::cerr << "criterion must be 1..10\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
