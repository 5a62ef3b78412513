// nlmr: command-line driver for the rescoring pipeline.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nlmr/corpus/corpus.hpp"
#include "nlmr/corpus/subword.hpp"
#include "nlmr/corpus/vocabulary.hpp"
#include "nlmr/eval/metrics.hpp"
#include "nlmr/fixture/asr.hpp"
#include "nlmr/fixture/world.hpp"
#include "nlmr/mixer/sampler.hpp"
#include "nlmr/ngram/arpa.hpp"
#include "nlmr/ngram/interpolation.hpp"
#include "nlmr/ngram/kneser_ney.hpp"
#include "nlmr/nlm/checkpoint.hpp"
#include "nlmr/nlm/model.hpp"
#include "nlmr/nlm/training.hpp"
#include "nlmr/quant/model.hpp"
#include "nlmr/rescore/nbest.hpp"
#include "nlmr/rescore/rescorer.hpp"
#include "nlmr/synth/synthesis.hpp"

using namespace nlmr;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> ReadAll(const std::vector<std::string>& paths) {
  std::vector<std::string> lines;
  for (const auto& p : paths) {
    auto more = corpus::ReadLines(p);
    lines.insert(lines.end(), more.begin(), more.end());
  }
  return lines;
}

std::shared_ptr<const corpus::Vocabulary> LoadVocab(const std::string& path) {
  return std::make_shared<const corpus::Vocabulary>(corpus::Vocabulary::Read(path));
}

void PrintReports(const std::vector<eval::EvalReport>& reports) { eval::WriteReport(std::cout, reports); }

// Token space of a neural model: a word list or a subword codec.
struct TokenSpace {
  std::string vocab_path;
  std::string codec_path;
  std::shared_ptr<const corpus::Vocabulary> vocab;
  std::optional<corpus::SubwordCodec> codec;

  void Add(CLI::App* cmd) {
    cmd->add_option("--vocab", vocab_path, "Word list (word-level model)");
    cmd->add_option("--codec", codec_path, "Subword codec (subword-level model)");
  }
  void Load() {
    if (vocab_path.empty() == codec_path.empty()) throw Error("give exactly one of --vocab and --codec");
    if (!vocab_path.empty()) {
      vocab = LoadVocab(vocab_path);
    } else {
      codec = corpus::SubwordCodec::Read(codec_path);
    }
  }
  bool subword() const { return codec.has_value(); }
  std::size_t size() const { return vocab ? vocab->size() : codec->size() + corpus::kSubwordIdOffset; }
  corpus::Corpus Make(const std::string& name, const std::vector<std::string>& lines) const {
    return vocab ? corpus::MakeCorpus(name, lines, *vocab) : corpus::MakeSubwordCorpus(name, lines, *codec);
  }
};

// A float or quantized checkpoint behind the NeuralModel interface.
struct LoadedModel {
  std::optional<nlm::FloatModel> dense;
  std::optional<quant::QuantizedModel> quantized;

  explicit LoadedModel(const std::string& path) {
    if (nlm::IsQuantizedCheckpoint(path)) {
      quantized = quant::QuantizedModel::Load(path);
    } else {
      dense.emplace(nlm::LoadParameters(path));
    }
  }
  const nlm::NeuralModel& get() const {
    return dense ? static_cast<const nlm::NeuralModel&>(*dense) : static_cast<const nlm::NeuralModel&>(*quantized);
  }
};

// ---- vocab / bpe ----------------------------------------------------------

void AddVocab(CLI::App& app) {
  auto* cmd = app.add_subcommand("vocab", "Build a word list from training text");
  auto text = std::make_shared<std::vector<std::string>>();
  auto out = std::make_shared<std::string>();
  auto size = std::make_shared<std::size_t>(60000);
  cmd->add_option("--text", *text, "Training text, one sentence per line")->required()->check(CLI::ExistingFile);
  cmd->add_option("--size", *size, "Maximum number of ordinary words")->capture_default_str();
  cmd->add_option("--out", *out, "Output word list")->required();
  cmd->callback([=] {
    const auto v = corpus::BuildVocab(ReadAll(*text), *size);
    v.Write(*out);
    std::cout << "vocab\tsize=" << v.size() << '\n';
  });
}

void AddBpe(CLI::App& app) {
  auto* cmd = app.add_subcommand("bpe", "Train a subword codec");
  auto text = std::make_shared<std::vector<std::string>>();
  auto out = std::make_shared<std::string>();
  auto merges = std::make_shared<std::size_t>(1000);
  cmd->add_option("--text", *text, "Training text")->required()->check(CLI::ExistingFile);
  cmd->add_option("--merges", *merges, "Number of merges")->capture_default_str();
  cmd->add_option("--out", *out, "Output codec file")->required();
  cmd->callback([=] {
    const auto codec = corpus::SubwordCodec::Train(ReadAll(*text), *merges);
    codec.Write(*out);
    std::cout << "bpe\tsymbols=" << codec.size() << "\tmerges=" << codec.merges().size() << '\n';
  });
}

// ---- n-gram ---------------------------------------------------------------

void AddEstimateNgram(CLI::App& app) {
  struct Opts {
    std::vector<std::string> text;
    std::string vocab, out;
    int order = 3;
    std::vector<double> discounts;
    std::vector<std::size_t> min_counts;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("estimate-ngram", "Estimate a modified Kneser-Ney model and write ARPA");
  cmd->add_option("--text", o->text, "Training text")->required()->check(CLI::ExistingFile);
  cmd->add_option("--vocab", o->vocab, "Word list")->required()->check(CLI::ExistingFile);
  cmd->add_option("--order", o->order, "N-gram order")->capture_default_str();
  cmd->add_option("--discount", o->discounts, "Fixed discount per order (default: estimated)");
  cmd->add_option("--min-count", o->min_counts, "Minimum count per order");
  cmd->add_option("--out", o->out, "Output ARPA file")->required();
  cmd->callback([o] {
    const auto vocab = LoadVocab(o->vocab);
    const auto c = corpus::MakeCorpus("train", ReadAll(o->text), *vocab);
    ngram::KneserNeyOptions opts;
    opts.fixed_discounts = o->discounts;
    opts.min_counts = o->min_counts;
    ngram::KneserNeyStats stats;
    const auto m = ngram::EstimateKneserNey(c, vocab, o->order, opts, &stats);
    ngram::WriteArpa(m, fs::path(o->out));
    for (std::size_t n = 0; n < stats.discounts.size(); ++n) {
      std::cout << "discounts\torder=" << n + 1 << "\td1=" << stats.discounts[n][0] << "\td2=" << stats.discounts[n][1]
                << "\td3+=" << stats.discounts[n][2] << (stats.fell_back[n] ? "\tfallback" : "") << '\n';
    }
  });
}

void AddOptimizeWeights(CLI::App& app) {
  struct Opts {
    std::vector<std::string> arpa, names;
    std::string dev, vocab, out;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("optimize-weights", "EM interpolation weights on a dev set");
  cmd->add_option("--arpa", o->arpa, "Component ARPA models")->required()->check(CLI::ExistingFile);
  cmd->add_option("--name", o->names, "Component names (default: file stems)");
  cmd->add_option("--dev", o->dev, "Dev text")->required()->check(CLI::ExistingFile);
  cmd->add_option("--vocab", o->vocab, "Word list shared by the components")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o->out, "Output weights file")->required();
  cmd->callback([o] {
    const auto vocab = LoadVocab(o->vocab);
    std::vector<ngram::NGramModel> models;
    for (const auto& p : o->arpa) models.push_back(ngram::ReadArpa(fs::path(p)));
    std::vector<const SentenceScorer*> comps;
    for (const auto& m : models) comps.push_back(&m);
    auto names = o->names;
    if (names.empty()) {
      for (const auto& p : o->arpa) names.push_back(fs::path(p).stem().string());
    }
    if (names.size() != comps.size()) throw Error("one --name per --arpa");
    const auto dev = corpus::MakeCorpus("dev", corpus::ReadLines(o->dev), *vocab);
    const std::vector<double> init(comps.size(), 1.0 / static_cast<double>(comps.size()));
    const auto em = ngram::OptimizeWeights(comps, dev, init);
    ngram::WriteWeights(o->out, names, em.weights);
    for (std::size_t i = 0; i < names.size(); ++i) std::cout << "weight\t" << names[i] << '\t' << em.weights[i] << '\n';
    std::cout << "em\titerations=" << em.iterations << "\tppl=" << em.perplexity_history.back() << '\n';
  });
}

std::vector<double> WeightsFor(const std::string& file, const std::vector<double>& inline_weights, std::size_t n) {
  std::vector<double> w = inline_weights;
  if (!file.empty()) {
    for (const auto& [name, value] : ngram::ReadWeights(file)) w.push_back(value);
  }
  if (w.size() != n) throw Error("need one weight per component");
  return w;
}

void AddInterpolate(CLI::App& app) {
  struct Opts {
    std::vector<std::string> arpa;
    std::string weights_file, out;
    std::vector<double> weights;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("interpolate", "Merge ARPA models into one static back-off model");
  cmd->add_option("--arpa", o->arpa, "Component ARPA models")->required()->check(CLI::ExistingFile);
  auto* wf = cmd->add_option("--weights-file", o->weights_file, "Weights file from optimize-weights");
  cmd->add_option("--weights", o->weights, "Inline weights")->excludes(wf);
  cmd->add_option("--out", o->out, "Output ARPA file")->required();
  cmd->callback([o] {
    std::vector<ngram::NGramModel> models;
    for (const auto& p : o->arpa) models.push_back(ngram::ReadArpa(fs::path(p)));
    std::vector<const ngram::NGramModel*> ptrs;
    for (const auto& m : models) ptrs.push_back(&m);
    for (const auto& m : models) {
      if (!(m.vocab() == models[0].vocab())) throw DataError("interpolate: components must share one vocabulary");
    }
    const auto w = WeightsFor(o->weights_file, o->weights, ptrs.size());
    const auto merged = ngram::InterpolateStatic(ptrs, w);
    ngram::WriteArpa(merged, fs::path(o->out));
    std::cout << "interpolate\torder=" << merged.order() << '\n';
  });
}

// ---- perplexity -----------------------------------------------------------

void AddPpl(CLI::App& app) {
  struct Opts {
    std::vector<std::string> arpa;
    std::string weights_file, model, text, mode = "normalized";
    std::vector<double> weights;
    TokenSpace space;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("ppl", "Perplexity of an n-gram model, a mixture, or a neural model");
  auto* arpa = cmd->add_option("--arpa", o->arpa, "ARPA model(s); several form a linear mixture");
  cmd->add_option("--weights-file", o->weights_file, "Mixture weights file");
  cmd->add_option("--weights", o->weights, "Inline mixture weights");
  auto* model = cmd->add_option("--model", o->model, "Neural checkpoint (float or quantized)")->excludes(arpa);
  o->space.Add(cmd);
  cmd->add_option("--mode", o->mode, "normalized | unnormalized")->capture_default_str();
  cmd->add_option("--text", o->text, "Evaluation text")->required()->check(CLI::ExistingFile);
  cmd->callback([o, model] {
    const auto lines = corpus::ReadLines(o->text);
    if (model->count() > 0) {
      o->space.Load();
      const LoadedModel m(o->model);
      if (m.get().config().vocab_size != o->space.size()) throw DataError("model and token space sizes differ");
      const auto dev = o->space.Make("text", lines);
      const nlm::NeuralScorer scorer(m.get(), nlm::ParseScoreMode(o->mode));
      PrintReports({eval::PplReport(scorer, dev, "ppl_" + o->mode)});
      return;
    }
    if (o->arpa.empty()) throw Error("give --arpa or --model");
    std::vector<ngram::NGramModel> models;
    for (const auto& p : o->arpa) models.push_back(ngram::ReadArpa(fs::path(p)));
    const auto dev = corpus::MakeCorpus("text", lines, models[0].vocab());
    if (models.size() == 1) {
      PrintReports({eval::PplReport(models[0], dev)});
      return;
    }
    std::vector<const SentenceScorer*> comps;
    for (const auto& m : models) comps.push_back(&m);
    const ngram::LinearMixture mix(comps, WeightsFor(o->weights_file, o->weights, comps.size()));
    PrintReports({eval::PplReport(mix, dev)});
  });
}

// ---- neural training ------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> corpora;  // name=path
  std::string weights = "uniform";
  std::string dev, out, log, preset = "desk", objective = "softmax";
  std::size_t embed = 0, hidden = 0, projection = 0, layers = 0;
  bool no_residual = false;
  std::size_t batch_size = 32, unroll = 20, noise_samples = 64, epochs = 10, steps_per_epoch = 0;
  double lr = 1.0, noise_power = 0.75;
  std::uint64_t seed = 1;
  int em_order = 3;
  std::vector<std::string> freeze;
  TokenSpace space;

  void Add(CLI::App* cmd, bool architecture) {
    cmd->add_option("--corpus", corpora, "Training corpus as name=path (repeatable)")->required();
    cmd->add_option("--weights", weights, "Mixing weights: comma list, 'uniform', or 'auto-em'")->capture_default_str();
    cmd->add_option("--dev", dev, "Dev text for validation (and auto-em)")->required()->check(CLI::ExistingFile);
    space.Add(cmd);
    if (architecture) {
      cmd->add_option("--preset", preset, "desk | large")->capture_default_str();
      cmd->add_option("--embed", embed, "Embedding width (overrides preset)");
      cmd->add_option("--hidden", hidden, "LSTM cells per layer (overrides preset)");
      cmd->add_option("--projection", projection, "Projection width (overrides preset)");
      cmd->add_option("--layers", layers, "Number of layers (overrides preset)");
      cmd->add_flag("--no-residual", no_residual, "Disable residual connections");
    }
    cmd->add_option("--objective", objective, "softmax | nce")->capture_default_str();
    cmd->add_option("--noise-samples", noise_samples, "NCE noise samples per minibatch")->capture_default_str();
    cmd->add_option("--noise-power", noise_power, "NCE unigram power")->capture_default_str();
    cmd->add_option("--batch-size", batch_size, "Lanes per minibatch")->capture_default_str();
    cmd->add_option("--unroll", unroll, "Truncated BPTT length")->capture_default_str();
    cmd->add_option("--lr", lr, "Initial learning rate")->capture_default_str();
    cmd->add_option("--epochs", epochs, "Maximum epochs")->capture_default_str();
    cmd->add_option("--steps-per-epoch", steps_per_epoch, "Minibatches per epoch (0: one pass)")->capture_default_str();
    cmd->add_option("--em-order", em_order, "N-gram order used by auto-em")->capture_default_str();
    cmd->add_option("--seed", seed, "Training and mixing seed")->capture_default_str();
    cmd->add_option("--out", out, "Output checkpoint")->required();
    cmd->add_option("--log", log, "Per-epoch log file");
  }

  nlm::ModelConfig Config() const {
    nlm::ModelConfig c;
    if (preset == "desk") {
      c = nlm::ModelConfig::Desk(space.size());
    } else if (preset == "large") {
      c = nlm::ModelConfig::Large(space.size());
    } else {
      throw Error("unknown preset '" + preset + "'");
    }
    if (embed) c.embed_dim = embed;
    if (hidden) c.hidden_units = hidden;
    if (projection) c.projection_dim = projection;
    if (layers) c.layers = layers;
    if (no_residual) c.residual = false;
    c.mode = space.subword() ? nlm::TokenMode::kSubword : nlm::TokenMode::kWord;
    return c;
  }

  nlm::TrainOptions Options() const {
    nlm::TrainOptions t;
    t.objective = nlm::ParseObjective(objective);
    t.nce.noise_samples = noise_samples;
    t.nce.unigram_power = noise_power;
    t.learning_rate = lr;
    t.max_epochs = epochs;
    t.steps_per_epoch = steps_per_epoch;
    t.seed = seed;
    t.freeze = freeze;
    t.on_epoch = [](const nlm::EpochRecord& e) {
      std::cout << "epoch\t" << e.epoch << "\tloss=" << e.train_loss << "\tdev_ppl=" << e.dev_ppl
                << "\tlr=" << e.learning_rate << (e.accepted ? "" : "\trejected") << std::endl;
    };
    return t;
  }
};

// Loaded corpora plus the plan that references them.
struct TrainData {
  std::vector<corpus::Corpus> corpora;
  corpus::Corpus dev;
  mixer::MixingPlan plan;
};

std::unique_ptr<TrainData> LoadTrainData(TrainArgs& a) {
  a.space.Load();
  auto d = std::make_unique<TrainData>();
  std::vector<std::vector<std::string>> texts;
  for (const auto& spec : a.corpora) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw Error("--corpus expects name=path, got '" + spec + "'");
    const std::string path = spec.substr(eq + 1);
    if (!fs::exists(path)) throw DataError("corpus file not found: " + path);
    texts.push_back(corpus::ReadLines(path));
    d->corpora.push_back(a.space.Make(spec.substr(0, eq), texts.back()));
  }
  const auto dev_lines = corpus::ReadLines(a.dev);
  d->dev = a.space.Make("dev", dev_lines);

  std::vector<double> w;
  if (a.weights == "uniform") {
    w.assign(d->corpora.size(), 1.0);
  } else if (a.weights == "auto-em") {
    if (a.space.subword()) throw Error("auto-em needs a word list");
    std::vector<ngram::NGramModel> kn;
    for (const auto& c : d->corpora) kn.push_back(ngram::EstimateKneserNey(c, a.space.vocab, a.em_order));
    std::vector<const SentenceScorer*> comps;
    for (const auto& m : kn) comps.push_back(&m);
    const std::vector<double> init(comps.size(), 1.0 / static_cast<double>(comps.size()));
    w = ngram::OptimizeWeights(comps, d->dev, init).weights;
  } else {
    std::stringstream ss(a.weights);
    for (std::string item; std::getline(ss, item, ',');) w.push_back(std::stod(item));
  }
  w = mixer::NormalizeWeights(w);
  if (w.size() != d->corpora.size()) throw Error("need one weight per corpus");
  for (std::size_t i = 0; i < w.size(); ++i) {
    d->plan.components.push_back({d->corpora[i], w[i]});
    std::cout << "mix\t" << d->corpora[i].name << "\tweight=" << w[i] << '\n';
  }
  d->plan.seed = a.seed;
  d->plan.batch_size = a.batch_size;
  d->plan.unroll_length = a.unroll;
  return d;
}

void Finish(const TrainArgs& a, const nlm::TrainResult& r) {
  nlm::SaveParameters(a.out, r.params);
  if (!a.log.empty()) {
    std::ofstream log(a.log);
    nlm::WriteTrainingLog(log, r.log);
  }
  std::cout << "result\tbest_dev_ppl=" << r.best_dev_ppl << "\tepochs=" << r.log.size()
            << (r.diverged ? "\tdiverged" : "") << '\n';
  if (r.diverged) throw NumericError("training diverged; best parameters were saved");
}

void AddTrain(CLI::App& app) {
  auto a = std::make_shared<TrainArgs>();
  auto* cmd = app.add_subcommand("train", "Train a neural LM from scratch on a corpus mixture");
  a->Add(cmd, true);
  cmd->callback([a] {
    const auto d = LoadTrainData(*a);
    Finish(*a, nlm::Train(a->Config(), d->plan, d->dev, a->Options()));
  });
}

void AddFinetune(CLI::App& app) {
  auto a = std::make_shared<TrainArgs>();
  auto init = std::make_shared<std::string>();
  auto* cmd = app.add_subcommand("finetune", "Continue training a checkpoint on a corpus mixture");
  cmd->add_option("--init", *init, "Pretrained float checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--freeze", a->freeze, "Tensor names or groups to keep fixed (embedding, lstm.0, ...)");
  a->Add(cmd, false);
  cmd->callback([a, init] {
    if (nlm::IsQuantizedCheckpoint(*init)) throw DataError("cannot fine-tune a quantized checkpoint");
    auto params = nlm::LoadParameters(*init);
    const auto d = LoadTrainData(*a);
    if (params.config.vocab_size != a->space.size()) throw DataError("checkpoint and token space sizes differ");
    Finish(*a, nlm::FineTune(std::move(params), d->plan, d->dev, a->Options()));
  });
}

// ---- quantize / sample ----------------------------------------------------

void AddQuantize(CLI::App& app) {
  struct Opts {
    std::string model, out, dev;
    TokenSpace space;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("quantize", "Convert a float checkpoint to 16-bit");
  cmd->add_option("--model", o->model, "Float checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o->out, "Output quantized checkpoint")->required();
  cmd->add_option("--dev", o->dev, "Dev text for the perplexity comparison")->check(CLI::ExistingFile);
  o->space.Add(cmd);
  cmd->callback([o] {
    if (nlm::IsQuantizedCheckpoint(o->model)) throw DataError(o->model + " is already quantized");
    const auto params = nlm::LoadParameters(o->model);
    const auto q = quant::QuantizedModel::FromParameters(params);
    q.Save(o->out);
    std::cout << "quantize\tkernel=" << quant::KernelName() << '\n';
    if (o->dev.empty()) return;
    o->space.Load();
    const auto dev = o->space.Make("dev", corpus::ReadLines(o->dev));
    const nlm::FloatModel fm(params);
    const double pf = ComputePerplexity(nlm::NeuralScorer(fm, nlm::ScoreMode::kNormalized), dev).perplexity;
    const double pq = ComputePerplexity(nlm::NeuralScorer(q, nlm::ScoreMode::kNormalized), dev).perplexity;
    std::vector<eval::EvalReport> reports(1);
    reports[0].metric = "ppl_delta";
    reports[0].value = (pq - pf) / pf;
    reports[0].counts = {{"float", pf}, {"quantized", pq}};
    PrintReports(reports);
  });
}

void AddSample(CLI::App& app) {
  struct Opts {
    std::string model, filter_vocab, out;
    TokenSpace space;
    synth::SynthesisConfig cfg;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("sample", "Sample a synthetic corpus and drop lines with OOV words");
  cmd->add_option("--model", o->model, "Float checkpoint")->required()->check(CLI::ExistingFile);
  o->space.Add(cmd);
  cmd->add_option("--filter-vocab", o->filter_vocab, "Target word list for the OOV filter")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--num", o->cfg.num_sentences, "Sentences to sample")->capture_default_str();
  cmd->add_option("--max-length", o->cfg.max_length, "Maximum tokens per sentence")->capture_default_str();
  cmd->add_option("--temperature", o->cfg.temperature, "Softmax temperature")->capture_default_str();
  cmd->add_option("--seed", o->cfg.seed, "Sampling seed")->capture_default_str();
  cmd->add_option("--batch-size", o->cfg.batch_size, "Sentences sampled in lockstep")->capture_default_str();
  cmd->add_option("--out", o->out, "Output text; statistics go to <out>.stats")->required();
  cmd->callback([o] {
    if (nlm::IsQuantizedCheckpoint(o->model)) throw DataError("sampling needs a float checkpoint");
    o->space.Load();
    const auto params = nlm::LoadParameters(o->model);
    if (params.config.vocab_size != o->space.size()) throw DataError("checkpoint and token space sizes differ");
    const auto target = corpus::Vocabulary::Read(o->filter_vocab);
    const auto decoder =
        o->space.subword() ? synth::TokenDecoder::Subwords(*o->space.codec) : synth::TokenDecoder::Words(*o->space.vocab);
    const auto syn = synth::GenerateSyntheticCorpus(params, decoder, target, o->cfg);
    corpus::WriteLines(o->out, syn.lines);
    synth::WriteStats(o->out + ".stats", syn.stats);
    std::cout << "sample\tkept=" << syn.stats.kept << "\tdiscarded=" << syn.stats.discarded
              << "\tmean_len=" << syn.stats.mean_len << "\tseed=" << o->cfg.seed << '\n';
  });
}

// ---- rescore / eval -------------------------------------------------------

std::map<std::string, std::vector<std::string>> RefsByList(const std::string& path,
                                                           const std::vector<rescore::NBestList>& lists) {
  const auto lines = corpus::ReadLines(path);
  if (lines.size() != lists.size()) {
    throw DataError("reference file has " + std::to_string(lines.size()) + " lines for " +
                    std::to_string(lists.size()) + " n-best lists");
  }
  std::map<std::string, std::vector<std::string>> refs;
  for (std::size_t i = 0; i < lines.size(); ++i) refs[lists[i].utt_id] = eval::ParseEntityTags(lines[i]).words;
  return refs;
}

std::vector<double> ParseGrid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stod(item));
  return out;
}

void AddRescore(CLI::App& app) {
  struct Opts {
    std::string nbest, model, arpa, vocab, mode = "unnormalized", out, refs;
    std::string lm_grid = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";
    std::string acoustic_grid = "0.5,0.75,1,1.25,1.5";
    rescore::RescoreConfig cfg;
    bool tune = false;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("rescore", "Rerank n-best lists with a second-pass LM");
  cmd->add_option("--nbest", o->nbest, "N-best JSONL")->required()->check(CLI::ExistingFile);
  auto* model = cmd->add_option("--model", o->model, "Word-level neural checkpoint (float or quantized)");
  cmd->add_option("--arpa", o->arpa, "ARPA model as the second pass")->excludes(model);
  cmd->add_option("--vocab", o->vocab, "Word list of the neural model");
  cmd->add_option("--mode", o->mode, "normalized | unnormalized")->capture_default_str();
  cmd->add_option("--lm-weight", o->cfg.lm_weight, "Per-word weight of the second pass")->capture_default_str();
  cmd->add_option("--acoustic-scale", o->cfg.acoustic_scale, "Acoustic score scale")->capture_default_str();
  cmd->add_option("--unk-scale", o->cfg.unk_scale, "Probability factor for <unk>")->capture_default_str();
  cmd->add_flag("--tune", o->tune, "Grid-sweep lm weight and acoustic scale against --refs");
  cmd->add_option("--refs", o->refs, "References, one per n-best list in file order")->check(CLI::ExistingFile);
  cmd->add_option("--lm-grid", o->lm_grid, "Tuning grid for --lm-weight")->capture_default_str();
  cmd->add_option("--acoustic-grid", o->acoustic_grid, "Tuning grid for --acoustic-scale")->capture_default_str();
  cmd->add_option("--out", o->out, "Output JSONL with scores, ranks and rescore_ms");
  cmd->callback([o] {
    auto lists = rescore::ReadNBestFile(o->nbest);
    std::optional<LoadedModel> neural;
    std::shared_ptr<const corpus::Vocabulary> vocab;
    std::optional<ngram::NGramModel> ngram_model;
    std::unique_ptr<rescore::RescoringLm> lm;
    if (!o->model.empty()) {
      if (o->vocab.empty()) throw Error("--model needs --vocab");
      vocab = LoadVocab(o->vocab);
      neural.emplace(o->model);
      lm = std::make_unique<rescore::NeuralRescoringLm>(neural->get(), *vocab, nlm::ParseScoreMode(o->mode));
    } else if (!o->arpa.empty()) {
      ngram_model = ngram::ReadArpa(fs::path(o->arpa));
      lm = std::make_unique<rescore::NGramRescoringLm>(*ngram_model);
    } else {
      throw Error("give --model or --arpa");
    }
    if (o->tune) {
      if (o->refs.empty()) throw Error("--tune needs --refs");
      const auto refs = RefsByList(o->refs, lists);
      const auto r = rescore::TuneWeights(*lm, lists, refs, ParseGrid(o->lm_grid), ParseGrid(o->acoustic_grid), o->cfg);
      for (const auto& [lw, as, wer] : r.grid) std::cout << "grid\tlm_weight=" << lw << "\tacoustic_scale=" << as << "\twer=" << wer << '\n';
      std::cout << "best\tlm_weight=" << r.lm_weight << "\tacoustic_scale=" << r.acoustic_scale << "\twer=" << r.wer << '\n';
      o->cfg.lm_weight = r.lm_weight;
      o->cfg.acoustic_scale = r.acoustic_scale;
    }
    std::vector<double> ms;
    for (auto& l : lists) {
      rescore::RescoreNBest(*lm, l, o->cfg);
      ms.push_back(l.rescore_ms);
    }
    if (!o->out.empty()) rescore::WriteNBestFile(o->out, lists, true);
    PrintReports({eval::LatencyReport(ms)});
  });
}

std::vector<nlohmann::json> ReadJsonLines(const std::string& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path, n, e.what());
    }
  }
  return out;
}

// Best hypothesis per list: new_rank 1 after rescoring, else the first.
std::vector<std::vector<std::string>> TopHypotheses(const std::string& path) {
  std::vector<std::vector<std::string>> out;
  for (const auto& j : ReadJsonLines(path)) {
    const auto& hyps = j.at("hyps");
    if (hyps.empty()) throw DataError(path + ": empty n-best list");
    const nlohmann::json* best = &hyps.front();
    for (const auto& h : hyps) {
      if (h.value("new_rank", 0) == 1) best = &h;
    }
    rescore::Hypothesis h;
    h.tokens = best->at("words").get<std::vector<std::string>>();
    rescore::DeriveSpans(h);
    out.push_back(h.words);
  }
  return out;
}

void AddEval(CLI::App& app) {
  struct Opts {
    std::string metric = "wer", refs, hyps, nbest, baseline;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("eval", "WER, entity WER and latency reports");
  cmd->add_option("--metric", o->metric, "wer | entity-wer | latency")->capture_default_str();
  cmd->add_option("--refs", o->refs, "References, one utterance per line ([ent]...[/ent] marks entities)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--hyps", o->hyps, "Hypotheses, one per line")->check(CLI::ExistingFile);
  cmd->add_option("--nbest", o->nbest, "N-best JSONL; its first hypothesis per list is used")
      ->check(CLI::ExistingFile);
  cmd->add_option("--baseline", o->baseline, "Baseline n-best JSONL for the relative reduction")
      ->check(CLI::ExistingFile);
  cmd->callback([o] {
    if (o->metric == "latency") {
      if (o->nbest.empty()) throw Error("latency needs --nbest with rescore_ms fields");
      std::vector<double> ms;
      for (const auto& j : ReadJsonLines(o->nbest)) {
        if (!j.contains("rescore_ms")) throw DataError(o->nbest + ": record without rescore_ms");
        ms.push_back(j["rescore_ms"].get<double>());
      }
      PrintReports({eval::LatencyReport(ms)});
      return;
    }
    if (o->refs.empty()) throw Error("--refs is required");
    std::vector<eval::TaggedReference> refs;
    for (const auto& l : corpus::ReadLines(o->refs)) refs.push_back(eval::ParseEntityTags(l));
    auto hyps_of = [&](const std::string& nbest) {
      if (!nbest.empty()) return TopHypotheses(nbest);
      if (o->hyps.empty()) throw Error("give --hyps or --nbest");
      std::vector<std::vector<std::string>> out;
      for (const auto& l : corpus::ReadLines(o->hyps)) out.push_back(corpus::SplitWords(l));
      return out;
    };
    auto score = [&](const std::vector<std::vector<std::string>>& hyps) {
      if (o->metric == "entity-wer") return eval::EntityWer(refs, hyps);
      std::vector<std::vector<std::string>> words;
      for (const auto& r : refs) words.push_back(r.words);
      return eval::Wer(words, hyps);
    };
    if (o->metric != "wer" && o->metric != "entity-wer") throw Error("unknown metric '" + o->metric + "'");
    const auto counts = score(hyps_of(o->nbest));
    std::vector<eval::EvalReport> reports{eval::WerReport(counts, o->metric)};
    if (!o->baseline.empty()) {
      const auto base = score(TopHypotheses(o->baseline));
      reports.push_back(eval::WerReport(base, o->metric + "_baseline"));
      eval::EvalReport werr;
      werr.metric = "werr";
      werr.value = eval::RelativeReduction(base.rate(), counts.rate());
      reports.push_back(werr);
    }
    PrintReports(reports);
  });
}

// ---- synthetic fixture ----------------------------------------------------

std::string TaggedLine(const eval::TaggedReference& r) {
  std::string s;
  for (std::size_t i = 0; i < r.words.size(); ++i) {
    if (i) s += ' ';
    s += r.entity[i] ? "[ent]" + r.words[i] + "[/ent]" : r.words[i];
  }
  return s;
}

void AddFixture(CLI::App& app) {
  struct Opts {
    std::string out;
    std::uint64_t seed = 7;
    std::size_t ood = 50000, id = 5000, dev = 1000, test = 1000, weak = 500;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("fixture", "Write the synthetic two-domain corpora and n-best fixtures");
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->add_option("--seed", o->seed, "World seed")->capture_default_str();
  cmd->add_option("--ood", o->ood, "Out-of-domain sentences")->capture_default_str();
  cmd->add_option("--id", o->id, "In-domain sentences")->capture_default_str();
  cmd->add_option("--dev", o->dev, "Dev sentences per domain")->capture_default_str();
  cmd->add_option("--test", o->test, "Test utterances")->capture_default_str();
  cmd->add_option("--weak", o->weak, "In-domain sentences behind the weak first-pass bigram")->capture_default_str();
  cmd->callback([o] {
    fixture::WorldConfig wc;
    wc.seed = o->seed;
    const auto world = fixture::World::Make(wc);
    const fs::path dir = o->out;
    fs::create_directories(dir);
    const auto ood = world.SampleLines(0, o->ood, 1);
    const auto id = world.SampleLines(1, o->id, 2);
    corpus::WriteLines(dir / "ood.txt", ood);
    corpus::WriteLines(dir / "id.txt", id);
    corpus::WriteLines(dir / "dev.txt", world.SampleLines(1, o->dev, 3));
    corpus::WriteLines(dir / "ood_dev.txt", world.SampleLines(0, o->dev, 4));

    std::vector<std::string> all = ood;
    all.insert(all.end(), id.begin(), id.end());
    const auto vocab = std::make_shared<const corpus::Vocabulary>(corpus::BuildVocab(all, 100000));
    vocab->Write(dir / "vocab.txt");

    const std::vector<std::string> slice(id.begin(), id.begin() + static_cast<long>(std::min(o->weak, id.size())));
    const auto weak = ngram::EstimateKneserNey(corpus::MakeCorpus("weak", slice, *vocab), vocab, 2);
    ngram::WriteArpa(weak, dir / "first_pass.arpa");
    const rescore::NGramRescoringLm first_pass(weak);
    const std::vector<std::string> confusions(world.words().begin(), world.words().end());

    auto write_asr = [&](const std::string& name, std::uint64_t sample_seed, std::uint64_t channel_seed) {
      const auto lines = world.SampleLines(1, o->test, sample_seed);
      std::vector<std::vector<std::string>> refs;
      for (const auto& l : lines) refs.push_back(corpus::SplitWords(l));
      fixture::ChannelConfig ch;
      ch.seed = channel_seed;
      rescore::WriteNBestFile(dir / (name + ".nbest.jsonl"), fixture::MakeNBestLists(refs, confusions, first_pass, ch),
                              false);
      corpus::WriteLines(dir / (name + ".refs.txt"), lines);
    };
    write_asr("asr_dev", 7, 12);
    write_asr("asr_test", 5, 11);

    const auto names = fixture::PseudoWords(50, 3, confusions);
    std::vector<std::vector<std::string>> sentences;
    for (const auto& l : world.SampleLines(1, o->test / 2, 6)) sentences.push_back(corpus::SplitWords(l));
    const auto fx = fixture::MakeEntityFixture(sentences, names, confusions, first_pass, {});
    std::vector<std::string> tagged_refs;
    for (const auto& r : fx.refs) tagged_refs.push_back(TaggedLine(r));
    corpus::WriteLines(dir / "entity.refs.txt", tagged_refs);
    rescore::WriteNBestFile(dir / "entity_tagged.nbest.jsonl", fx.tagged, false);
    rescore::WriteNBestFile(dir / "entity_untagged.nbest.jsonl", fx.untagged, false);
    std::cout << "fixture\tdir=" << dir.string() << "\tvocab=" << vocab->size() << "\tseed=" << o->seed << '\n';
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural LM training, quantization, synthesis and n-best rescoring"};
  app.set_config("--config", "", "Run-configuration file (INI; one section per command)");
  app.require_subcommand(1);
  AddVocab(app);
  AddBpe(app);
  AddEstimateNgram(app);
  AddOptimizeWeights(app);
  AddInterpolate(app);
  AddPpl(app);
  AddTrain(app);
  AddFinetune(app);
  AddQuantize(app);
  AddSample(app);
  AddRescore(app);
  AddEval(app);
  AddFixture(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
