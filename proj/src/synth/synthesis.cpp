#include "nlmr/synth/synthesis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "nlmr/corpus/corpus.hpp"
#include "nlmr/nlm/training.hpp"
#include "nlmr/random.hpp"

namespace nlmr::synth {

TokenDecoder TokenDecoder::Words(const corpus::Vocabulary& vocab) {
  TokenDecoder d;
  d.vocab_ = &vocab;
  return d;
}

TokenDecoder TokenDecoder::Subwords(const corpus::SubwordCodec& codec) {
  TokenDecoder d;
  d.codec_ = &codec;
  return d;
}

std::size_t TokenDecoder::model_vocab_size() const {
  return vocab_ ? vocab_->size() : codec_->size() + static_cast<std::size_t>(corpus::kSubwordIdOffset);
}

// Subword models use the fixed reserved ids of SubwordVocabulary.
TokenId TokenDecoder::eos() const { return vocab_ ? vocab_->eos() : 2; }

bool TokenDecoder::Masked(TokenId id) const {
  if (vocab_) {
    return id == vocab_->bos() || id == vocab_->class_open() || id == vocab_->class_close();
  }
  return id < corpus::kSubwordIdOffset && id != eos();
}

std::string TokenDecoder::Decode(std::span<const TokenId> ids) const {
  if (vocab_) {
    std::string out;
    for (TokenId id : ids) {
      if (!out.empty()) out += ' ';
      out += vocab_->Word(id);
    }
    return out;
  }
  std::vector<TokenId> symbols;
  for (TokenId id : ids) symbols.push_back(id - corpus::kSubwordIdOffset);
  std::string text = codec_->Decode(symbols);
  // Normalize whitespace so lines are plain space-separated words.
  std::string out;
  for (const auto& w : corpus::SplitWords(text)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<std::string> SampleSentences(const nlm::Parameters& params, const TokenDecoder& decoder,
                                         const SynthesisConfig& config) {
  if (!(config.temperature > 0)) throw Error("temperature must be positive");
  if (config.max_length < 1) throw Error("max_length must be at least 1");
  if (config.batch_size < 1) throw Error("batch_size must be at least 1");
  const std::size_t vocab = params.config.vocab_size;
  if (vocab != decoder.model_vocab_size()) {
    throw DataError("model vocabulary size " + std::to_string(vocab) + " does not match the decoder's " +
                    std::to_string(decoder.model_vocab_size()));
  }
  std::vector<bool> masked(vocab);
  for (std::size_t w = 0; w < vocab; ++w) masked[w] = decoder.Masked(static_cast<TokenId>(w));
  const TokenId bos = 1;  // <s> has id 1 in both word and subword vocabularies
  const TokenId eos = decoder.eos();
  const double inv_t = 1.0 / config.temperature;

  std::vector<std::string> out;
  out.reserve(config.num_sentences);
  std::vector<double> probs(vocab);
  for (std::size_t start = 0; start < config.num_sentences; start += config.batch_size) {
    const std::size_t lanes = std::min(config.batch_size, config.num_sentences - start);
    std::vector<Rng> rngs;
    for (std::size_t b = 0; b < lanes; ++b) rngs.emplace_back(MixSeed(config.seed, start + b));
    std::vector<std::vector<TokenId>> samples(lanes);
    std::vector<bool> done(lanes, false);
    std::vector<TokenId> inputs(lanes, bos);
    std::vector<std::uint8_t> reset(lanes, 1);
    auto carry = nlm::CarryState<float>::Zero(params.config, lanes);
    Eigen::MatrixXf logits;
    for (std::size_t t = 0; t < config.max_length; ++t) {
      const Eigen::MatrixXf ctx = nlm::StepBatch(params, inputs, reset, carry);
      std::fill(reset.begin(), reset.end(), 0);
      logits.noalias() = params.output_weight.transpose() * ctx;
      logits.colwise() += params.output_bias.col(0);
      bool any = false;
      for (std::size_t b = 0; b < lanes; ++b) {
        if (done[b]) continue;
        const auto col = logits.col(static_cast<Eigen::Index>(b));
        double max = -std::numeric_limits<double>::infinity();
        for (std::size_t w = 0; w < vocab; ++w) {
          if (!masked[w]) max = std::max(max, static_cast<double>(col[static_cast<Eigen::Index>(w)]) * inv_t);
        }
        double total = 0.0;
        for (std::size_t w = 0; w < vocab; ++w) {
          probs[w] = masked[w] ? 0.0 : std::exp(static_cast<double>(col[static_cast<Eigen::Index>(w)]) * inv_t - max);
          total += probs[w];
        }
        if (!std::isfinite(total)) throw NumericError("non-finite sampling distribution");
        const auto w = static_cast<TokenId>(SampleIndex(rngs[b], probs));
        if (w == eos) {
          done[b] = true;
        } else {
          samples[b].push_back(w);
          inputs[b] = w;
          any = true;
        }
      }
      if (!any) break;
    }
    for (auto& s : samples) out.push_back(decoder.Decode(s));
  }
  return out;
}

FilterResult FilterOov(std::span<const std::string> lines, const corpus::Vocabulary& vocab) {
  FilterResult r;
  for (const auto& line : lines) {
    bool ok = true;
    for (const auto& w : corpus::SplitWords(line)) {
      if (!vocab.ContainsWord(w)) {
        ok = false;
        break;
      }
    }
    if (ok) {
      r.kept.push_back(line);
    } else {
      ++r.discarded;
    }
  }
  return r;
}

SyntheticCorpus GenerateSyntheticCorpus(const nlm::Parameters& params, const TokenDecoder& decoder,
                                        const corpus::Vocabulary& target_vocab, const SynthesisConfig& config) {
  const auto samples = SampleSentences(params, decoder, config);
  auto filtered = FilterOov(samples, target_vocab);
  if (filtered.kept.empty()) throw DataError("vocabulary filter rejected all samples");
  SyntheticCorpus out;
  out.stats.kept = filtered.kept.size();
  out.stats.discarded = filtered.discarded;
  std::size_t words = 0;
  for (const auto& l : filtered.kept) words += corpus::SplitWords(l).size();
  out.stats.mean_len = static_cast<double>(words) / static_cast<double>(out.stats.kept);
  out.lines = std::move(filtered.kept);
  return out;
}

void WriteStats(const std::filesystem::path& path, const SynthesisStats& stats) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", stats.mean_len);
  out << "kept\t" << stats.kept << "\ndiscarded\t" << stats.discarded << "\nmean_len\t" << buf << "\n";
}

SynthesisStats ReadStats(const std::filesystem::path& path) {
  SynthesisStats s;
  std::size_t n = 0;
  for (const auto& line : corpus::ReadLines(path)) {
    ++n;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), n, "expected key<TAB>value");
    const auto key = line.substr(0, tab);
    const auto value = line.substr(tab + 1);
    try {
      if (key == "kept") {
        s.kept = std::stoull(value);
      } else if (key == "discarded") {
        s.discarded = std::stoull(value);
      } else if (key == "mean_len") {
        s.mean_len = std::stod(value);
      }
    } catch (const std::logic_error&) {
      throw ParseError(path.string(), n, "bad value for " + key);
    }
  }
  return s;
}

}  // namespace nlmr::synth
