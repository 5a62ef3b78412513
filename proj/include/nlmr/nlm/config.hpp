#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "nlmr/common.hpp"

namespace nlmr::nlm {

enum class TokenMode { kWord, kSubword };
enum class Objective { kSoftmax, kNce };
enum class ScoreMode { kNormalized, kUnnormalized };

/// Embedding -> stacked LSTM-with-projection layers -> output layer.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t layers = 2;
  std::size_t hidden_units = 128;
  std::size_t projection_dim = 64;
  /// Adds each layer's input to its projected output for layers >= 1.
  bool residual = true;
  TokenMode mode = TokenMode::kWord;

  void Validate() const;

  /// Desk-scale default: embed 64, 2 x LSTMP 128/64, residual.
  static ModelConfig Desk(std::size_t vocab_size);
  /// Two LSTMP layers of 1024 cells projected to 512, residual, embed 512.
  static ModelConfig Large(std::size_t vocab_size);

  std::map<std::string, std::string> ToKeyValues() const;
  static ModelConfig FromKeyValues(const std::map<std::string, std::string>& kv);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NceConfig {
  /// Noise samples per minibatch, shared by every position of the batch.
  std::size_t noise_samples = 64;
  /// Noise distribution: (count + 1)^power, renormalized.
  double unigram_power = 0.75;
  double lnz_init = 0.0;
  bool learn_lnz = true;
};

std::string ToString(Objective o);
std::string ToString(ScoreMode m);
Objective ParseObjective(const std::string& s);
ScoreMode ParseScoreMode(const std::string& s);

}  // namespace nlmr::nlm
