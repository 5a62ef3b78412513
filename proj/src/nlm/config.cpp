#include "nlmr/nlm/config.hpp"

namespace nlmr::nlm {

void ModelConfig::Validate() const {
  if (vocab_size < 1) throw Error("model config: vocab_size must be >= 1");
  if (embed_dim < 1 || layers < 1 || hidden_units < 1 || projection_dim < 1) {
    throw Error("model config: dimensions must be >= 1");
  }
  if (projection_dim > hidden_units) throw Error("model config: projection_dim must not exceed hidden_units");
}

ModelConfig ModelConfig::Desk(std::size_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  return c;
}

ModelConfig ModelConfig::Large(std::size_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = 512;
  c.layers = 2;
  c.hidden_units = 1024;
  c.projection_dim = 512;
  c.residual = true;
  return c;
}

std::map<std::string, std::string> ModelConfig::ToKeyValues() const {
  return {
      {"vocab_size", std::to_string(vocab_size)},
      {"embed_dim", std::to_string(embed_dim)},
      {"layers", std::to_string(layers)},
      {"hidden_units", std::to_string(hidden_units)},
      {"projection_dim", std::to_string(projection_dim)},
      {"residual", residual ? "1" : "0"},
      {"mode", mode == TokenMode::kWord ? "word" : "subword"},
  };
}

ModelConfig ModelConfig::FromKeyValues(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("model config: missing key " + key);
    return it->second;
  };
  auto num = [&](const std::string& key) {
    try {
      return static_cast<std::size_t>(std::stoull(get(key)));
    } catch (const std::invalid_argument&) {
      throw DataError("model config: bad value for " + key);
    }
  };
  ModelConfig c;
  c.vocab_size = num("vocab_size");
  c.embed_dim = num("embed_dim");
  c.layers = num("layers");
  c.hidden_units = num("hidden_units");
  c.projection_dim = num("projection_dim");
  c.residual = get("residual") == "1";
  const auto& mode = get("mode");
  if (mode == "word") {
    c.mode = TokenMode::kWord;
  } else if (mode == "subword") {
    c.mode = TokenMode::kSubword;
  } else {
    throw DataError("model config: unknown mode " + mode);
  }
  c.Validate();
  return c;
}

std::string ToString(Objective o) { return o == Objective::kSoftmax ? "softmax" : "nce"; }
std::string ToString(ScoreMode m) { return m == ScoreMode::kNormalized ? "normalized" : "unnormalized"; }

Objective ParseObjective(const std::string& s) {
  if (s == "softmax") return Objective::kSoftmax;
  if (s == "nce") return Objective::kNce;
  throw Error("unknown objective '" + s + "' (expected softmax or nce)");
}

ScoreMode ParseScoreMode(const std::string& s) {
  if (s == "normalized") return ScoreMode::kNormalized;
  if (s == "unnormalized") return ScoreMode::kUnnormalized;
  throw Error("unknown score mode '" + s + "' (expected normalized or unnormalized)");
}

}  // namespace nlmr::nlm
