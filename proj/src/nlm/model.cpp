#include "nlmr/nlm/model.hpp"

#include <cmath>

namespace nlmr::nlm {

namespace {

void CheckToken(const ModelConfig& c, TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= c.vocab_size) {
    throw DataError("token id " + std::to_string(token) + " outside model vocabulary");
  }
}

}  // namespace

bool operator==(const LmState& a, const LmState& b) {
  if (a.cell.size() != b.cell.size() || a.projected.size() != b.projected.size()) return false;
  for (std::size_t l = 0; l < a.cell.size(); ++l) {
    if (a.cell[l].size() != b.cell[l].size() || a.projected[l].size() != b.projected[l].size()) return false;
    // Bitwise comparison (NaN != NaN is fine here: states are always finite).
    if (!(a.cell[l].array() == b.cell[l].array()).all()) return false;
    if (!(a.projected[l].array() == b.projected[l].array()).all()) return false;
  }
  return true;
}

LmState NeuralModel::ZeroState() const {
  const auto& c = config();
  LmState s;
  for (std::size_t l = 0; l < c.layers; ++l) {
    s.cell.push_back(Vector::Zero(static_cast<Eigen::Index>(c.hidden_units)));
    s.projected.push_back(Vector::Zero(static_cast<Eigen::Index>(c.projection_dim)));
  }
  return s;
}

double NeuralModel::LogPartition(const Vector& context) const {
  Vector logits;
  Logits(context, logits);
  const double max = logits.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) sum += std::exp(static_cast<double>(logits[i]) - max);
  return max + std::log(sum);
}

double NeuralModel::LogProbNormalized(const Vector& context, TokenId word) const {
  CheckToken(config(), word);
  Vector logits;
  Logits(context, logits);
  const double max = logits.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) sum += std::exp(static_cast<double>(logits[i]) - max);
  return static_cast<double>(logits[word]) - max - std::log(sum);
}

double NeuralModel::LogScoreUnnormalized(const Vector& context, TokenId word) const {
  CheckToken(config(), word);
  return static_cast<double>(Logit(context, word)) - static_cast<double>(LnZOffset());
}

double NeuralModel::Score(const Vector& context, TokenId word, ScoreMode mode) const {
  return mode == ScoreMode::kNormalized ? LogProbNormalized(context, word) : LogScoreUnnormalized(context, word);
}

Vector LstmCell(const Vector& gates, Vector& cell) {
  const Eigen::Index h = cell.size();
  auto sigmoid = [](const auto& x) { return (1.0f + (-x.array()).exp()).inverse(); };
  const Vector i = sigmoid(gates.segment(0, h));
  const Vector f = sigmoid(gates.segment(h, h));
  const Vector g = gates.segment(2 * h, h).array().tanh();
  const Vector o = sigmoid(gates.segment(3 * h, h));
  cell = f.cwiseProduct(cell) + i.cwiseProduct(g);
  return o.cwiseProduct(Vector(cell.array().tanh()));
}

FloatModel::FloatModel(Parameters params) : params_(std::move(params)) { params_.config.Validate(); }

Vector FloatModel::Step(LmState& state, TokenId token) const {
  const auto& c = params_.config;
  CheckToken(c, token);
  Vector x = params_.embedding.col(token);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const auto& layer = params_.layers[l];
    Vector in(x.size() + state.projected[l].size());
    in << x, state.projected[l];
    const Vector gates = layer.weight.transpose() * in + layer.bias.col(0);
    const Vector h = LstmCell(gates, state.cell[l]);
    state.projected[l] = layer.projection.transpose() * h;
    if (c.residual && l > 0) {
      x += state.projected[l];
    } else {
      x = state.projected[l];
    }
  }
  if (!x.allFinite()) throw NumericError("non-finite activation in forward step");
  return x;
}

float FloatModel::Logit(const Vector& context, TokenId word) const {
  return params_.output_weight.col(word).dot(context) + params_.output_bias(word, 0);
}

void FloatModel::Logits(const Vector& context, Vector& out) const {
  out.noalias() = params_.output_weight.transpose() * context;
  out += params_.output_bias.col(0);
}

SequenceScore ScoreSequence(const NeuralModel& model, std::span<const TokenId> tokens, ScoreMode mode) {
  SequenceScore out;
  if (tokens.size() < 2) return out;
  LmState state = model.ZeroState();
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    const Vector c = model.Step(state, tokens[i]);
    const double s = model.Score(c, tokens[i + 1], mode);
    out.token_scores.push_back(s);
    out.total += s;
  }
  return out;
}

}  // namespace nlmr::nlm
