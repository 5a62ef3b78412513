#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "nlmr/nlm/checkpoint.hpp"
#include "nlmr/nlm/training.hpp"
#include "nlmr/quant/model.hpp"
#include "nlmr/random.hpp"
#include "support/toy.hpp"

using namespace nlmr;
using namespace nlmr::quant;

namespace {

Eigen::MatrixXf RandomMatrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1, double hi = 1) {
  Eigen::MatrixXf m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<float>(rng.Uniform(lo, hi));
  }
  return m;
}

}  // namespace

TEST_CASE("constant column reconstructs exactly") {
  Eigen::MatrixXf m(5, 2);
  m.col(0).setConstant(3.5f);
  m.col(1) << -1, 0, 1, 2, 3;
  const auto q = QuantizedMatrix::Quantize(m);
  CHECK(q.scale(0) == 0.0);
  CHECK(q.shift(0) == 3.5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(q.Int(i, 0) == 0);
    CHECK(q.Value(i, 0) == 3.5);
  }
  CHECK(q.Int(0, 1) == -32768);
  CHECK(q.Int(4, 1) == 32767);
}

TEST_CASE("reconstruction error is within half a step per column") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = RandomMatrix(rng, 64, 64, -rng.Uniform(0, 5), rng.Uniform(0, 5));
    const auto q = QuantizedMatrix::Quantize(m);
    for (std::size_t j = 0; j < 64; ++j) {
      CHECK(q.scale(j) == doctest::Approx((m.col(j).maxCoeff() - m.col(j).minCoeff()) / 65535.0));
      for (std::size_t i = 0; i < 64; ++i) {
        CHECK(std::abs(q.Value(i, j) - m(i, j)) <= q.scale(j) / 2);
      }
    }
  }
  CHECK_THROWS_AS(QuantizedMatrix::Quantize(Eigen::MatrixXf::Constant(2, 2, NAN)), NumericError);
}

TEST_CASE("half-step ties stay within the bound") {
  // Narrow columns far from zero hold few distinct floats, so exact midpoints occur.
  Rng rng(4);
  Eigen::MatrixXf m(40, 500);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double centre = rng.Uniform(-100, 100), width = std::pow(10.0, rng.Uniform(-5, -3));
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<float>(centre + width * rng.Uniform(-1, 1));
  }
  const auto q = QuantizedMatrix::Quantize(m);
  int over = 0;
  for (std::size_t j = 0; j < 500; ++j) {
    for (std::size_t i = 0; i < 40; ++i) over += std::abs(q.Value(i, j) - m(i, j)) > q.scale(j) / 2;
  }
  CHECK(over == 0);
}

TEST_CASE("per-column coding beats one global scale") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXf m = RandomMatrix(rng, 50, 8);
    for (Eigen::Index j = 0; j < 8; ++j) m.col(j) *= static_cast<float>(std::pow(10.0, static_cast<double>(j) - 4));
    const double per_col = (QuantizedMatrix::Quantize(m).DequantizeExact() - m.cast<double>()).norm();
    // Global oracle: one scale and shift for the whole matrix.
    const double lo = m.minCoeff(), hi = m.maxCoeff();
    const double scale = (hi - lo) / 65535.0, shift = lo + 32768.0 * scale;
    double global = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double code = std::clamp(std::nearbyint((m.data()[i] - shift) / scale), -32768.0, 32767.0);
      global += std::pow(code * scale + shift - m.data()[i], 2);
    }
    CHECK(per_col <= std::sqrt(global));
  }
}

TEST_CASE("quantize after dequantize is idempotent") {
  Rng rng(3);
  const auto m = RandomMatrix(rng, 33, 17, -2, 7);
  const auto q1 = QuantizedMatrix::Quantize(m);
  const auto q2 = QuantizedMatrix::Quantize(q1.Dequantize());
  CHECK(q1 == q2);
}

TEST_CASE("quantized matvec tracks the float product") {
  Rng rng(4);
  for (Eigen::Index n : {7, 64, 512, 700}) {
    const auto w = RandomMatrix(rng, n, 37, -0.3, 0.5);
    const auto q = QuantizedMatrix::Quantize(w);
    Eigen::VectorXf x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = static_cast<float>(rng.Uniform(-1, 1));
    const Eigen::VectorXf ref = w.transpose() * x;
    Eigen::VectorXf y(37);
    QuantizedMatVec(q, std::span<const float>(x.data(), static_cast<std::size_t>(n)), std::span<float>(y.data(), 37));
    CHECK((y - ref).norm() / ref.norm() < 1e-2);

    Eigen::VectorXf zero = Eigen::VectorXf::Zero(n);
    QuantizedMatVec(q, std::span<const float>(zero.data(), static_cast<std::size_t>(n)), std::span<float>(y.data(), 37));
    CHECK(y.cwiseAbs().maxCoeff() == 0.0f);
  }
}

TEST_CASE("integer accumulation survives worst-case codes") {
  CHECK(WorstCaseBlockSum() < (std::int64_t{1} << 31));
  for (std::size_t n : {4096u, 4096u + 96u, 9000u}) {
    Eigen::MatrixXf w = Eigen::MatrixXf::Constant(static_cast<Eigen::Index>(n), 2, -1.0f);
    w(0, 0) = 1.0f;
    w(0, 1) = 1.0f;
    w.col(1).tail(n / 2).setConstant(1.0f);
    const auto q = QuantizedMatrix::Quantize(w);
    std::vector<float> x(n, -1.0f);
    x[0] = 1.0f;
    const auto a = QuantizeActivation(x);
    CHECK(a.Code(1) == -32767);
    for (std::size_t j = 0; j < 2; ++j) {
      std::int64_t oracle = 0;
      for (std::size_t i = 0; i < n; ++i) oracle += static_cast<std::int64_t>(a.Code(i)) * q.Int(i, j);
      CHECK(IntegerDot(q, j, a) == oracle);
    }
  }
}

TEST_CASE("quantized model scores close to the float model") {
  const auto vocab = testing::ToyVocab();
  const auto train = corpus::MakeCorpus("train", testing::ToyLines(400, 5), vocab);
  const auto dev = corpus::MakeCorpus("dev", testing::ToyLines(80, 6), vocab);
  nlm::ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.embed_dim = 16;
  cfg.hidden_units = 32;
  cfg.projection_dim = 16;
  mixer::MixingPlan plan;
  plan.components.push_back({std::cref(train), 1.0});
  plan.batch_size = 8;
  plan.unroll_length = 10;
  nlm::TrainOptions opt;
  opt.max_epochs = 2;
  const auto trained = nlm::Train(cfg, plan, dev, opt);

  nlm::FloatModel fm(trained.params);
  const auto qm = QuantizedModel::FromParameters(trained.params);
  const auto pf = ComputePerplexity(nlm::NeuralScorer(fm, nlm::ScoreMode::kNormalized), dev).perplexity;
  const auto pq = ComputePerplexity(nlm::NeuralScorer(qm, nlm::ScoreMode::kNormalized), dev).perplexity;
  CHECK(std::abs(pq - pf) / pf <= 0.01);

  nlm::Vector c = nlm::Vector::Constant(16, 0.25f);
  nlm::Vector logits;
  qm.Logits(c, logits);
  for (TokenId w = 0; w < static_cast<TokenId>(vocab.size()); ++w) {
    CHECK(qm.Logit(c, w) == doctest::Approx(logits[w]).epsilon(1e-5));
  }

  const auto path = std::filesystem::temp_directory_path() / "nlmr_quant_test.bin";
  qm.Save(path);
  CHECK(nlm::IsQuantizedCheckpoint(path));
  const auto back = QuantizedModel::Load(path);
  CHECK(back == qm);
  CHECK_THROWS_AS(nlm::LoadParameters(path), DataError);
  std::filesystem::remove(path);
}
