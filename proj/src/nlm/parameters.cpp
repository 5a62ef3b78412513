#include "nlmr/nlm/parameters.hpp"

#include "nlmr/random.hpp"

namespace nlmr::nlm {

template <typename Real>
BasicParameters<Real> BasicParameters<Real>::Zeros(const ModelConfig& config) {
  config.Validate();
  BasicParameters p;
  p.config = config;
  const auto v = static_cast<Eigen::Index>(config.vocab_size);
  const auto h = static_cast<Eigen::Index>(config.hidden_units);
  const auto proj = static_cast<Eigen::Index>(config.projection_dim);
  p.embedding = Matrix::Zero(static_cast<Eigen::Index>(config.embed_dim), v);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const auto in = static_cast<Eigen::Index>(p.InputDim(l));
    p.layers.push_back({Matrix::Zero(in + proj, 4 * h), Matrix::Zero(4 * h, 1), Matrix::Zero(h, proj)});
  }
  p.output_weight = Matrix::Zero(proj, v);
  p.output_bias = Matrix::Zero(v, 1);
  p.lnz = Matrix::Zero(1, 1);
  return p;
}

template <typename Real>
std::vector<std::pair<std::string, typename BasicParameters<Real>::Matrix*>> BasicParameters<Real>::Tensors() {
  std::vector<std::pair<std::string, Matrix*>> out;
  out.emplace_back("embedding", &embedding);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "lstm." + std::to_string(l) + ".";
    out.emplace_back(prefix + "weight", &layers[l].weight);
    out.emplace_back(prefix + "bias", &layers[l].bias);
    out.emplace_back(prefix + "projection", &layers[l].projection);
  }
  out.emplace_back("output.weight", &output_weight);
  out.emplace_back("output.bias", &output_bias);
  out.emplace_back("nce.lnz", &lnz);
  return out;
}

template <typename Real>
std::vector<std::pair<std::string, const typename BasicParameters<Real>::Matrix*>> BasicParameters<Real>::Tensors()
    const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, m] : const_cast<BasicParameters*>(this)->Tensors()) out.emplace_back(name, m);
  return out;
}

template <typename Real>
void BasicParameters<Real>::SetZero() {
  for (auto& [_, m] : Tensors()) m->setZero();
}

template <typename Real>
std::size_t BasicParameters<Real>::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& [_, m] : Tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

template <typename Real>
bool BasicParameters<Real>::AllFinite() const {
  for (const auto& [_, m] : Tensors()) {
    if (!m->allFinite()) return false;
  }
  return true;
}

template <typename Real>
BasicParameters<Real> InitParameters(const ModelConfig& config, std::uint64_t seed) {
  auto p = BasicParameters<Real>::Zeros(config);
  Rng rng(seed);
  auto fill = [&](auto& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<Real>(rng.Uniform(-0.05, 0.05));
    }
  };
  fill(p.embedding);
  const auto h = static_cast<Eigen::Index>(config.hidden_units);
  for (auto& l : p.layers) {
    fill(l.weight);
    fill(l.projection);
    l.bias.block(h, 0, h, 1).setConstant(Real(1));  // forget gate
  }
  fill(p.output_weight);
  return p;
}

std::vector<std::string> ResolveTensorNames(const Parameters& params, const std::string& name) {
  std::vector<std::string> out;
  for (const auto& [tensor, _] : params.Tensors()) {
    if (tensor == name || tensor.rfind(name + ".", 0) == 0) out.push_back(tensor);
  }
  if (out.empty()) throw Error("no parameter tensor or layer named '" + name + "'");
  return out;
}

template struct BasicParameters<float>;
template struct BasicParameters<double>;
template BasicParameters<float> InitParameters<float>(const ModelConfig&, std::uint64_t);
template BasicParameters<double> InitParameters<double>(const ModelConfig&, std::uint64_t);

}  // namespace nlmr::nlm
